import numpy as np

from conflictlab.mixture import GaussianMixture


def random_spd(rng: np.random.Generator, d: int) -> np.ndarray:
    a = rng.normal(size=(d, d))
    return a @ a.T + 0.5 * np.eye(d)


def random_mixture(rng: np.random.Generator, d: int, k: int) -> GaussianMixture:
    w = rng.dirichlet(np.ones(k))
    mu = rng.normal(scale=2.0, size=(k, d))
    cov = np.array([random_spd(rng, d) for _ in range(k)])
    return GaussianMixture(w, mu, cov)
