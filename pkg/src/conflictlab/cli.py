"""Command-line interface: ``conflictlab simulate | fit | check | wi``."""

from __future__ import annotations

import csv
import io
import json
import logging
import sys
import warnings
from pathlib import Path

import click
import numpy as np

from .config import ConfigError, RunConfig, load_config
from .conflict import ConflictChecker, ConflictError, prepare_check, write_result
from .mixture import GaussianMixture, MixtureError, select_bic
from .models import SimulationError, get_model
from .models.base import draw_predictive
from .svg import heatmap_svg, line_svg
from .weakinfo import WeakInformativityError, search, write_report

logger = logging.getLogger("conflictlab")

EXIT_USAGE = 1
EXIT_NUMERICAL = 2


class DataError(ValueError):
    """Malformed input data file."""


# ---------------------------------------------------------------------------
# CSV helpers


def read_csv_matrix(path) -> tuple[list[str], np.ndarray]:
    """Read a headed numeric CSV; errors name the offending line."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}, line {line}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise DataError(f"{path}, line {line}: non-numeric value in {row}") from None
            if not all(np.isfinite(vals)):
                raise DataError(f"{path}, line {line}: non-finite value")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return header, np.array(rows)


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) for v in r])
    try:
        path.write_text(buf.getvalue(), encoding="utf-8", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_json(path: Path, doc) -> None:
    try:
        path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _out_dir(cfg: RunConfig) -> Path:
    out = cfg.output_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _parse_grid(spec: str | None):
    """``10x10`` -> counts per axis; ``0.2,1,3`` -> one explicit axis; ``1,2;3,4`` -> two axes."""
    if spec is None:
        return None
    spec = spec.strip()
    try:
        if "x" in spec:
            return [int(c) for c in spec.split("x")]
        return [[float(v) for v in axis.split(",")] for axis in spec.split(";")]
    except ValueError:
        raise click.BadParameter(f"cannot parse grid {spec!r}", param_hint="--grid") from None


# ---------------------------------------------------------------------------
# commands


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML run configuration.")
@click.option("--seed", type=int, help="Random seed (overrides config).")
@click.option("--workers", type=int, help="Worker threads [env CONFLICTLAB_WORKERS, default: CPU count].")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), help="Output directory.")
@click.option("--model", type=str, help="logistic, gk_mv, boombust or external.")
@click.option("-v", "--verbose", count=True)
@click.pass_context
def main(ctx, config_path, seed, workers, out_dir, model, verbose):
    """Prior-data conflict checks and weakly informative prior search."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = {
        "config_path": config_path,
        "overrides": {
            "seed": seed,
            "workers": workers,
            "output_dir": out_dir,
            "model": model,
        },
    }


def _load(ctx, extra: dict | None = None) -> RunConfig:
    overrides = dict(ctx.obj["overrides"])
    overrides.update(extra or {})
    return load_config(ctx.obj["config_path"], overrides)


def _model(cfg: RunConfig):
    if cfg.model == "external":
        raise ConfigError("the external model only supports `fit` and `check`")
    try:
        return get_model(cfg.model, **cfg.model_options)
    except TypeError as exc:
        raise ConfigError(f"model_options: {exc}") from exc


@main.command()
@click.option("--n", "n", type=int, help="Number of (theta, summary) draws.")
@click.pass_context
def simulate(ctx, n):
    """Draw parameters from the base prior and export their summaries."""
    cfg = _load(ctx, {"simulate.n": n})
    model = _model(cfg)
    n = int(cfg.simulate.get("n", 100))
    if n < 1:
        raise ConfigError("simulate.n must be >= 1")
    rng = np.random.default_rng(cfg.seed)
    gamma = np.broadcast_to(model.gamma0, (n, model.gamma_dim))
    theta = model.sample_theta(np.array(gamma), rng)
    z, ok, names = model.simulate_export(theta, rng)
    for _ in range(200):
        bad = np.flatnonzero(~ok)
        if bad.size == 0:
            break
        theta[bad] = model.sample_theta(np.array(gamma[bad]), rng)
        z[bad], ok[bad], _ = model.simulate_export(theta[bad], rng)
    else:
        raise SimulationError("simulations keep failing")
    out = _out_dir(cfg)
    write_csv(out / "theta.csv", model.theta_names, theta)
    write_csv(out / "summaries.csv", names, z)
    click.echo(f"wrote {n} rows to {out / 'theta.csv'} and {out / 'summaries.csv'}")


@main.command()
@click.argument("data", type=click.Path(dir_okay=False))
@click.option("--max-components", type=int)
@click.pass_context
def fit(ctx, data, max_components):
    """Fit a Gaussian mixture to a CSV by BIC and save it as JSON."""
    cfg = _load(ctx, {"fit.max_components": max_components})
    header, x = read_csv_matrix(data)
    sel = select_bic(x, cfg.fit_config(), np.random.default_rng(cfg.seed))
    out = _out_dir(cfg)
    write_json(out / "mixture.json", sel.mixture.to_dict())
    write_json(
        out / "fit_report.json",
        {
            "columns": header,
            "n_rows": int(x.shape[0]),
            "selected": {"k": sel.k, "structure": sel.structure, "bic": sel.bic, "log_likelihood": sel.log_likelihood},
            "bic_table": sel.table_rows(),
        },
    )
    click.echo(f"selected k={sel.k} ({sel.structure}), BIC={sel.bic:.6g}")


def _observed(observed: str | None, z: str | None, dim: int) -> np.ndarray:
    if (observed is None) == (z is None):
        raise click.UsageError("give exactly one of --observed PATH or --z VALUES")
    if z is not None:
        try:
            vec = np.array([float(v) for v in z.split(",")])
        except ValueError:
            raise click.BadParameter(f"cannot parse {z!r}", param_hint="--z") from None
    else:
        _, mat = read_csv_matrix(observed)
        if mat.shape[0] != 1:
            raise DataError(f"{observed}: expected one observed row, got {mat.shape[0]}")
        vec = mat[0]
    if vec.size != dim:
        raise DataError(f"observed summary has {vec.size} values, model expects {dim}")
    return vec


def _external_checker(cfg: RunConfig, check_cfg, rng):
    ext = cfg.external
    try:
        path = ext["simulations"]
        p = int(ext["theta_columns"])
    except KeyError as exc:
        raise ConfigError(f"external block needs {exc}") from None
    _, sims = read_csv_matrix(path)
    R = check_cfg.n_replicates
    if sims.shape[0] <= R:
        raise DataError(f"{path}: need more than {R} rows (training rows + {R} replicate rows)")
    prior = None
    if "prior" in ext:
        prior = GaussianMixture.from_json(Path(ext["prior"]).read_text(encoding="utf-8"))
    train, rep = sims[:-R], sims[-R:]
    n_train = min(check_cfg.n_train, train.shape[0])
    train = train[:n_train]
    return ConflictChecker.from_draws(train[:, :p], train[:, p:], rep[:, p:], check_cfg, prior=prior, rng=rng)


@main.command()
@click.option("--observed", type=click.Path(dir_okay=False), help="CSV with a header and one summary row.")
@click.option("--z", type=str, help="Comma-separated observed summary.")
@click.option("--n-train", type=int)
@click.option("--replicates", type=int)
@click.pass_context
def check(ctx, observed, z, n_train, replicates):
    """Prior-data conflict check of an observed summary."""
    cfg = _load(ctx, {"check.n_train": n_train, "check.n_replicates": replicates})
    check_cfg = cfg.check_config()
    rng = np.random.default_rng(cfg.seed)
    if cfg.model == "external":
        checker = _external_checker(cfg, check_cfg, rng)
    else:
        checker = prepare_check(_model(cfg), check_cfg, rng)
    z_obs = _observed(observed, z, checker.summary_dim)
    result = checker.check(z_obs)
    write_result(result, _out_dir(cfg))
    click.echo(f"p_KL = {result.p_value:.6g}  (G_obs = {result.g_obs:.6g}, R = {result.g_replicates.size})")


@main.command()
@click.option("--n-train", type=int)
@click.option("--replicates", type=int, help="Inner replicates R per gamma.")
@click.option("--outer", type=int, help="Base-predictive draws S.")
@click.option("--alpha", type=float)
@click.option("--delta", type=float)
@click.option("--design-size", type=int)
@click.option("--grid", type=str, help="10x10 (counts), 0.2,1,3 (values) or a,b;c,d (values per axis).")
@click.pass_context
def wi(ctx, n_train, replicates, outer, alpha, delta, design_size, grid):
    """Search a prior-expansion family for weakly informative priors."""
    cfg = _load(
        ctx,
        {
            "wi.n_train": n_train,
            "wi.R": replicates,
            "wi.S": outer,
            "wi.alpha": alpha,
            "wi.delta": delta,
            "wi.design_size": design_size,
            "wi.grid": _parse_grid(grid),
        },
    )
    model = _model(cfg)
    wi_cfg = cfg.wi_config()
    report = search(model, wi_cfg, np.random.default_rng(cfg.seed))
    out = _out_dir(cfg)
    write_report(report, out)
    k = report.gamma_points.shape[1]
    if k == 1:
        (out / "wi_surface.svg").write_text(line_svg(report.gamma_points[:, 0], report.w_alpha), encoding="utf-8")
    elif k == 2:
        (out / "wi_surface.svg").write_text(
            heatmap_svg(report.gamma_points, report.w_alpha, report.grid_shape), encoding="utf-8"
        )
    best = ", ".join(f"{v:.4g}" for v in report.best_gamma)
    click.echo(
        f"best gamma = ({best}), W = {report.w_alpha.max():.4g}; "
        f"{report.satisfying_points.shape[0]} of {report.gamma_points.shape[0]} points have W > {report.delta}"
    )


NUMERICAL_ERRORS = (
    MixtureError,
    ConflictError,
    SimulationError,
    WeakInformativityError,
    np.linalg.LinAlgError,
    FloatingPointError,
)


def run(argv=None) -> int:
    """Entry point returning the exit code: 0 ok, 1 usage/config/input, 2 numerical failure."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            main.main(args=argv, prog_name="conflictlab", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except NUMERICAL_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_NUMERICAL
    except (ConfigError, DataError, OSError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_USAGE
    return 0


def entry() -> None:
    sys.exit(run())


if __name__ == "__main__":
    entry()
