"""``ssmc`` command line: config-driven experiments with CSV/JSON artifacts.

Every command reads one YAML config (see :mod:`ssmc.config`), runs the
requested analysis and writes its artifacts plus ``manifest.json`` into
the output directory.  Exit codes: 0 ok, 2 config error, 3 budget guard,
4 numeric failure.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import __version__
from ._quad import QuadratureError
from .config import (ConfigError, DominanceAnalysis, ExperimentConfig, MetastabilityAnalysis,
                     OccupationAnalysis, SimulateAnalysis, SweepAnalysis, ThetaRange, load_config)
from .core import (DiscreteDistribution, SpecError, beta, discrete, replica_seed, simulate_steps,
                   simulate_switches, uniform, validate)
from .dominance import LadderRules, PreconditionError, _jsonable, predict_dominance
from .hitting import HittingError
from .metastability import (BudgetGuardError, LimitVerdict, Source, VerdictRules, classify_ladder,
                            cutoff_coverage, ks_to_exp1, scaled_sample)
from .occupation import (AccountingError, Binning, BudgetError, DivergenceError, empirical_occupation,
                         limiting_occupation, renewal_occupation)
from .sserw import DomainError, Kind, SserwModel, chain_spec, log_m, m_closed, m_exact

EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_NUMERIC = 4

NUMERIC_ERRORS = (HittingError, DivergenceError, QuadratureError, DomainError, AccountingError,
                  ArithmeticError, np.linalg.LinAlgError)


class GuardTripped(RuntimeError):
    def __init__(self, guard: str, message: str):
        super().__init__(f"budget guard {guard} tripped: {message}")
        self.guard = guard


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17e" % float(v)
    return str(v)


class Artifacts:
    """Writes files into one directory and remembers their hashes."""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.files: dict[str, str] = {}

    def _write(self, name: str, text: str):
        data = text.encode("utf-8")
        (self.out_dir / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def csv(self, name: str, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        self._write(name, buf.getvalue())

    def json(self, name: str, obj):
        self._write(name, json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n")

    def manifest(self, *, command, config_path, config_sha256, seed, threads, overrides, wall_time):
        import numba
        import scipy

        body = {
            "command": command,
            "config": str(config_path),
            "config_sha256": config_sha256,
            "seed": seed,
            "threads": threads,
            "overrides": overrides,
            "versions": {"ssmc": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__},
            "wall_time_s": wall_time,
            "artifacts": [{"path": k, "sha256": v} for k, v in sorted(self.files.items())],
        }
        (self.out_dir / "manifest.json").write_text(json.dumps(body, sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------------------
# config -> library objects
# ---------------------------------------------------------------------------


@dataclasses.dataclass
class Context:
    cfg: ExperimentConfig
    config_path: Path
    config_sha256: str
    seed: int
    threads: int
    out_dir: Path
    overrides: dict

    @property
    def kind(self) -> Kind:
        return Kind.parse(self.cfg.model.kind)

    @property
    def ladder(self) -> list[int]:
        return self.cfg.model.ladder

    def pool_map(self, fn, items):
        items = list(items)
        if self.threads <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, items))


def _mu(ctx: Context, required: bool = True):
    sec = ctx.cfg.mu
    if sec is None:
        if required:
            raise ConfigError(f"{ctx.config_path}: this analysis needs a mu section")
        return None
    if sec.atoms is not None:
        atoms = sorted(sec.atoms.items())
        return discrete([a for a, _ in atoms], [w for _, w in atoms])
    d = sec.density
    if d.family == "uniform":
        return uniform(d.low, d.high)
    return beta(d.a, d.b, d.low, d.high)


def _spec(ctx: Context, N: int):
    model = SserwModel(ctx.kind, N)
    spec = chain_spec(model)
    sec = ctx.cfg.model
    if sec.origin is None and sec.targets is None:
        return model, spec
    lo, hi = int(model.positions[0]), int(model.positions[-1])

    def idx(pos, field_name):
        if not lo <= pos <= hi:
            raise ConfigError(f"{ctx.config_path}: model.{field_name}: position {pos} outside [{lo}, {hi}]")
        return model.index(pos)

    origin = idx(sec.origin, "origin") if sec.origin is not None else spec.origin
    targets = frozenset(idx(p, "targets") for p in sec.targets) if sec.targets is not None else spec.targets
    return model, dataclasses.replace(spec, origin=origin, targets=targets)


def _no_overrides(ctx: Context, what: str):
    if ctx.cfg.model.origin is not None or ctx.cfg.model.targets is not None:
        raise ConfigError(f"{ctx.config_path}: model.origin/model.targets overrides are only supported by "
                          f"simulate and validate; {what} relies on the closed forms of the standard walk")


def _analysis(ctx: Context, cls, name: str):
    a = ctx.cfg.analysis
    if a is None:
        try:
            return cls(kind=name)
        except Exception as exc:
            raise ConfigError(f"{ctx.config_path}: analysis section of kind {name!r} required: {exc}") from exc
    if not isinstance(a, cls):
        raise ConfigError(f"{ctx.config_path}: analysis.kind is {a.kind!r} but the {name} command was invoked")
    return a


def _mean_m(ctx: Context, mu, N: int) -> float:
    """``E_mu[m_N]`` on a coarse quantile grid, for budget estimates."""
    model = SserwModel(ctx.kind, N)
    if isinstance(mu, DiscreteDistribution):
        return float(np.dot(mu.weights, [m_closed(model, t).m for t in mu.atoms]))
    q = mu.ppf((np.arange(64) + 0.5) / 64)
    return float(np.mean([m_closed(model, t).m for t in q]))


# ---------------------------------------------------------------------------
# analyses
# ---------------------------------------------------------------------------


def do_simulate(ctx: Context, art: Artifacts, a: SimulateAnalysis):
    mu = _mu(ctx)
    R = ctx.cfg.run.replicas
    limit = ctx.cfg.run.max_total_steps
    for N in ctx.ladder:
        _, spec = _spec(ctx, N)
        _check_spec(ctx, spec, mu)
    if a.mode == "steps":
        total = R * a.n * len(ctx.ladder)
        if total > limit:
            raise GuardTripped("run.max_total_steps", f"{total:.3g} steps requested, limit {limit:.3g}")
        rows = []
        for N in ctx.ladder:
            _, spec = _spec(ctx, N)
            trajs = ctx.pool_map(lambda r: simulate_steps(spec, mu, a.n, replica_seed(ctx.seed, r)), range(R))
            for r, tr in enumerate(trajs):
                switch = np.zeros(tr.n + 1, dtype=bool)
                switch[tr.switch_times] = True
                pos = tr.positions
                rows.extend((N, r, i, pos[i], tr.states[i], switch[i]) for i in range(tr.n + 1))
        art.csv("trajectory.csv", ["N", "replica", "step", "position", "theta", "switch"], rows)
    else:
        for N in ctx.ladder:
            expected = R * a.k * _mean_m(ctx, mu, N)
            if not expected <= limit:
                raise GuardTripped("run.max_total_steps",
                                   f"about {expected:.3g} expected steps at N={N}, limit {limit:.3g}")
        rows = []
        for N in ctx.ladder:
            _, spec = _spec(ctx, N)
            batches = ctx.pool_map(lambda r: simulate_switches(spec, mu, a.k, replica_seed(ctx.seed, r)), range(R))
            for r, b in enumerate(batches):
                exit_pos = spec.labels[b.exit_states]
                rows.extend((N, r, i, b.thetas[i], b.taus[i], exit_pos[i]) for i in range(len(b)))
        art.csv("switches.csv", ["N", "replica", "cycle", "theta", "tau", "exit_position"], rows)


def _binning(mu, bins: int) -> Binning:
    return Binning.for_mu(mu, bins)


def _occupation_replica(ctx, spec, mu, a: OccupationAnalysis, binning, N, r):
    seed = replica_seed(ctx.seed, r)
    if a.method == "trajectory":
        return empirical_occupation(simulate_steps(spec, mu, a.n, seed), binning)
    k = max(16, int(math.ceil(1.25 * a.n / max(1.0, _mean_m(ctx, mu, N)))))
    while True:
        batch = simulate_switches(spec, mu, k, seed)
        # cycles after a switch include the reset step
        taus = batch.taus + np.r_[0, np.ones(len(batch) - 1, dtype=batch.taus.dtype)]
        try:
            return renewal_occupation(list(zip(batch.thetas, taus)), a.n, binning).measure()
        except BudgetError:
            k *= 2


def do_occupation(ctx: Context, art: Artifacts, a: OccupationAnalysis):
    _no_overrides(ctx, "occupation")
    mu = _mu(ctx)
    R = ctx.cfg.run.replicas
    total = R * a.n * len(ctx.ladder)
    if total > ctx.cfg.run.max_total_steps:
        raise GuardTripped("run.max_total_steps",
                           f"{total:.3g} steps requested, limit {ctx.cfg.run.max_total_steps:.3g}")
    binning = _binning(mu, a.bins)
    pooled, per_rep, limit_rows, summary = [], [], [], []
    for N in ctx.ladder:
        model, spec = _spec(ctx, N)
        measures = ctx.pool_map(lambda r: _occupation_replica(ctx, spec, mu, a, binning, N, r), range(R))
        masses = np.mean([m.masses for m in measures], axis=0)
        limit = limiting_occupation(mu, binning=binning, log_m_eval=lambda t, _m=model: log_m(_m, t), index=N)
        atoms = binning.atoms if binning.is_atomic else None
        for j in range(binning.size):
            atom = atoms[j] if atoms is not None else None
            pooled.append((N, binning.left[j], binning.right[j], atom, masses[j]))
            limit_rows.append((N, binning.left[j], binning.right[j], atom, limit.masses[j]))
            for r, m in enumerate(measures):
                per_rep.append((N, r, binning.left[j], binning.right[j], atom, m.masses[j]))
        tv = [0.5 * float(np.abs(m.masses - limit.masses).sum()) for m in measures]
        summary.append({"N": N, "tv_to_limit": tv, "mean_tv_to_limit": float(np.mean(tv)),
                        "tv_pooled_to_limit": 0.5 * float(np.abs(masses - limit.masses).sum())})
    head = ["N", "bin_left", "bin_right", "atom", "mass"]
    art.csv("occupation.csv", head, pooled)
    art.csv("occupation_replicas.csv", ["N", "replica"] + head[1:], per_rep)
    art.csv("limit.csv", head, limit_rows)
    art.json("occupation.json", {"n": a.n, "replicas": R, "method": a.method, "bins": a.bins, "ladder": summary})


def do_dominance(ctx: Context, art: Artifacts, a: DominanceAnalysis):
    _no_overrides(ctx, "dominance")
    mu = _mu(ctx)
    rules = LadderRules(zero_factor=a.zero_factor, converge_rel=a.converge_rel,
                        margin_factor=a.margin_factor, refinements=a.refinements)
    report = predict_dominance(ctx.kind, mu, ctx.ladder, rules=rules, bl_trend=a.bl_trend)
    art.json("report.json", report.to_dict())
    bl = report.evidence.get("bl_distance")
    if bl is not None:
        art.csv("ladder.csv", ["N", "bl_distance"], zip(ctx.ladder, np.asarray(bl, dtype=float)))
    binning = Binning.for_mu(mu)
    rows = []
    for N in ctx.ladder:
        model = SserwModel(ctx.kind, N)
        lim = limiting_occupation(mu, binning=binning, log_m_eval=lambda t, _m=model: log_m(_m, t), index=N)
        atoms = binning.atoms if binning.is_atomic else None
        rows.extend((N, binning.left[j], binning.right[j], atoms[j] if atoms is not None else None,
                     lim.centroids[j], lim.masses[j]) for j in range(binning.size))
    art.csv("limit.csv", ["N", "bin_left", "bin_right", "atom", "centroid", "mass"], rows)


def _downsample(t, s, points: int):
    if t.size <= points:
        return t, s
    keep = np.unique(np.linspace(0, t.size - 1, points).round().astype(int))
    return t[keep], s[keep]


def do_metastability(ctx: Context, art: Artifacts, a: MetastabilityAnalysis):
    _no_overrides(ctx, "metastability")
    rules = VerdictRules(ks_max=a.ks_max, coverage_min=a.coverage_min, c1=a.c1, c2=a.c2)
    source = Source(a.source)
    if source is Source.MONTE_CARLO:
        for N in ctx.ladder:
            m = m_closed(SserwModel(ctx.kind, N), a.theta).m
            if not m <= a.mc_budget:
                raise GuardTripped("analysis.mc_budget",
                                   f"m_N(theta) = {m:.3g} at N={N} exceeds {a.mc_budget:.3g} steps per sample; "
                                   f"use source: Exact")

    def one(N):
        sample = scaled_sample(SserwModel(ctx.kind, N), a.theta, source, a.k, ctx.seed, a.mc_budget)
        upper = ks_to_exp1(sample, upper_bound=True) if source is Source.EXACT else None
        return sample, ks_to_exp1(sample), upper, cutoff_coverage(sample, a.c1, a.c2)

    results = ctx.pool_map(one, ctx.ladder)
    ks = np.array([r[1] for r in results])
    cov = np.array([r[3] for r in results])
    upper = np.array([r[2] for r in results]) if source is Source.EXACT else None
    verdict = LimitVerdict(classify_ladder(ks, cov, rules), np.asarray(ctx.ladder), ks, cov,
                           a.c1, a.c2, source, upper)
    body = verdict.to_dict()
    body.update({"model": ctx.kind.value, "theta": a.theta, "ks_max": a.ks_max, "coverage_min": a.coverage_min})
    art.json("verdict.json", body)
    art.csv("ladder.csv", ["N", "m", "ks", "ks_upper", "coverage", "truncated_mass"],
            [(N, r[0].m, r[1], r[2], r[3], r[0].truncated_mass) for N, r in zip(ctx.ladder, results)])
    rows = []
    for N, r in zip(ctx.ladder, results):
        t, s = _downsample(*r[0].curve(), a.curve_points)
        rows.extend((N, ti, si, math.exp(-ti)) for ti, si in zip(t, s))
    art.csv("curves.csv", ["N", "scaled_time", "survival", "exp1_survival"], rows)


def _thetas(spec) -> list[float]:
    if isinstance(spec, ThetaRange):
        count = int(math.floor((spec.stop - spec.start) / spec.step + 1e-9)) + 1
        return [round(spec.start + i * spec.step, 12) for i in range(max(count, 0))]
    return sorted(float(t) for t in spec)


def do_sweep(ctx: Context, art: Artifacts, a: SweepAnalysis):
    _no_overrides(ctx, "sweep")
    thetas = _thetas(a.thetas)
    if not thetas or any(not 0 <= t <= 1 for t in thetas):
        raise ConfigError(f"{ctx.config_path}: analysis.thetas must be a nonempty subset of [0, 1]")
    cells = [(t, N) for t in thetas for N in ctx.ladder]

    def one(cell):
        t, N = cell
        model = SserwModel(ctx.kind, N)
        try:
            closed = m_closed(model, t).m
        except DomainError:
            return t, N, None, None, None, "outside_domain"
        exact = m_exact(model, t)
        if not (math.isfinite(closed) and math.isfinite(exact)):
            return t, N, closed, exact, None, "overflow"
        return t, N, closed, exact, abs(closed - exact) / exact, "ok"

    results = ctx.pool_map(one, cells)
    errs = [r[4] for r in results if r[4] is not None]
    worst = max(errs) if errs else None
    art.csv("sweep.csv", ["model", "theta", "N", "m_closed", "m_exact", "rel_error", "max_rel_error", "status"],
            [(ctx.kind.value, t, N, c, e, err, worst, st) for t, N, c, e, err, st in results])


def _validation_thetas(mu):
    if mu is None:
        return np.round(np.linspace(0.05, 0.95, 19), 12)
    if isinstance(mu, DiscreteDistribution):
        return mu.atoms
    lo, hi = mu.support_bounds
    return np.linspace(lo, hi, 11)


def _check_spec(ctx: Context, spec, mu):
    report = validate(spec, _validation_thetas(mu))
    if not report.ok:
        raise ConfigError(f"{ctx.config_path}: chain is invalid: {report}")
    return report


# ---------------------------------------------------------------------------
# click wiring
# ---------------------------------------------------------------------------

DISPATCH = {
    "simulate": (SimulateAnalysis, do_simulate),
    "occupation": (OccupationAnalysis, do_occupation),
    "dominance": (DominanceAnalysis, do_dominance),
    "metastability": (MetastabilityAnalysis, do_metastability),
    "sweep": (SweepAnalysis, do_sweep),
}


def _context(config, seed, threads, out_dir) -> Context:
    cfg, digest = load_config(config)
    overrides = {k: v for k, v in (("seed", seed), ("threads", threads), ("out_dir", out_dir)) if v is not None}
    return Context(cfg, Path(config), digest,
                   seed=cfg.run.seed if seed is None else seed,
                   threads=threads or cfg.run.threads or os.cpu_count() or 1,
                   out_dir=Path(out_dir if out_dir is not None else cfg.run.out_dir),
                   overrides=overrides)


def _execute(command: str, config, seed, threads, out_dir, body):
    try:
        ctx = _context(config, seed, threads, out_dir)
        try:
            ctx.out_dir.mkdir(parents=True, exist_ok=True)
            probe = ctx.out_dir / ".write-test"
            probe.write_bytes(b"")
            probe.unlink()
        except OSError as exc:
            raise ConfigError(f"{config}: output directory {ctx.out_dir} is not writable: {exc}") from exc
        start = time.perf_counter()
        art = Artifacts(ctx.out_dir)
        body(ctx, art)
        art.manifest(command=command, config_path=ctx.config_path, config_sha256=ctx.config_sha256,
                     seed=ctx.seed, threads=ctx.threads, overrides=ctx.overrides,
                     wall_time=time.perf_counter() - start)
        click.echo(f"wrote {len(art.files)} artifact(s) and manifest.json to {ctx.out_dir}")
    except (ConfigError, SpecError, PreconditionError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except (GuardTripped, BudgetGuardError, BudgetError) as exc:
        msg = str(exc)
        if not isinstance(exc, GuardTripped):
            msg = f"budget guard {type(exc).__name__} tripped: {msg}"
        click.echo(msg, err=True)
        sys.exit(EXIT_BUDGET)
    except NUMERIC_ERRORS as exc:
        click.echo(f"numeric failure ({type(exc).__name__}): {exc}", err=True)
        sys.exit(EXIT_NUMERIC)


def common_options(fn):
    fn = click.option("--out-dir", type=click.Path(file_okay=False), default=None,
                      help="Output directory (overrides run.out_dir).")(fn)
    fn = click.option("--threads", type=click.IntRange(min=1), default=None,
                      help="Worker threads (default: run.threads or all cores).")(fn)
    fn = click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None,
                      help="Master seed (overrides run.seed).")(fn)
    fn = click.option("--config", "config", required=True, type=click.Path(dir_okay=False),
                      help="YAML experiment config.")(fn)
    return fn


@click.group()
@click.version_option(__version__, prog_name="ssmc")
def main():
    """Self-switching Markov chain experiments."""


@main.command()
@common_options
def run(config, seed, threads, out_dir):
    """Run the analysis named by analysis.kind."""

    def body(ctx, art):
        a = ctx.cfg.analysis
        if a is None:
            raise ConfigError(f"{config}: run needs an analysis section with a kind")
        DISPATCH[a.kind][1](ctx, art, a)

    _execute("run", config, seed, threads, out_dir, body)


def _subcommand(name: str, doc: str):
    cls, fn = DISPATCH[name]

    @common_options
    def command(config, seed, threads, out_dir):
        _execute(name, config, seed, threads, out_dir, lambda ctx, art: fn(ctx, art, _analysis(ctx, cls, name)))

    command.__doc__ = doc
    main.command(name=name)(command)


_subcommand("simulate", "Simulate trajectories or switching cycles per replica.")
_subcommand("occupation", "Empirical and limiting occupation measures.")
_subcommand("dominance", "Detect dominant states along the N ladder.")
_subcommand("metastability", "Exp(1) versus cut-off verdict for the scaled switching time.")
_subcommand("sweep", "Closed-form versus linear-solve expected switching times over a grid.")


@main.command(name="validate")
@click.option("--config", "config", required=True, type=click.Path(dir_okay=False), help="YAML experiment config.")
def validate_cmd(config):
    """Check the config schema and the chain assumptions; writes nothing."""
    try:
        ctx = _context(config, None, None, None)
        mu = _mu(ctx, required=False)
        for N in ctx.ladder:
            _, spec = _spec(ctx, N)
            report = _check_spec(ctx, spec, mu)
            for theta, note in report.notes:
                click.echo(f"note: N={N} theta={theta:g}: {note}")
    except (ConfigError, SpecError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    click.echo("valid")


if __name__ == "__main__":
    main()
