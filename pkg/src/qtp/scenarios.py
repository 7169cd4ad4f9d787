"""Scenario orchestration and CSV emission for the command-line interface."""
from __future__ import annotations

import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import set_parameter
from .core import MomentumGrid, TimeGrid, check_resolution, momentum_grid_for, velocity
from .errors import ConfigError, QTPError, ValidationError
from .estimators import PairArrivalModel, ScatterChainModel, SingleArrivalModel, arrival_window, make_kernel
from .hierarchy import (
    DetectorResponse,
    HierarchyTensor,
    kolmogorov_condition_check,
    negativity_witness,
    probabilities_from_tensor,
    q1_discrete,
    q2_average,
    q2_discrete,
    synthetic_classical_hierarchy,
)
from .nonclassicality import kolmogorov_distance, statistical_distance, trace_distance_bound

SWEEP_SCENARIOS = ("arrival_pair", "mi_sweep")


@dataclass(frozen=True)
class Table:
    """Named columns of equal length."""

    columns: tuple
    data: np.ndarray = field(repr=False)

    @classmethod
    def from_columns(cls, **cols):
        return cls(tuple(cols), np.column_stack([np.asarray(c, dtype=float).ravel() for c in cols.values()]))

    @classmethod
    def long_format(cls, names, axes, values):
        """Flatten a 2D array sampled on (axes[0], axes[1]) into rows."""
        a, b = np.meshgrid(axes[0], axes[1], indexing="ij")
        return cls.from_columns(**{names[0]: a, names[1]: b, names[2]: values})


@dataclass
class ResultBundle:
    """Tables and scalar summaries of one scenario run."""

    config: object
    tables: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


def detector_distance(cfg, separation=None):
    """Detector position; derived from the separation when a ratio a/x is set."""
    ph = cfg.physics
    a = ph.separation if separation is None else separation
    if ph.separation_ratio is not None:
        return a / ph.separation_ratio
    return ph.detector_position


def _time_grid(cfg, window):
    nu = cfg.numerics
    lo, hi = (nu.time_min, nu.time_max) if nu.time_min is not None else window
    return TimeGrid(lo, hi, nu.n_time)


def _arrival_grids(cfg):
    ph, nu = cfg.physics, cfg.numerics
    separation = ph.separation if cfg.scenario != "arrival_single" else 0.0
    x = detector_distance(cfg)
    k_grid = momentum_grid_for(ph.momentum, ph.width, nu.momentum_std, nu.n_momentum)
    tgrid = _time_grid(cfg, arrival_window(x, ph.momentum, ph.width, ph.mass, separation, nu.time_std))
    check_resolution(k_grid, ph.mass, x, tgrid.start, tgrid.stop)
    return {"k": k_grid, "t": tgrid, "x": x}


def _scatter_model(cfg):
    ph, nu = cfg.physics, cfg.numerics
    return ScatterChainModel(
        mass=ph.mass, momentum=ph.momentum, width=ph.width, detector_position=ph.detector_position,
        second_distance=ph.second_distance, state=ph.state, separation=ph.separation,
        first_kernel=cfg.detector["first"], second_kernel=cfg.detector["second"],
        n_momentum=nu.n_momentum, momentum_std=nu.momentum_std, n_outgoing=nu.n_outgoing,
        q_min=nu.q_min, q_margin=nu.q_margin,
    )


def _scatter_grids(cfg):
    ph, nu = cfg.physics, cfg.numerics
    model = _scatter_model(cfg)
    k_grid = momentum_grid_for(ph.momentum, ph.width, nu.momentum_std, nu.n_momentum)
    if k_grid.start <= 0:
        raise ValidationError("incoming momentum grid reaches k <= 0; lower numerics.momentum_std")
    q_grid = MomentumGrid(nu.q_min, k_grid.stop + nu.q_margin, nu.n_outgoing)
    twin, (tau_lo, tau_hi) = model.default_windows(nu.time_std, nu.tau_max)
    tgrid = _time_grid(cfg, twin)
    taugrid = TimeGrid(tau_lo, tau_hi, nu.n_tau)
    check_resolution(k_grid, ph.mass, ph.detector_position, tgrid.start, tgrid.stop)
    check_resolution(q_grid, ph.mass, ph.second_distance, taugrid.start, taugrid.stop)
    return {"k": k_grid, "q": q_grid, "t": tgrid, "tau": taugrid, "model": model}


def sweep_values(cfg):
    sw = cfg.sweep
    return np.linspace(sw.start, sw.stop, sw.steps)


def plan_grids(cfg):
    """Grids a run will use; raises GridError when the resolution rule fails."""
    if cfg.scenario in ("arrival_single", "arrival_pair"):
        for kind in cfg.detector.values():
            make_kernel(kind)
        return _arrival_grids(cfg)
    if cfg.scenario == "mi_sweep":
        return [_arrival_grids(set_parameter(cfg, cfg.sweep.parameter, float(v))) for v in sweep_values(cfg)]
    if cfg.scenario == "scatter_chain":
        return _scatter_grids(cfg)
    return {}


def _with_context(cfg, func, *args):
    try:
        return func(*args)
    except ConfigError:
        raise
    except QTPError as exc:
        raise type(exc)(f"scenario '{cfg.scenario}': {exc}") from exc


def run_scenario(cfg, threads=1, timing=False):
    """Run the configured scenario and collect its tables and summaries.

    :param threads: worker threads for sweep points
    :param timing: add a runtime_seconds column to sweep tables
    """
    runner = {
        "arrival_single": _run_single,
        "arrival_pair": _run_pair,
        "mi_sweep": lambda c: _run_sweep(c, threads, timing),
        "scatter_chain": _run_scatter,
        "hierarchy_check": _run_hierarchy,
    }[cfg.scenario]
    return _with_context(cfg, runner, cfg)


def _run_single(cfg):
    ph, nu = cfg.physics, cfg.numerics
    grids = _arrival_grids(cfg)
    model = SingleArrivalModel(ph.mass, ph.momentum, ph.width, grids["x"], cfg.detector["first"],
                               nu.n_momentum, nu.momentum_std).fit()
    p1 = model.density(grids["t"])
    bundle = ResultBundle(cfg)
    bundle.tables["p1"] = Table.from_columns(t=grids["t"].nodes, p1=p1.values)
    bundle.summary.update(p1_mass=p1.mass, detector_position=grids["x"])
    return bundle


def _pair_model(cfg, x):
    ph, nu = cfg.physics, cfg.numerics
    return PairArrivalModel(ph.mass, ph.momentum, ph.width, ph.separation, x, nu.n_momentum,
                            nu.momentum_std).fit()


def _run_pair(cfg):
    grids = _arrival_grids(cfg)
    tgrid = grids["t"]
    model = _pair_model(cfg, grids["x"])
    p1, p2 = model.p1(tgrid), model.p2(tgrid)
    report = model.report(tgrid)
    t = tgrid.nodes
    bundle = ResultBundle(cfg)
    bundle.tables["p1"] = Table.from_columns(t=t, p1=p1.values)
    bundle.tables["p2"] = Table.long_format(("t1", "t2", "p2"), (t, t), p2.values)
    bundle.tables["mi"] = Table.from_columns(t=t, p2_diagonal=p2.diagonal(), w=report.w)
    bundle.tables["g"] = Table.long_format(("t1", "t2", "g"), (t, t), report.G)
    bundle.summary.update(
        q1=report.q1, q2=report.q2, overlap=abs(model.eps_), p1_mass=p1.mass, p2_mass=p2.mass,
        kolmogorov_w2=kolmogorov_distance(p1.values, p2.values, 1, tgrid),
        violation_regions=len(report.violation_intervals), detector_position=grids["x"],
    )
    return bundle


def sweep_point(cfg):
    """(Q1, Q2) of the symmetric pair described by ``cfg``."""
    grids = _arrival_grids(cfg)
    report = _pair_model(cfg, grids["x"]).report(grids["t"])
    return report.q1, report.q2


def _timed_point(cfg):
    start = time.perf_counter()
    q1, q2 = _with_context(cfg, sweep_point, cfg)
    return q1, q2, time.perf_counter() - start


def run_sweep(cfg, parameter, values, threads=1, timing=False):
    """Evaluate Q1 and Q2 at each parameter value; rows keep the sweep order."""
    if cfg.scenario not in SWEEP_SCENARIOS:
        raise ConfigError(f"sweeps need one of {', '.join(SWEEP_SCENARIOS)}", field="scenario")
    configs = [set_parameter(cfg, parameter, float(v)) for v in values]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(_timed_point, configs))
    rows = np.array(rows, dtype=float).reshape(len(configs), 3)
    cols = {"parameter": np.asarray(values, dtype=float), "q1": rows[:, 0], "q2": rows[:, 1]}
    if timing:
        cols["runtime_seconds"] = rows[:, 2]
    bundle = ResultBundle(cfg)
    bundle.tables["sweep"] = Table.from_columns(**cols)
    bundle.summary.update(parameter=parameter, points=len(configs),
                          q1_monotone=int(bool(np.all(np.diff(rows[:, 0]) > 0))))
    return bundle


def _run_sweep(cfg, threads, timing):
    return run_sweep(cfg, cfg.sweep.parameter, sweep_values(cfg), threads, timing)


def _run_scatter(cfg):
    grids = _scatter_grids(cfg)
    model = grids["model"].fit()
    tgrid, taugrid = grids["t"], grids["tau"]
    p2 = model.p2(tgrid, taugrid)
    p1 = model.p1_star(tgrid)
    t0 = cfg.numerics.conditional_time
    if t0 is None:
        t0 = cfg.physics.detector_position / velocity(cfg.physics.momentum, cfg.physics.mass)
    cond = model.conditional(p2, p1, t0)
    reference = model.tau_reference(taugrid)
    tau_marginal = p2.integrate_axis(0)
    w1 = statistical_distance(tau_marginal, reference.values, [taugrid.weights])
    bound = trace_distance_bound(model.nonselective(), model.outgoing_reference_)
    bundle = ResultBundle(cfg)
    bundle.tables["p1"] = Table.from_columns(t=tgrid.nodes, p1=p1.values)
    bundle.tables["p2"] = Table.long_format(("t1", "t2", "p2"), (tgrid.nodes, taugrid.nodes), p2.values)
    bundle.tables["conditional"] = Table.from_columns(tau=taugrid.nodes, p_tau_given_t=cond.values)
    bundle.tables["tau_marginal"] = Table.from_columns(tau=taugrid.nodes, p2_marginal=tau_marginal,
                                                       reference=reference.values)
    bundle.summary.update(
        w1=w1, trace_distance_bound=bound, p2_mass=p2.mass, p2_negative_mass=p2.negative_mass,
        normalization_error=float(np.max(np.abs(model.operator_.normalization() - 1))),
        t_marginal_l1=float(tgrid.integrate(np.abs(p2.integrate_axis(1) - p1.values))),
        conditional_time=float(tgrid.nodes[tgrid.index_of(t0)]),
    )
    return bundle


def _complex_array(raw, name):
    try:
        return np.array([[complex(v) for v in row] for row in raw]) if np.ndim(raw) == 2 \
            else np.array([complex(v) for v in raw])
    except (TypeError, ValueError):
        raise ConfigError("expected numbers or complex strings such as '1+2j'", field=name) from None


def hierarchy_inputs(cfg):
    """(tensor, responses) from explicit arrays or a seeded positive semidefinite draw."""
    hi = cfg.hierarchy
    rng = np.random.default_rng(hi.seed)
    if hi.g2 is not None:
        g2 = np.real_if_close(_complex_array(hi.g2, "hierarchy.g2"))
        g1 = np.real_if_close(_complex_array(hi.g1, "hierarchy.g1")) if hi.g1 is not None \
            else np.real(np.diag(g2))
    else:
        M = rng.random((hi.dim, hi.dim))
        g2 = M @ M.T
        g1 = rng.random(hi.dim)
    if hi.responses is not None:
        R = np.asarray(hi.responses, dtype=float)
    else:
        R = rng.random((hi.outcomes, g1.size))
    return HierarchyTensor(g1, g2), DetectorResponse(R)


def _run_hierarchy(cfg):
    hi = cfg.hierarchy
    G, R = hierarchy_inputs(cfg)
    antisym, cos = kolmogorov_condition_check(G, R)
    p1 = probabilities_from_tensor(G, R, 1)
    p2 = probabilities_from_tensor(G, R, 2)
    rng = np.random.default_rng(hi.seed + 1)
    rho = rng.random(hi.states)
    F = rng.random((hi.outcomes, hi.states))
    F /= F.sum(axis=0)
    n_levels = max(hi.levels, 2 * hi.levels - 2)
    levels = synthetic_classical_hierarchy(rho / rho.sum(), F, n_levels)
    w_classical = [kolmogorov_distance(levels[n - 1], levels[n], i) for n in range(1, hi.levels)
                   for i in range(n + 1)]
    z = np.arange(R.outcomes)
    bundle = ResultBundle(cfg)
    bundle.tables["hierarchy_p1"] = Table.from_columns(z=z, p1=p1)
    bundle.tables["hierarchy_p2"] = Table.long_format(("z1", "z2", "p2"), (z, z), p2)
    bundle.summary.update(
        antisymmetric_norm=antisym, cos_theta=cos, negativity_witness=negativity_witness(G.g2),
        tensor_q1=q1_discrete(p1, p2), tensor_q2=q2_discrete(p2, p2, p2, 1),
        tensor_w1=max(kolmogorov_distance(p1, p2, i) for i in range(2)),
        classical_q1=max(q1_discrete(levels[n - 2], levels[n - 1]) for n in range(2, hi.levels + 1)),
        classical_q2=max(q2_average(levels, n) for n in range(2, hi.levels + 1)),
        classical_w_max=max(w_classical) if w_classical else 0.0,
    )
    return bundle


def _fmt(value):
    return format(float(value), ".17g")


def render_table(table, header):
    buf = io.StringIO()
    buf.write(header)
    buf.write(",".join(table.columns) + "\n")
    for row in table.data:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def emit_csv(bundle, out_dir, stamp=False):
    """Write one CSV per table plus ``summary.csv``; returns the written paths.

    :param stamp: add a UTC timestamp to the comment line (breaks byte identity)
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = bundle.config
    header = f"# qtp {__version__} scenario={cfg.scenario} config_sha256={cfg.digest()}"
    if stamp:
        header += f" utc={time.strftime('%Y-%m-%dT%H:%M:%SZ', time.gmtime())}"
    header += "\n"
    paths = []
    for name, table in bundle.tables.items():
        path = out / f"{name}.csv"
        path.write_text(render_table(table, header))
        paths.append(path)
    lines = [header, "name,value\n"]
    for key, val in bundle.summary.items():
        lines.append(f"{key},{val if isinstance(val, str) else _fmt(val)}\n")
    path = out / "summary.csv"
    path.write_text("".join(lines))
    paths.append(path)
    return paths
