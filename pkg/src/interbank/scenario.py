"""
Scenario configuration and batch runners.

A scenario is a YAML document with sections ``tree``, ``assets``,
``network``, ``model``, ``outputs`` and an optional ``sweep``. Unknown keys
are rejected so that a typo never silently falls back to a default.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
import yaml

from .clearing_multi import RebalancingStrategy, clear_multi
from .clearing_single import clear_maximal_picard
from .errors import CertificationError, ConfigError, NetworkError
from .hpa import clear_hpa_multi, clear_hpa_single, hpa_survival
from .network import NetworkSpec, split_obligations
from .oracle import certify_multi, enumerate_fixed_points_single, lattice_extremes
from .term_structure import curve_from_probabilities, curve_rows, format_rate, shape_diagnostics, write_curve_csv
from .tree import build_tree, grow_assets, vol_matrix

SECTIONS = {"scenario_id", "tree", "assets", "network", "model", "outputs", "sweep"}
TREE_KEYS = {"n_banks", "n_steps", "dt", "renormalize", "max_nodes"}
ASSET_KEYS = {"x0", "variances", "correlation", "sigma", "r"}
NETWORK_KEYS = {"liabilities", "maturities", "generator", "split", "groups"}
SPLIT_KEYS = {"kind", "weights", "seed"}
GEN_KEYS = {"kind", "n_core", "n_periphery", "core_core", "core_periphery", "core_society", "periphery_core", "periphery_society"}
MODEL_KEYS = {"accounting", "beta", "strategy"}
STRATEGY_KEYS = {"kind", "w", "theta_reg", "table"}
OUTPUT_KEYS = {"dir", "reports"}
SWEEP_KEYS = {"parameter", "grid"}
SWEEP_PARAMS = {"rho", "lambda", "core_variance", "w"}
MODES = ("mtm", "hpa", "both")


def _number(value, where):
    """Accept numbers and fraction strings such as ``"1/12"``."""
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError):
            pass
    raise ConfigError(f"{where}: expected a number, got {value!r}")


def _array(value, where):
    try:
        if isinstance(value, (list, tuple)):
            return np.array([_array(v, where) if isinstance(v, (list, tuple)) else _number(v, where) for v in value], dtype=float)
        return np.array(_number(value, where))
    except ConfigError:
        raise
    except Exception as exc:  # ragged lists
        raise ConfigError(f"{where}: malformed array ({exc})") from None


def _check_keys(section, allowed, where):
    if not isinstance(section, dict):
        raise ConfigError(f"{where}: expected a mapping")
    extra = set(section) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {sorted(extra)}; allowed {sorted(allowed)}")


def _grid(spec, where):
    if isinstance(spec, dict):
        _check_keys(spec, {"start", "stop", "num"}, where)
        try:
            return np.linspace(_number(spec["start"], where), _number(spec["stop"], where), int(spec["num"]))
        except KeyError as exc:
            raise ConfigError(f"{where}: missing {exc.args[0]}") from None
    return _array(spec, where).ravel()


@dataclass
class ScenarioConfig:
    """Parsed and cross-checked scenario."""

    scenario_id: str
    n_banks: int
    n_steps: int
    dt: float
    renormalize: bool
    max_nodes: int | None
    x0: np.ndarray
    variances: np.ndarray | None
    correlation: object
    sigma: np.ndarray | None
    r: float
    liabilities: np.ndarray | None
    maturities: dict | None
    split: dict | None
    groups: dict
    accounting: str
    beta: float
    strategy: RebalancingStrategy
    out_dir: str
    reports: tuple
    sweep_parameter: str | None = None
    sweep_grid: np.ndarray | None = None
    source: str = ""
    seeds: dict = field(default_factory=dict)

    # -- builders --------------------------------------------------------

    @property
    def is_multi(self) -> bool:
        return self.maturities is not None or self.split is not None

    def tree(self):
        kw = {} if self.max_nodes is None else {"max_nodes": self.max_nodes}
        return build_tree(self.n_banks, self.n_steps, self.dt, **kw)

    def sigma_matrix(self, correlation=None, variances=None):
        if self.sigma is not None and correlation is None and variances is None:
            return self.sigma
        var = self.variances if variances is None else variances
        rho = self.correlation if correlation is None else correlation
        return vol_matrix(var, rho)

    def assets(self, tree=None, correlation=None, variances=None):
        tree = tree or self.tree()
        return grow_assets(tree, self.x0, self.sigma_matrix(correlation, variances), self.r, self.renormalize)

    def base_matrix(self) -> np.ndarray:
        return self.liabilities

    def network(self, seed_split=None, liabilities=None) -> NetworkSpec:
        """Validated obligations; a split rule turns a single matrix into one per level."""
        L = self.liabilities if liabilities is None else liabilities
        if self.maturities is not None:
            stack = np.zeros((self.n_steps + 1, self.n_banks, self.n_banks + 1))
            for lvl, mat in self.maturities.items():
                stack[lvl] = mat
            return NetworkSpec.multi(stack, self.beta, self.r)
        single = NetworkSpec.single(L, self.beta, self.r)
        if self.split is None:
            return single
        kind = self.split["kind"]
        if kind == "uniform":
            seed = self.split.get("seed") if seed_split is None else seed_split
            if seed is None:
                raise ConfigError("network.split: uniform split needs a seed (config or --seed-split)")
            self.seeds["split"] = int(seed)
            return split_obligations(single, self.n_steps, seed=int(seed))
        if kind == "weights":
            return split_obligations(single, self.n_steps, weights=self.split["weights"])
        if kind == "terminal":
            return split_obligations(single, self.n_steps, weights={self.n_steps: 1.0})
        raise ConfigError(f"network.split.kind {kind!r} unknown")

    def with_strategy(self, strategy: RebalancingStrategy) -> "ScenarioConfig":
        return replace(self, strategy=strategy)


def _core_periphery_matrix(gen: dict) -> tuple[np.ndarray, dict]:
    nc, npr = int(gen["n_core"]), int(gen["n_periphery"])
    n = nc + npr
    L = np.zeros((n, n + 1))
    for i in range(nc):
        L[i, 0] = gen["core_society"]
        for j in range(nc):
            if j != i:
                L[i, j + 1] = gen["core_core"]
        for j in range(nc, n):
            L[i, j + 1] = gen["core_periphery"]
    for i in range(nc, n):
        L[i, 0] = gen["periphery_society"]
        for j in range(nc):
            L[i, j + 1] = gen["periphery_core"]
    groups = {"core": list(range(nc)), "periphery": list(range(nc, n))}
    return L, groups


def parse_config(doc: dict, source: str = "") -> ScenarioConfig:
    """Validate a loaded YAML mapping and return a ``ScenarioConfig``."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    _check_keys(doc, SECTIONS, "config")
    for sec in ("tree", "assets", "network", "model"):
        if sec not in doc:
            raise ConfigError(f"config: missing section {sec!r}")

    t = doc["tree"]
    _check_keys(t, TREE_KEYS, "tree")
    try:
        n = int(t["n_banks"])
        ell = int(t["n_steps"])
    except KeyError as exc:
        raise ConfigError(f"tree: missing {exc.args[0]}") from None
    dt = _number(t.get("dt", 1.0 / ell), "tree.dt")
    if n < 1 or ell < 1 or dt <= 0:
        raise ConfigError("tree: need n_banks >= 1, n_steps >= 1, dt > 0")

    a = doc["assets"]
    _check_keys(a, ASSET_KEYS, "assets")
    if "x0" not in a:
        raise ConfigError("assets: missing x0")
    x0 = np.broadcast_to(_array(a["x0"], "assets.x0"), (n,)).astype(float).copy() if np.ndim(_array(a["x0"], "assets.x0")) == 0 else _array(a["x0"], "assets.x0")
    if x0.shape != (n,):
        raise ConfigError(f"assets.x0: expected {n} entries, got {x0.size}")
    if np.any(x0 <= 0):
        raise ConfigError("assets.x0: entries must be > 0")
    sigma = variances = None
    correlation = 0.0
    if "sigma" in a:
        sigma = _array(a["sigma"], "assets.sigma")
        if sigma.shape != (n, n):
            raise ConfigError(f"assets.sigma: expected shape ({n},{n}), got {sigma.shape}")
        if "variances" in a or "correlation" in a:
            raise ConfigError("assets: give either sigma or (variances, correlation), not both")
    else:
        if "variances" not in a:
            raise ConfigError("assets: need sigma or variances")
        v = _array(a["variances"], "assets.variances")
        variances = np.full(n, float(v)) if v.ndim == 0 else v
        if variances.shape != (n,) or np.any(variances <= 0):
            raise ConfigError(f"assets.variances: need {n} positive entries")
        c = a.get("correlation", 0.0)
        correlation = _number(c, "assets.correlation") if not isinstance(c, list) else _array(c, "assets.correlation")
        if isinstance(correlation, np.ndarray) and correlation.shape != (n, n):
            raise ConfigError(f"assets.correlation: expected scalar or ({n},{n}) matrix")
        if not isinstance(correlation, np.ndarray) and not -1.0 < correlation < 1.0:
            raise ConfigError("assets.correlation must lie in (-1,1)")
    r = _number(a.get("r", 0.0), "assets.r")
    if r < 0:
        raise ConfigError("assets.r must be >= 0")

    net = doc["network"]
    _check_keys(net, NETWORK_KEYS, "network")
    sources = [k for k in ("liabilities", "maturities", "generator") if k in net]
    if len(sources) != 1:
        raise ConfigError("network: give exactly one of liabilities, maturities, generator")
    liabilities = maturities = None
    groups = {}
    if "liabilities" in net:
        liabilities = _array(net["liabilities"], "network.liabilities")
    elif "generator" in net:
        gen = net["generator"]
        _check_keys(gen, GEN_KEYS, "network.generator")
        if gen.get("kind") != "core_periphery":
            raise ConfigError("network.generator.kind must be 'core_periphery'")
        try:
            genv = {k: (int(gen[k]) if k.startswith("n_") else _number(gen[k], f"network.generator.{k}")) for k in GEN_KEYS - {"kind"}}
        except KeyError as exc:
            raise ConfigError(f"network.generator: missing {exc.args[0]}") from None
        liabilities, groups = _core_periphery_matrix(genv)
    else:
        mats = net["maturities"]
        if not isinstance(mats, dict):
            raise ConfigError("network.maturities: expected a mapping level -> matrix")
        maturities = {}
        for lvl, m in mats.items():
            li = int(lvl)
            if not 1 <= li <= ell:
                raise ConfigError(f"network.maturities: level {lvl} outside 1..{ell}")
            maturities[li] = _array(m, f"network.maturities[{lvl}]")
    for where, mat in ([("network.liabilities", liabilities)] if liabilities is not None else []) + [
        (f"network.maturities[{k}]", v) for k, v in (maturities or {}).items()
    ]:
        if mat.shape != (n, n + 1):
            raise ConfigError(f"{where}: expected shape ({n},{n + 1}) (society column first), got {mat.shape}")
    split = None
    if "split" in net:
        if liabilities is None:
            raise ConfigError("network.split applies to a single liabilities matrix")
        sp = net["split"]
        _check_keys(sp, SPLIT_KEYS, "network.split")
        kind = sp.get("kind")
        if kind not in ("uniform", "weights", "terminal"):
            raise ConfigError("network.split.kind must be uniform, weights or terminal")
        split = {"kind": kind}
        if kind == "uniform" and "seed" in sp:
            split["seed"] = int(sp["seed"])
        if kind == "weights":
            w = sp.get("weights")
            if not isinstance(w, dict):
                raise ConfigError("network.split.weights: expected a mapping level -> fraction")
            split["weights"] = {int(k): _number(v, f"network.split.weights[{k}]") for k, v in w.items()}
    if "groups" in net:
        g = net["groups"]
        if not isinstance(g, dict):
            raise ConfigError("network.groups: expected a mapping name -> bank ids (1-based)")
        groups = {str(k): [int(i) - 1 for i in v] for k, v in g.items()}
        for name, ids in groups.items():
            if any(not 0 <= i < n for i in ids):
                raise ConfigError(f"network.groups.{name}: bank ids must be in 1..{n}")

    m = doc["model"]
    _check_keys(m, MODEL_KEYS, "model")
    accounting = m.get("accounting", "both")
    if accounting not in MODES:
        raise ConfigError(f"model.accounting must be one of {MODES}")
    beta = _number(m.get("beta", 0.0), "model.beta")
    s = m.get("strategy", {"kind": "alpha0"})
    if isinstance(s, str):
        s = {"kind": s}
    _check_keys(s, STRATEGY_KEYS, "model.strategy")
    try:
        table = None if "table" not in s else _array(s["table"], "model.strategy.table")
        w = s.get("w", 2.0)
        w = _number(w, "model.strategy.w") if not isinstance(w, list) else tuple(_array(w, "model.strategy.w"))
        strategy = RebalancingStrategy(
            kind=s.get("kind", "alpha0"),
            w=w,
            theta_reg=_number(s.get("theta_reg", 0.08), "model.strategy.theta_reg"),
            table=table,
        )
    except ValueError as exc:
        raise ConfigError(f"model.strategy: {exc}") from None
    if table is not None and table.shape not in ((ell + 1, n), (ell + 1,)):
        raise ConfigError(f"model.strategy.table: expected shape ({ell + 1},{n})")

    o = doc.get("outputs", {}) or {}
    _check_keys(o, OUTPUT_KEYS, "outputs")
    reports = tuple(o.get("reports", ("summary", "curve")))

    sweep_parameter = sweep_grid = None
    if "sweep" in doc and doc["sweep"] is not None:
        sw = doc["sweep"]
        _check_keys(sw, SWEEP_KEYS, "sweep")
        sweep_parameter = sw.get("parameter")
        if sweep_parameter not in SWEEP_PARAMS:
            raise ConfigError(f"sweep.parameter must be one of {sorted(SWEEP_PARAMS)}")
        if "grid" not in sw:
            raise ConfigError("sweep: missing grid")
        sweep_grid = _grid(sw["grid"], "sweep.grid")

    cfg = ScenarioConfig(
        scenario_id=str(doc.get("scenario_id", Path(source).stem or "scenario")),
        n_banks=n,
        n_steps=ell,
        dt=dt,
        renormalize=bool(t.get("renormalize", True)),
        max_nodes=None if "max_nodes" not in t else int(t["max_nodes"]),
        x0=x0,
        variances=variances,
        correlation=correlation,
        sigma=sigma,
        r=r,
        liabilities=liabilities,
        maturities=maturities,
        split=split,
        groups=groups,
        accounting=accounting,
        beta=beta,
        strategy=strategy,
        out_dir=str(o.get("dir", "out")),
        reports=reports,
        sweep_parameter=sweep_parameter,
        sweep_grid=sweep_grid,
        source=source,
    )
    # surface network invariants as configuration errors
    try:
        if cfg.split is None or cfg.split["kind"] != "uniform" or "seed" in cfg.split:
            cfg.network()
        elif cfg.liabilities is not None:
            NetworkSpec.single(cfg.liabilities, cfg.beta, cfg.r)
    except (NetworkError, ValueError) as exc:
        raise ConfigError(f"network: {exc}") from None
    return cfg


def load_config(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from None
    return parse_config(doc, str(path))


# ---------------------------------------------------------------------------
# output helpers


def _write_rows(path, fields, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _write_meta(out_dir, cfg, command, extra=None):
    meta = {
        "command": command,
        "scenario_id": cfg.scenario_id,
        "config": cfg.source,
        "seeds": dict(sorted(cfg.seeds.items())),
    }
    if extra:
        meta.update(extra)
    with open(Path(out_dir) / f"{cfg.scenario_id}_{command}_meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _pool_map(fn, items, threads):
    if threads and threads > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def _modes(mode):
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    return ("mtm", "hpa") if mode == "both" else (mode,)


def _fmt(x) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# run-single


def run_single(cfg: ScenarioConfig, out_dir, seed_path: int = 0, mode: str = "both") -> dict:
    """Clear a single-maturity scenario; write a sample-path report and a summary."""
    if cfg.is_multi:
        raise ConfigError("run-single needs a single-maturity network (no split, no maturities)")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tree = cfg.tree()
    assets = cfg.assets(tree)
    spec = cfg.network()
    sols = {}
    for m in _modes(mode):
        sols[m] = clear_maximal_picard(tree, assets, spec) if m == "mtm" else clear_hpa_single(tree, assets, spec)
    cfg.seeds["path"] = int(seed_path)
    rng = np.random.default_rng(seed_path)
    node = 0
    path_rows = []
    for l in range(tree.n_steps + 1):
        if l > 0:
            node = node * tree.branching + int(rng.integers(tree.branching))
        for m, sol in sols.items():
            for i in range(tree.n_banks):
                path_rows.append(
                    {
                        "step": l,
                        "time": f"{l * tree.dt:.6g}",
                        "node": node,
                        "bank_id": i + 1,
                        "x": _fmt(assets.level(l)[node, i]),
                        "K": _fmt(sol.K[l][node, i]),
                        "P": _fmt(sol.P[l][node, i]),
                        "accounting_mode": m,
                        "scenario_id": cfg.scenario_id,
                    }
                )
    summary_rows, summary = [], {}
    for m, sol in sols.items():
        surv = (sol.tau > tree.n_steps).mean(axis=0)
        summary[m] = {"P0": sol.P[0][0].copy(), "K0": sol.K[0][0].copy(), "survival": surv, "method": sol.method}
        for i in range(tree.n_banks):
            summary_rows.append(
                {
                    "bank_id": i + 1,
                    "accounting_mode": m,
                    "P0": _fmt(sol.P[0][0, i]),
                    "K0": _fmt(sol.K[0][0, i]),
                    "default_prob": _fmt(1.0 - surv[i]),
                    "scenario_id": cfg.scenario_id,
                }
            )
    _write_rows(out / f"{cfg.scenario_id}_path.csv", path_rows[0].keys(), path_rows)
    _write_rows(out / f"{cfg.scenario_id}_summary.csv", summary_rows[0].keys(), summary_rows)
    _write_meta(out, cfg, "run-single", {m: s.method for m, s in sols.items()})
    return summary


# ---------------------------------------------------------------------------
# sweep-correlation


def _corr_point(args):
    cfg, rho, modes = args
    tree = cfg.tree()
    assets = cfg.assets(tree, correlation=rho)
    spec = cfg.network()
    runs = []
    for m in modes:
        sol = clear_maximal_picard(tree, assets, spec) if m == "mtm" else clear_hpa_single(tree, assets, spec)
        runs.append((m, sol))
    runs.append(("no_network", clear_maximal_picard(tree, assets, spec.without_interbank())))
    rows = []
    for m, sol in runs:
        dead = sol.tau <= tree.n_steps
        rows.append(
            {
                "rho": rho,
                "accounting_mode": m,
                "P1_0": float((~dead[:, 0]).mean()),
                "prob_any_default": float(dead.any(axis=1).mean()),
                "prob_joint_default": float(dead.all(axis=1).mean()),
            }
        )
    return rows


def sweep_correlation(cfg: ScenarioConfig, rho_grid=None, out_dir=None, mode: str = "both", threads: int = 1) -> list:
    """Survival and default frequencies over a correlation grid, plus the no-network ablation."""
    if cfg.n_banks != 2 or cfg.is_multi:
        raise ConfigError("sweep-correlation needs a two-bank single-maturity scenario")
    if cfg.variances is None:
        raise ConfigError("sweep-correlation needs assets.variances (correlation is swept)")
    grid = rho_grid if rho_grid is not None else (cfg.sweep_grid if cfg.sweep_parameter == "rho" else None)
    if grid is None:
        grid = np.linspace(-0.995, 0.995, 400)
    grid = np.asarray(grid, dtype=float)
    if np.any(np.abs(grid) >= 1):
        raise ConfigError("correlation grid must lie strictly inside (-1,1)")
    modes = _modes(mode)
    chunks = _pool_map(_corr_point, [(cfg, float(r), modes) for r in grid], threads)
    rows = [row for chunk in chunks for row in chunk]
    order = {"mtm": 0, "hpa": 1, "no_network": 2}
    rows.sort(key=lambda r: (r["rho"], order[r["accounting_mode"]]))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        fields = ("rho", "accounting_mode", "P1_0", "prob_any_default", "prob_joint_default", "scenario_id")
        _write_rows(
            out / f"{cfg.scenario_id}_correlation.csv",
            fields,
            [{**{k: (_fmt(v) if isinstance(v, float) else v) for k, v in r.items()}, "scenario_id": cfg.scenario_id} for r in rows],
        )
        _write_meta(out, cfg, "sweep-correlation", {"grid_points": int(grid.size)})
    return rows


# ---------------------------------------------------------------------------
# multi-maturity runs


def _multi_runs(cfg, tree, assets, spec, strategy, modes, ablation=False):
    """Survival curves ``(n, n_steps + 1)`` per accounting mode (and no-network)."""
    out = {}
    for m in modes:
        if m == "mtm":
            sol = clear_multi(tree, assets, spec, strategy)
            out[m] = (sol.survival_at_zero(), sol)
        else:
            sol = clear_hpa_multi(tree, assets, spec, strategy)
            out[m] = (hpa_survival(sol), sol)
    if ablation:
        sol = clear_multi(tree, assets, spec.without_interbank(), strategy)
        out["no_network"] = (sol.survival_at_zero(), sol)
    return out


def _obligation_levels(spec) -> list:
    """Levels with any obligation due."""
    return [l for l in range(1, spec.n_maturities) if np.any(spec.liabilities[l] > 0)]


def leverage_network(cfg: ScenarioConfig, lam: float) -> NetworkSpec:
    """Symmetric two-bank family: interbank total ``Lbar`` with ``lambda = (x0 + Lbar)/(x0 - ext)``."""
    if cfg.n_banks != 2 or cfg.liabilities is None or cfg.split is None:
        raise ConfigError("sweep-leverage needs a two-bank liabilities matrix with a split rule")
    x0 = cfg.x0
    ext = cfg.liabilities[:, 0]
    if not (np.isclose(x0[0], x0[1]) and np.isclose(ext[0], ext[1])):
        raise ConfigError("sweep-leverage needs symmetric banks")
    equity = x0[0] - ext[0]
    if equity <= 0:
        raise ConfigError("sweep-leverage needs x0 above external obligations")
    base = x0[0] / equity
    Lbar = lam * equity - x0[0]
    if Lbar < -1e-12:
        raise ConfigError(f"leverage {lam} below the no-network level {base:.6g}")
    L = cfg.liabilities.copy()
    L[0, 2] = L[1, 1] = max(Lbar, 0.0)
    return cfg.network(liabilities=L)


def _lev_point(args):
    cfg, lam, modes = args
    tree = cfg.tree()
    assets = cfg.assets(tree)
    spec = leverage_network(cfg, lam)
    runs = _multi_runs(cfg, tree, assets, spec, cfg.strategy, modes)
    levels = _obligation_levels(spec)
    mats = np.array(levels) * tree.dt
    rows, flags = [], {}
    for m, (surv, sol) in runs.items():
        curve = curve_from_probabilities(surv[:, levels], mats)
        shape = shape_diagnostics(curve).overall
        flags[m] = shape
        for row in curve_rows(curve, m, cfg.scenario_id):
            rows.append({"lambda": f"{lam:.6g}", **row, "shape": shape, "method": sol.method})
    return rows


def sweep_leverage(cfg: ScenarioConfig, lambda_grid=None, out_dir=None, mode: str = "both", threads: int = 1) -> list:
    """Yields at each obligation date over a leverage grid."""
    grid = lambda_grid if lambda_grid is not None else (cfg.sweep_grid if cfg.sweep_parameter == "lambda" else None)
    if grid is None:
        grid = np.round(np.arange(1.5, 2.5001, 0.1), 10)
    modes = _modes(mode)
    chunks = _pool_map(_lev_point, [(cfg, float(l), modes) for l in grid], threads)
    rows = [r for c in chunks for r in c]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        fields = ("lambda", "bank_id", "maturity_years", "survival_prob", "rate", "accounting_mode", "scenario_id", "shape", "method")
        _write_rows(out / f"{cfg.scenario_id}_leverage.csv", fields, rows)
        _write_meta(out, cfg, "sweep-leverage", {"grid": [float(g) for g in grid]})
    return rows


def run_term_structure(cfg: ScenarioConfig, out_dir=None, seed_split=None, mode: str = "both", strategies=None) -> dict:
    """Curves for each bank under several rebalancing strategies."""
    if not cfg.is_multi:
        raise ConfigError("term-structure needs a split rule or per-level maturities")
    tree = cfg.tree()
    assets = cfg.assets(tree)
    spec = cfg.network(seed_split=seed_split)
    if strategies is None:
        base = cfg.strategy
        strategies = [
            RebalancingStrategy("alpha0"),
            RebalancingStrategy("alphaL"),
            RebalancingStrategy("optimal", w=base.w, theta_reg=base.theta_reg),
        ]
    levels = list(range(1, tree.n_steps + 1))
    mats = np.array(levels) * tree.dt
    curves, rows = {}, []
    for s in strategies:
        runs = _multi_runs(cfg, tree, assets, spec, s, _modes(mode))
        for m, (surv, sol) in runs.items():
            curve = curve_from_probabilities(surv[:, levels], mats)
            curves[(s.kind, m)] = curve
            rows += curve_rows(curve, m, f"{cfg.scenario_id}/{s.kind}")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_curve_csv(out / f"{cfg.scenario_id}_term_structure.csv", rows)
        _write_meta(out, cfg, "term-structure", {"strategies": [s.label for s in strategies]})
    return curves


def _group_variances(cfg, core_var):
    var = np.array(cfg.variances, dtype=float)
    var[cfg.groups["core"]] = core_var
    return var


def run_core_periphery(cfg: ScenarioConfig, out_dir=None, mode: str = "both", core_variances=None) -> dict:
    """Group-averaged curves for each core-volatility regime, accounting mode and the no-network ablation."""
    if "core" not in cfg.groups or "periphery" not in cfg.groups:
        raise ConfigError("core-periphery needs core and periphery groups (generator or network.groups)")
    if cfg.variances is None:
        raise ConfigError("core-periphery needs assets.variances")
    grid = core_variances
    if grid is None:
        grid = cfg.sweep_grid if cfg.sweep_parameter == "core_variance" else [cfg.variances[cfg.groups["core"][0]]]
    tree = cfg.tree()
    spec = cfg.network()
    levels = _obligation_levels(spec)
    mats = np.array(levels) * tree.dt
    results, rows, shape_rows = {}, [], []
    for cv in grid:
        assets = cfg.assets(tree, variances=_group_variances(cfg, float(cv)))
        runs = _multi_runs(cfg, tree, assets, spec, cfg.strategy, _modes(mode), ablation=True)
        for m, (surv, sol) in runs.items():
            group_surv = np.stack([surv[idx][:, levels].mean(axis=0) for idx in (cfg.groups["core"], cfg.groups["periphery"])])
            curve = curve_from_probabilities(group_surv, mats)
            shapes = shape_diagnostics(curve).shapes
            results[(float(cv), m)] = (curve, dict(zip(("core", "periphery"), shapes)))
            sid = f"{cfg.scenario_id}/core_var={float(cv):g}"
            rows += curve_rows(curve, m, sid, bank_ids=["core", "periphery"])
            for g, sh in zip(("core", "periphery"), shapes):
                shape_rows.append({"scenario_id": sid, "accounting_mode": m, "group": g, "shape": sh, "short_rate": format_rate(curve.rates[0 if g == "core" else 1, 0])})
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_curve_csv(out / f"{cfg.scenario_id}_core_periphery.csv", rows)
        _write_rows(out / f"{cfg.scenario_id}_shapes.csv", ("scenario_id", "accounting_mode", "group", "shape", "short_rate"), shape_rows)
        _write_meta(out, cfg, "core-periphery", {"core_variances": [float(c) for c in grid]})
    return results


# ---------------------------------------------------------------------------
# certification


def certify(cfg: ScenarioConfig, out_dir=None, seed_split=None) -> list:
    """
    Run the brute-force oracle on a scenario.

    Single-maturity trees small enough for enumeration compare the engine's
    extremes with the oracle lattice; otherwise (and for several maturities)
    the mark-to-market and historical solutions are re-evaluated node by node.
    Raises ``CertificationError`` on the first failure.
    """
    from .clearing_single import clear_minimal
    from .errors import GuardViolation

    tree = cfg.tree()
    assets = cfg.assets(tree)
    spec = cfg.network(seed_split=seed_split)
    lines = []
    if spec.is_single:
        mx = clear_maximal_picard(tree, assets, spec)
        try:
            sols = enumerate_fixed_points_single(tree, assets, spec)
            top, bot = lattice_extremes(sols)
            mn = clear_minimal(tree, assets, spec)
            ok = np.array_equal(top.tau, mx.tau) and np.array_equal(bot.tau, mn.tau)
            ok = ok and all(np.allclose(a, b, rtol=0, atol=1e-12) for a, b in zip(top.K + top.P, mx.K + mx.P))
            ok = ok and all(np.allclose(a, b, rtol=0, atol=1e-12) for a, b in zip(bot.K + bot.P, mn.K + mn.P))
            lines.append(f"oracle lattice ({len(sols)} solutions) vs engine extremes: {'PASS' if ok else 'FAIL'}")
            if not ok:
                raise CertificationError(lines[-1])
        except GuardViolation:
            lines.append("oracle lattice: skipped (tree too large for enumeration)")
        # a single-maturity network is the several-maturity one with everything due at T
        multi = split_obligations(spec, tree.n_steps, weights={tree.n_steps: 1.0})
    else:
        multi = spec
    checks = [("mtm", clear_multi(tree, assets, multi, cfg.strategy)), ("hpa", clear_hpa_multi(tree, assets, multi, cfg.strategy))]
    for m, sol in checks:
        verdict = certify_multi(tree, assets, multi, cfg.strategy, sol, mode=m)
        lines.append(f"certify_multi {m} ({sol.method}): {verdict}")
        if not verdict:
            raise CertificationError(lines[-1])
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{cfg.scenario_id}_certify.txt").write_text("\n".join(lines) + "\n")
    return lines
