"""Staged runs over a configuration, persisted results and table emission.

Stages are cumulative: sectors < unperturbed < tensors < weyl < scatter.
``compare`` runs the scatter sweep (with midpoint samples) for two
configurations and compares them. Everything stored on a :class:`RunResult`
is JSON-native, so a saved result reloads to an equal object.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import ProblemConfig, config_from_dict
from .errors import ValidationError, WeylSysError
from .exterior import tensor_norm
from .scattering import Sweep, compare, merge_sweeps, sweep
from .sectors import compute_sectors
from .unperturbed import build_frame
from .volterra import RhoContext, solve_all
from .weyl import build_weyl

log = logging.getLogger("weylsys")

STAGES = ("sectors", "unperturbed", "tensors", "weyl", "scatter", "compare")
TABLES = ("deltas", "scattering", "solutions", "diagnostics")


def pair(z) -> list:
    z = complex(z)
    return [float(z.real), float(z.imag)]


def pairs(a) -> list:
    a = np.asarray(a)
    if a.ndim == 0:
        return pair(a)
    return [pairs(v) for v in a]


@dataclass
class RunResult:
    run_id: str
    stage: str
    config_hash: str
    config: dict
    config_b: dict | None = None
    config_b_hash: str | None = None
    sectors: list = field(default_factory=list)
    delta0: list = field(default_factory=list)
    tensors: list = field(default_factory=list)
    deltas: list = field(default_factory=list)
    scattering: list = field(default_factory=list)
    compare: dict | None = None
    solutions: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks if c["hard"])

    def failed_checks(self) -> list:
        return [c for c in self.checks if c["hard"] and not c["passed"]]

    def to_dict(self) -> dict:
        return asdict(self)

    def result_hash(self) -> str:
        """sha256 of everything except wall-clock timing."""
        d = self.to_dict()
        d.pop("timing")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        return cls(**d)


def load_result(path) -> RunResult:
    return RunResult.from_dict(json.loads(Path(path).read_text()))


def _check(name, value, limit, hard=True, below=True) -> dict:
    ok = bool(value <= limit) if below else bool(value > limit)
    return {"name": name, "value": float(value), "limit": float(limit), "passed": ok,
            "hard": hard}


# workers rebuild per-config state once and keep it for later items
_STATE: dict = {}


def _state(cfg_dict: dict):
    key = json.dumps(cfg_dict, sort_keys=True)
    if key not in _STATE:
        cfg = config_from_dict(cfg_dict)
        spec = cfg.spec()
        secs = compute_sectors(spec.b)
        frames = [build_frame(spec, s) for s in secs]
        _STATE.clear()
        _STATE[key] = (cfg, spec, secs, frames)
    return _STATE[key]


def _pmap(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _family_row(sector, fam) -> dict:
    dist = tensor_norm(fam.Yhat - fam.Y0hat) / np.maximum(tensor_norm(fam.Y0hat), 1e-300)
    return {"sector": sector, "kind": fam.kind, "k": fam.k, "rho": pair(fam.rho),
            "iterations": int(fam.iterations),
            "last_increment": float(fam.increments[-1]) if fam.increments else 0.0,
            "distance_to_unperturbed": float(dist.max())}


def _weyl_item(args):
    cfg_dict, nu, i, with_weyl, keep_psi = args
    cfg, spec, secs, frames = _state(cfg_dict)
    grid = cfg.grid.nodes()
    rho = complex(cfg.rho.moduli()[i] * secs[nu].mid)
    try:
        ctx = RhoContext(frames[nu], rho, grid)
        T, F = solve_all(ctx, cfg.tol.picard)
        rows = [_family_row(nu, f) for f in T + F]
        out = {"tensors": rows}
        if with_weyl:
            wf = build_weyl(frames[nu], rho, grid, ctx=ctx, families=(T, F),
                            decomp_tol=cfg.tol.decomposition, max_spread=cfg.tol.spread)
            out["deltas"] = [{"sector": nu, "k": k + 1, "rho": pair(rho),
                              "delta": pair(wf.delta[k]), "spread": float(wf.delta_spread[k])}
                             for k in range(wf.n)]
            d = wf.diagnostics
            out["diag"] = {
                "sector": nu, "rho": pair(rho),
                "T_reconstruction": max(d["decomposition"]["T_reconstruction"]),
                "F_reconstruction": max(d["decomposition"]["F_reconstruction"]),
                "T_annihilation": float(d["decomposition"]["T_annihilation"]),
                "F_annihilation": float(d["decomposition"]["F_annihilation"]),
                "constructions_gap": max(r["constructions_gap"] for r in d["relations"]),
                "ode_residual": [float(v) for v in d["ode_residual"]],
                "infinity_limit": [float(v) for v in d["asymptotics"]["infinity"]],
            }
            if keep_psi:
                out["solution"] = {"sector": nu, "rho": pair(rho), "x": wf.x.tolist(),
                                   "psi": pairs(wf.Psi())}
        return out
    except WeylSysError as exc:
        raise exc.add_context(sector=nu, rho=rho)


def _sweep_item(args):
    cfg_dict, nu, interior = args
    cfg, spec, secs, frames = _state(cfg_dict)
    try:
        return sweep(spec, secs, cfg.rho.moduli(), cfg.grid.nodes(), frames,
                     interior=interior, max_spread=cfg.tol.spread, rays=[nu])
    except WeylSysError as exc:
        raise exc.add_context(ray=nu)


def _run_sweep(cfg: ProblemConfig, interior: bool, jobs: int) -> Sweep:
    d = cfg.to_dict()
    n_rays = len(compute_sectors(cfg.b))
    parts = _pmap(_sweep_item, [(d, nu, interior) for nu in range(n_rays)], jobs)
    return merge_sweeps(parts)


def _scatter_rows(sw: Sweep) -> list:
    rows = []
    for data in sw.rays:
        for s in data.samples:
            rows.append({"ray": data.ray, "rho": pair(s.rho), "v": pairs(s.v),
                         "spread": float(s.spread), "cond": float(s.cond),
                         "det": pair(s.det), "margins": [float(m) for m in s.margins]})
    return rows


def run_pipeline(cfg: ProblemConfig, stage: str, cfg_b: ProblemConfig | None = None,
                 jobs: int = 1, cache: dict | None = None) -> RunResult:
    """Execute every stage up to ``stage``.

    ``cache`` (config hash -> Sweep) lets repeated compare runs reuse the
    sweep of an already processed configuration; the two sides of one
    compare never share a sweep.
    """
    if stage not in STAGES:
        raise ValidationError(f"unknown stage {stage!r}", stages=list(STAGES))
    if (stage == "compare") != (cfg_b is not None):
        raise ValidationError("compare takes exactly two configurations")
    level = STAGES.index(stage)
    h = cfg.hash()
    res = RunResult(f"{stage}-{h[:12]}", stage, h, cfg.to_dict())
    t_all = time.perf_counter()
    spec = cfg.spec()
    cur = "sectors"
    try:
        t = time.perf_counter()
        secs = compute_sectors(spec.b)
        res.sectors = [s.to_dict() for s in secs]
        res.timing["sectors"] = time.perf_counter() - t
        if level >= 1:
            cur = "unperturbed"
            t = time.perf_counter()
            for s in secs:
                fr = build_frame(spec, s)
                res.delta0.append({"sector": s.index, "delta0": pairs(fr.delta0),
                                   "spread": float(fr.delta0_spread), "z_as": float(fr.z_as)})
            m = min(min(abs(complex(*z)) for z in r["delta0"]) for r in res.delta0)
            res.checks.append(_check("condition R0: min |Delta0_k|", m, 0.0, below=False))
            res.timing["unperturbed"] = time.perf_counter() - t
        if level in (2, 3):
            cur = "tensors" if level == 2 else "weyl"
            t = time.perf_counter()
            keep = {(e["sector"], e["rho_index"]) for e in cfg.output.solutions}
            items = [(res.config, s.index, i, level >= 3, (s.index, i) in keep)
                     for s in secs for i in range(cfg.rho.count)]
            for out in _pmap(_weyl_item, items, jobs):
                res.tensors += out["tensors"]
                if level >= 3:
                    res.deltas += out["deltas"]
                    res.diagnostics.setdefault("weyl", []).append(out["diag"])
                    if "solution" in out:
                        res.solutions.append(out["solution"])
            if spec.q.is_zero:
                dev = max(r["distance_to_unperturbed"] for r in res.tensors)
                res.checks.append(_check("q = 0: tensors equal unperturbed", dev, 1e-10))
            if level >= 3:
                res.checks.append(_check("Delta_k x-spread", max(r["spread"] for r in res.deltas),
                                         cfg.tol.wronskian))
                wd = res.diagnostics["weyl"]
                rec = max(max(e["T_reconstruction"], e["F_reconstruction"]) for e in wd)
                ann = max(max(e["T_annihilation"], e["F_annihilation"]) for e in wd)
                res.checks.append(_check("decomposition reconstruction", rec, 1e-8))
                res.checks.append(_check("decomposition annihilation", ann, 1e-8))
                # finite differences are meaningless once |rho| h is large: report only
                res.checks.append(_check("psi ODE residual (reported)",
                                         max(max(e["ode_residual"]) for e in wd), 1e-5,
                                         hard=False))
            res.timing[cur] = time.perf_counter() - t
        if level == 4:
            cur = "scatter"
            t = time.perf_counter()
            sw = _run_sweep(cfg, False, jobs)
            res.scattering = _scatter_rows(sw)
            res.checks.append(_check("v x-spread", max(r["spread"] for r in res.scattering),
                                     cfg.tol.wronskian))
            res.checks.append(_check("min |det v|", min(abs(complex(*r["det"]))
                                                        for r in res.scattering), 0.0,
                                     below=False))
            res.timing["scatter"] = time.perf_counter() - t
        if level == 5:
            cur = "compare"
            _compare_stage(res, cfg, cfg_b, jobs, cache)
    except WeylSysError as exc:
        raise exc.add_context(stage=cur)
    res.timing["total"] = time.perf_counter() - t_all
    return res


def _compare_stage(res: RunResult, cfg, cfg_b, jobs, cache):
    if not np.array_equal(cfg.b, cfg_b.b):
        raise ValidationError("compare needs the same B in both configurations")
    if cfg.grid != cfg_b.grid or cfg.rho != cfg_b.rho:
        raise ValidationError("compare needs identical grid and rho sections")
    hb = cfg_b.hash()
    res.config_b, res.config_b_hash = cfg_b.to_dict(), hb
    cache = {} if cache is None else cache
    t = time.perf_counter()
    sw_a = cache.get(res.config_hash) or _run_sweep(cfg, True, jobs)
    cache[res.config_hash] = sw_a
    # an identical second config is still computed from scratch
    sw_b = (None if hb == res.config_hash else cache.get(hb)) or _run_sweep(cfg_b, True, jobs)
    cache.setdefault(hb, sw_b)
    rep = compare(sw_a, sw_b)
    mp = rep["mapping"]
    res.scattering = _scatter_rows(sw_a)
    res.compare = {
        "scattering_b": _scatter_rows(sw_b),
        "rays": rep["rays"],
        "max_v_rel_diff": rep["max_v_rel_diff"],
        "witness": rep["witness"],
        "max_P_minus_I": mp.max_P_minus_I,
        "max_jump": mp.max_jump,
        "small_rho_bound": mp.small_rho_bound,
        "large_rho_deviation": mp.large_rho_deviation,
        "large_rho_exponent": (mp.large_rho_exponent if np.isfinite(mp.large_rho_exponent)
                               else None),
        "P_samples": [{**s, "rho": pair(s["rho"])} for s in mp.samples],
    }
    spread = max(max(r["spread"] for r in res.scattering),
                 max(r["spread"] for r in res.compare["scattering_b"]))
    res.checks.append(_check("v x-spread", spread, cfg.tol.wronskian))
    same = hb == res.config_hash
    res.checks.append(_check("identical inputs: max ||P - I||", mp.max_P_minus_I,
                             cfg.tol.mapping, hard=same))
    res.checks.append(_check("identical inputs: max ||v~ - v|| / ||v||", rep["max_v_rel_diff"],
                             1e-6, hard=same))
    res.checks.append({"name": "injectivity witness (reported)", "value": float(rep["witness"]),
                       "limit": 1.0, "passed": bool(rep["witness"]) or same, "hard": False})
    res.timing["compare"] = time.perf_counter() - t


# ---------------------------------------------------------------- emission

def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def deltas_csv(res: RunResult) -> str:
    rows = [(d["sector"], d["k"], *d["rho"], *d["delta"], d["spread"]) for d in res.deltas]
    return _csv(["sector", "k", "rho_re", "rho_im", "delta_re", "delta_im", "spread"], rows)


def scattering_csv(res: RunResult) -> str:
    if not res.scattering:
        return _csv(["ray", "rho_re", "rho_im"], [])
    n = len(res.scattering[0]["v"])
    vcols = [f"v{j + 1}{k + 1}_{p}" for j in range(n) for k in range(n) for p in ("re", "im")]
    header = ["ray", "rho_re", "rho_im", *vcols, "spread", "cond", "det_re", "det_im"]
    rows = []
    for r in res.scattering:
        flat = [c for row in r["v"] for z in row for c in z]
        rows.append((r["ray"], *r["rho"], *flat, r["spread"], r["cond"], *r["det"]))
    return _csv(header, rows)


def solutions_csv(res: RunResult) -> str:
    """Plot data: one row per (sector, rho, k, x) with Re, Im and |.| of each component."""
    if not res.solutions:
        return _csv(["sector", "k", "rho_re", "rho_im", "x"], [])
    n = len(res.solutions[0]["psi"][0])
    comp = [f"{p}_{i + 1}" for i in range(n) for p in ("re", "im", "abs")]
    rows = []
    for s in res.solutions:
        for k in range(n):
            for x, P in zip(s["x"], s["psi"]):
                vals = []
                for i in range(n):
                    re, im = P[i][k]
                    vals += [re, im, float(np.hypot(re, im))]
                rows.append((s["sector"], k + 1, *s["rho"], x, *vals))
    return _csv(["sector", "k", "rho_re", "rho_im", "x", *comp], rows)


def _flatten(prefix, obj, out):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(obj, list) and obj and not all(isinstance(v, (int, float)) for v in obj):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}[{i}]", v, out)
    else:
        out.append((prefix, json.dumps(obj)))


def diagnostics_csv(res: RunResult) -> str:
    rows = []
    for c in res.checks:
        rows.append((f"check:{c['name']}", json.dumps(c)))
    _flatten("", res.diagnostics, rows)
    if res.compare:
        _flatten("compare", {k: v for k, v in res.compare.items()
                             if k not in ("scattering_b", "P_samples")}, rows)
    return _csv(["key", "value"], rows)


_CSV = {"deltas": deltas_csv, "scattering": scattering_csv, "solutions": solutions_csv,
        "diagnostics": diagnostics_csv}


def _json_part(res: RunResult, what: str) -> dict:
    if what == "all":
        return res.to_dict()
    if what == "diagnostics":
        return {"checks": res.checks, "diagnostics": res.diagnostics, "compare": res.compare}
    return {what: getattr(res, what)}


def emit(res: RunResult, fmt: str, what: str, out_dir) -> list[Path]:
    """Write tables for ``what`` (a table name or 'all') in csv or json."""
    if fmt not in ("csv", "json"):
        raise ValidationError(f"unknown format {fmt!r}")
    names = TABLES if what == "all" else (what,)
    for w in names:
        if w not in TABLES:
            raise ValidationError(f"unknown table {w!r}", tables=list(TABLES))
    out_dir = Path(out_dir)
    paths = []
    if fmt == "json":
        p = out_dir / f"{what}.json"
        _atomic_write(p, json.dumps(_json_part(res, what), indent=1))
        return [p]
    for w in names:
        p = out_dir / f"{w}.csv"
        _atomic_write(p, _CSV[w](res))
        paths.append(p)
    return paths


def persist(res: RunResult, out_root, fmt: str = "csv") -> Path:
    """result.json, echoed configs and the stage's tables under out_root/run_id."""
    import yaml

    d = Path(out_root) / res.run_id
    _atomic_write(d / "result.json", json.dumps(res.to_dict(), indent=1))
    _atomic_write(d / "config.yaml", yaml.safe_dump(res.config, sort_keys=False))
    if res.config_b is not None:
        _atomic_write(d / "config_b.yaml", yaml.safe_dump(res.config_b, sort_keys=False))
    tables = ["diagnostics"]
    if res.deltas:
        tables.append("deltas")
    if res.scattering:
        tables.append("scattering")
    if res.solutions:
        tables.append("solutions")
    for w in tables:
        emit(res, fmt, w, d)
    return d
