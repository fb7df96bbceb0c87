"""Problem configuration files.

YAML with nested sections. Complex numbers are ``[re, im]`` pairs (a bare
number is read as real). Every default that is filled in appears in
:meth:`ProblemConfig.to_dict`, so the persisted copy is complete.

Example::

    n: 3
    A: [[[0, 0], [1, 0], [0, 0]],
        [[0.13, 0], [0, 0], [1, 0]],
        [[-0.012, 0], [0, 0], [0, 0]]]
    b: [[1, 0], [0, 1], [-1, -1]]
    q:
      kind: exp_decay
      c: ...            # n x n matrix of pairs
      d: 1.0
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .errors import AssumptionViolated, ParseError, ValidationError
from .potentials import (BumpPotential, ExpDecayPotential, GridPotential, Potential,
                         SumPotential, ZeroPotential)
from .system import SystemSpec, validate_assumption1
from .volterra import default_grid


@dataclass
class GridConfig:
    x_min: float = 1e-4
    x_mid: float = 1.0
    X_max: float = 40.0
    n_geo: int = 500
    n_uni: int = 1500

    def nodes(self) -> np.ndarray:
        return default_grid(self.x_min, self.x_mid, self.X_max, self.n_geo, self.n_uni)


@dataclass
class RhoConfig:
    """|rho| samples: ``count`` geometric points on [min, max]."""

    min: float = 0.05
    max: float = 51.2
    count: int = 11

    def moduli(self) -> np.ndarray:
        if self.count == 1:
            return np.array([self.min])
        return np.geomspace(self.min, self.max, self.count)


@dataclass
class Tolerances:
    picard: float = 1e-10
    decomposition: float = 1e-8
    spread: float = 1e-4
    wronskian: float = 1e-5
    mapping: float = 1e-5


@dataclass
class OutputConfig:
    """Which (sector, rho index) pairs keep full psi samples for plot data."""

    solutions: list = field(default_factory=lambda: [{"sector": 0, "rho_index": 0}])


@dataclass
class ProblemConfig:
    n: int
    A: np.ndarray
    b: np.ndarray
    q: Potential
    eigvec_scale: np.ndarray | None = None
    grid: GridConfig = field(default_factory=GridConfig)
    rho: RhoConfig = field(default_factory=RhoConfig)
    tol: Tolerances = field(default_factory=Tolerances)
    output: OutputConfig = field(default_factory=OutputConfig)
    source: str | None = None

    def spec(self) -> SystemSpec:
        return SystemSpec(self.A, self.b, self.q, self.eigvec_scale)

    def to_dict(self) -> dict:
        d = {
            "n": self.n,
            "A": _pairs(self.A),
            "b": [_pair(z) for z in self.b],
            "q": self.q.to_dict(),
            "grid": asdict(self.grid),
            "rho": asdict(self.rho),
            "tol": asdict(self.tol),
            "output": asdict(self.output),
        }
        if self.eigvec_scale is not None:
            d["eigvec_scale"] = [_pair(z) for z in self.eigvec_scale]
        return d

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)


def _pair(z) -> list:
    z = complex(z)
    return [float(z.real), float(z.imag)]


def _pairs(M) -> list:
    return [[_pair(z) for z in row] for row in np.asarray(M)]


class _Lines:
    """Line numbers (1-based) of every mapping key path in a YAML document."""

    def __init__(self, text: str):
        self.map: dict[tuple, int] = {}
        try:
            node = yaml.compose(text)
        except yaml.YAMLError:
            node = None
        if node is not None:
            self._walk(node, ())

    def _walk(self, node, path):
        self.map.setdefault(path, node.start_mark.line + 1)
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                self.map[path + (k.value,)] = k.start_mark.line + 1
                self._walk(v, path + (k.value,))
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                self._walk(v, path + (i,))

    def line(self, path) -> int | None:
        path = tuple(path)
        while path and path not in self.map:
            path = path[:-1]
        return self.map.get(path)


class _Reader:
    def __init__(self, lines: _Lines):
        self.lines = lines

    def fail(self, path, msg):
        where = ".".join(str(p) for p in path) or "<root>"
        raise ParseError(f"{where}: {msg}", field=where, line=self.lines.line(path))

    def complex(self, v, path) -> complex:
        if isinstance(v, bool):
            self.fail(path, "expected a number or [re, im] pair")
        if isinstance(v, (int, float)):
            return complex(float(v), 0.0)
        if isinstance(v, (list, tuple)) and len(v) == 2 and all(
                isinstance(t, (int, float)) and not isinstance(t, bool) for t in v):
            return complex(float(v[0]), float(v[1]))
        self.fail(path, "expected a number or [re, im] pair")

    def vector(self, v, path, n=None) -> np.ndarray:
        if not isinstance(v, list):
            self.fail(path, "expected a list")
        if n is not None and len(v) != n:
            self.fail(path, f"expected {n} entries, got {len(v)}")
        return np.array([self.complex(z, path + (i,)) for i, z in enumerate(v)])

    def matrix(self, v, path, n) -> np.ndarray:
        if not isinstance(v, list) or len(v) != n:
            self.fail(path, f"expected {n} rows")
        return np.array([self.vector(r, path + (i,), n) for i, r in enumerate(v)])

    def real(self, v, path) -> float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(path, "expected a real number")
        return float(v)

    def section(self, cls, raw, path):
        if raw is None:
            return cls()
        if not isinstance(raw, dict):
            self.fail(path, "expected a mapping")
        names = {f.name: f for f in fields(cls)}
        unknown = set(raw) - set(names)
        if unknown:
            self.fail(path + (sorted(unknown)[0],), "unknown key")
        kw = {}
        for k, v in raw.items():
            typ = type(getattr(cls(), k))
            if typ is int:
                if isinstance(v, bool) or not isinstance(v, int):
                    self.fail(path + (k,), "expected an integer")
                kw[k] = v
            elif typ is float:
                kw[k] = self.real(v, path + (k,))
            else:
                kw[k] = v
        return cls(**kw)

    def potential(self, raw, path, n) -> Potential:
        if raw is None or raw == "zero":
            return ZeroPotential(n)
        if not isinstance(raw, dict) or "kind" not in raw:
            self.fail(path, "expected a mapping with 'kind'")
        kind = raw["kind"]
        allowed = {"zero": set(), "exp_decay": {"c", "d"},
                   "bump": {"center", "width", "amplitude"},
                   "grid_samples": {"x", "values", "bounds"}, "sum": {"parts"}}
        if kind not in allowed:
            self.fail(path + ("kind",), f"unknown potential kind {kind!r}")
        extra = set(raw) - allowed[kind] - {"kind"}
        if extra:
            self.fail(path + (sorted(extra)[0],), "unknown key")
        missing = allowed[kind] - set(raw) - {"bounds"}
        if missing:
            self.fail(path, f"missing key {sorted(missing)[0]!r}")
        get = lambda k: raw[k]  # noqa: E731
        if kind == "zero":
            return ZeroPotential(n)
        if kind == "exp_decay":
            return ExpDecayPotential(self.matrix(get("c"), path + ("c",), n),
                                     self.real(get("d"), path + ("d",)))
        if kind == "bump":
            return BumpPotential(self.real(get("center"), path + ("center",)),
                                 self.real(get("width"), path + ("width",)),
                                 self.matrix(get("amplitude"), path + ("amplitude",), n))
        if kind == "grid_samples":
            xs = raw["x"]
            if not isinstance(xs, list):
                self.fail(path + ("x",), "expected a list")
            x = np.array([self.real(v, path + ("x", i)) for i, v in enumerate(xs)])
            vals = raw["values"]
            if not isinstance(vals, list) or len(vals) != len(x):
                self.fail(path + ("values",), "expected one matrix per x value")
            V = np.array([self.matrix(m, path + ("values", i), n) for i, m in enumerate(vals)])
            bounds = raw.get("bounds", [float("inf"), float("inf")])
            if not isinstance(bounds, list) or len(bounds) != 2:
                self.fail(path + ("bounds",), "expected [l1_bound, variation_bound]")
            bounds = tuple(self.real(v, path + ("bounds", i)) for i, v in enumerate(bounds))
            return GridPotential(x, V, bounds=bounds)
        parts = raw["parts"]
        if not isinstance(parts, list) or not parts:
            self.fail(path + ("parts",), "expected a non-empty list")
        return SumPotential(tuple(self.potential(p, path + ("parts", i), n)
                                  for i, p in enumerate(parts)))


_TOP = {"n", "A", "b", "q", "eigvec_scale", "grid", "rho", "tol", "output"}


def parse_config(text: str, source: str | None = None, validate: bool = True) -> ProblemConfig:
    """Parse and validate a configuration document.

    Raises ParseError (with line and field) for malformed input and
    ValidationError (naming the failing clause) for inadmissible problems.
    """
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(f"invalid YAML: {getattr(exc, 'problem', exc)}",
                         line=mark.line + 1 if mark else None) from exc
    lines = _Lines(text)
    rd = _Reader(lines)
    if not isinstance(raw, dict):
        rd.fail((), "expected a mapping at top level")
    unknown = set(raw) - _TOP
    if unknown:
        rd.fail((sorted(unknown)[0],), "unknown key")
    for key in ("A", "b"):
        if key not in raw:
            rd.fail((), f"missing key {key!r}")
    b = rd.vector(raw["b"], ("b",))
    n = raw.get("n", len(b))
    if isinstance(n, bool) or not isinstance(n, int):
        rd.fail(("n",), "expected an integer")
    if len(b) != n:
        rd.fail(("b",), f"expected {n} entries, got {len(b)}")
    A = rd.matrix(raw["A"], ("A",), n)
    try:
        q = rd.potential(raw.get("q"), ("q",), n)
    except ParseError:
        raise
    except ValidationError as exc:  # family constructors reject e.g. d <= 0
        raise ValidationError(exc.message, **exc.context, field="q",
                              line=lines.line(("q",))) from exc
    scale = raw.get("eigvec_scale")
    scale = None if scale is None else rd.vector(scale, ("eigvec_scale",), n)
    output = rd.section(OutputConfig, raw.get("output"), ("output",))
    sols = output.solutions
    if not isinstance(sols, list) or not all(
            isinstance(e, dict) and set(e) == {"sector", "rho_index"}
            and all(isinstance(e[k], int) and not isinstance(e[k], bool) for k in e)
            for e in sols):
        rd.fail(("output", "solutions"), "expected a list of {sector, rho_index} integers")
    cfg = ProblemConfig(
        n=n, A=A, b=b, q=q, eigvec_scale=scale,
        grid=rd.section(GridConfig, raw.get("grid"), ("grid",)),
        rho=rd.section(RhoConfig, raw.get("rho"), ("rho",)),
        tol=rd.section(Tolerances, raw.get("tol"), ("tol",)),
        output=output, source=source,
    )
    _check_ranges(cfg, rd)
    if validate:
        validate_config(cfg)
    return cfg


def _check_ranges(cfg: ProblemConfig, rd: _Reader):
    g = cfg.grid
    if not 0 < g.x_min < g.x_mid < g.X_max:
        rd.fail(("grid",), "need 0 < x_min < x_mid < X_max")
    if g.n_geo < 5 or g.n_uni < 5:
        rd.fail(("grid",), "need at least 5 points per block")
    r = cfg.rho
    if not 0 < r.min <= r.max or r.count < 1:
        rd.fail(("rho",), "need 0 < min <= max and count >= 1")
    for f in fields(Tolerances):
        if not getattr(cfg.tol, f.name) > 0:
            rd.fail(("tol", f.name), "tolerance must be positive")


def validate_config(cfg: ProblemConfig):
    """Run every standing-assumption clause; the error names the failing one."""
    if cfg.q.n != cfg.n:
        raise AssumptionViolated("q dimension", "q has the wrong size")
    return validate_assumption1(cfg.spec())


def load_config(path, validate: bool = True) -> ProblemConfig:
    p = Path(path)
    text = p.read_text()
    return parse_config(text, source=str(p), validate=validate)


def config_from_dict(d: dict, validate: bool = True) -> ProblemConfig:
    return parse_config(yaml.safe_dump(d), validate=validate)
