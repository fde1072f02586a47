"""YAML problem configs: ingestion with field-level diagnostics, and emission.

Schema (all matrices as nested lists)::

    A: [[...]]            # n x n
    B: [[...]]            # n x m
    Q: [[...]]            # n x n, PSD
    R: [[...]]            # m x m, PD
    z: [...]              # optional, length n
    v: [...]              # optional, length m
    c: 0.0                # optional
    constraints:          # optional; omitted means S is the whole space
      - {type: norm_box, on: x, radius: 1.0}               # |y_I|_inf <= r
      - {type: box, on: u, lower: [-1], upper: [1]}        # alias: interval
      - {type: halfspace, on: xu, a: [...], b: 0.0}        # a'y <= b
      - {type: soc, on: x, apex: 2, indices: [0, 1]}       # alias: soc_cone
    xtp: {type: ball, radius: 1.0, count: 20}              # optional initial set
    policy: {name: hold, skip: 0}                          # optional witness policy
    tolerances: {eps_abs: 1e-8, eps_rel: 1e-6, feas_tol: 1e-11, max_iter: 50000}

``on`` selects the block the ``indices`` refer to (``x``, ``u`` or ``xu``);
without ``indices`` a piece covers the whole block.
"""
from dataclasses import dataclass, field

import numpy as np
import yaml

from .constraints import Box, ConstraintSet, FullSpace, Halfspace, NormBox, SecondOrderCone
from .errors import ConfigError, LQTurnpikeError
from .model import Problem
from .ocp import ADMMSettings
from .scenarios import SCENARIOS, sample_ball, sample_box, sample_cone_slice

PIECE_ALIASES = {"norm_box": "norm_box", "box": "box", "interval": "box",
                 "halfspace": "halfspace", "soc": "soc", "soc_cone": "soc", "full": "full"}
TOLERANCE_KEYS = {"eps_abs", "eps_rel", "feas_tol", "max_iter", "rho", "alpha"}
TOP_KEYS = {"A", "B", "Q", "R", "z", "v", "c", "constraints", "xtp", "policy", "tolerances",
            "name"}


@dataclass
class Config:
    problem: Problem
    xtp: dict = None
    policy: dict = field(default_factory=lambda: {"name": "hold", "skip": 0})
    tolerances: dict = field(default_factory=dict)
    name: str = ""

    def admm_settings(self):
        return ADMMSettings(**self.tolerances)


def _matrix(data, key, shape=None):
    if key not in data:
        raise ConfigError(f"{key}: missing")
    try:
        M = np.array(data[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: not a numeric array ({exc})") from None
    M = np.atleast_2d(M) if M.ndim < 2 else M
    if M.ndim != 2:
        raise ConfigError(f"{key}: expected a matrix, got {M.ndim}-d data")
    if shape is not None and M.shape != shape:
        raise ConfigError(f"{key}: expected shape {shape}, got {M.shape}")
    return M


def _vector(data, key, size, where):
    try:
        vec = np.array(data[key], dtype=float).ravel()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.{key}: not numeric ({exc})") from None
    if size is not None and vec.size != size:
        raise ConfigError(f"{where}.{key}: expected length {size}, got {vec.size}")
    return vec


def _block_indices(spec, n, m, where):
    on = spec.get("on", "xu")
    if on not in ("x", "u", "xu"):
        raise ConfigError(f"{where}.on: expected x, u or xu, got {on!r}")
    offset, width = {"x": (0, n), "u": (n, m), "xu": (0, n + m)}[on]
    if "indices" in spec:
        idx = [int(i) for i in spec["indices"]]
        bad = [i for i in idx if not 0 <= i < width]
        if bad:
            raise ConfigError(f"{where}.indices: {bad} out of range for block {on!r} "
                              f"of width {width}")
    else:
        idx = list(range(width))
    return offset, width, tuple(offset + i for i in idx)


def _piece(spec, n, m, where):
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError(f"{where}: expected a mapping with a 'type' field")
    kind = PIECE_ALIASES.get(spec["type"])
    if kind is None:
        raise ConfigError(f"{where}.type: unknown piece {spec['type']!r} "
                          f"(expected one of {sorted(PIECE_ALIASES)})")
    offset, width, idx = _block_indices(spec, n, m, where)
    try:
        if kind == "norm_box":
            return NormBox(idx, float(spec["radius"]))
        if kind == "box":
            lower = _vector(spec, "lower", len(idx), where) if "lower" in spec \
                else np.full(len(idx), -np.inf)
            upper = _vector(spec, "upper", len(idx), where) if "upper" in spec \
                else np.full(len(idx), np.inf)
            return Box(idx, tuple(lower), tuple(upper))
        if kind == "halfspace":
            a_blk = _vector(spec, "a", len(idx), where)
            a = np.zeros(n + m)
            a[list(idx)] = a_blk
            return Halfspace(a, float(spec["b"]))
        if kind == "soc":
            apex = int(spec["apex"])
            if not 0 <= apex < width:
                raise ConfigError(f"{where}.apex: {apex} out of range for block of width {width}")
            rest = tuple(i for i in idx if i != offset + apex)
            return SecondOrderCone(offset + apex, rest)
        return FullSpace()
    except KeyError as exc:
        raise ConfigError(f"{where}: missing field {exc.args[0]!r}") from None
    except LQTurnpikeError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(data):
    """Build a :class:`Config` from an already-parsed mapping."""
    if not isinstance(data, dict):
        raise ConfigError("top level: expected a mapping")
    unknown = set(data) - TOP_KEYS
    if unknown:
        raise ConfigError(f"top level: unknown keys {sorted(unknown)}")
    A = _matrix(data, "A")
    n = A.shape[0]
    if A.shape != (n, n):
        raise ConfigError(f"A: expected a square matrix, got {A.shape}")
    B = _matrix(data, "B")
    if B.shape[0] != n:
        raise ConfigError(f"B: expected {n} rows, got {B.shape[0]}")
    m = B.shape[1]
    Q = _matrix(data, "Q", (n, n))
    R = _matrix(data, "R", (m, m))
    z = _vector(data, "z", n, "top") if "z" in data else np.zeros(n)
    v = _vector(data, "v", m, "top") if "v" in data else np.zeros(m)
    try:
        c = float(data.get("c", 0.0))
    except (TypeError, ValueError):
        raise ConfigError("c: expected a scalar") from None
    specs = data.get("constraints") or []
    if not isinstance(specs, list):
        raise ConfigError("constraints: expected a list of pieces")
    pieces = tuple(_piece(s, n, m, f"constraints[{k}]") for k, s in enumerate(specs))
    try:
        S = ConstraintSet(n, m, pieces) if pieces else None
        problem = Problem(A=A, B=B, Q=Q, R=R, z=z, v=v, c=c, S=S)
    except LQTurnpikeError as exc:
        raise ConfigError(f"problem data: {exc}") from None
    tol = dict(data.get("tolerances") or {})
    bad = set(tol) - TOLERANCE_KEYS
    if bad:
        raise ConfigError(f"tolerances: unknown keys {sorted(bad)}")
    policy = {"name": "hold", "skip": 0}
    policy.update(data.get("policy") or {})
    if policy["name"] not in ("hold", "lqr", "cone"):
        raise ConfigError(f"policy.name: unknown policy {policy['name']!r}")
    return Config(problem, data.get("xtp"), policy, tol, str(data.get("name", "")))


def load_config(path):
    """Read a YAML config file, or a built-in scenario by name."""
    if path in SCENARIOS:
        return builtin_config(path)
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file or built-in scenario") from None
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError(f"{path}: YAML syntax error at {where}: "
                          f"{getattr(exc, 'problem', exc)}") from None
    return parse_config(data)


def _piece_to_spec(piece):
    if isinstance(piece, NormBox):
        return {"type": "norm_box", "on": "xu", "indices": list(piece.indices),
                "radius": piece.radius}
    if isinstance(piece, Box):
        return {"type": "box", "on": "xu", "indices": list(piece.indices),
                "lower": [float(x) for x in piece.lower], "upper": [float(x) for x in piece.upper]}
    if isinstance(piece, Halfspace):
        return {"type": "halfspace", "on": "xu", "a": np.asarray(piece.a).tolist(),
                "b": float(piece.b)}
    if isinstance(piece, SecondOrderCone):
        return {"type": "soc", "on": "xu", "apex": piece.apex, "indices": list(piece.indices)}
    return {"type": "full"}


def problem_to_dict(p):
    return {"A": p.A.tolist(), "B": p.B.tolist(), "Q": p.Q.tolist(), "R": p.R.tolist(),
            "z": p.z.tolist(), "v": p.v.tolist(), "c": float(p.c),
            "constraints": [_piece_to_spec(piece) for piece in p.S.pieces]}


def dump_config(cfg):
    data = problem_to_dict(cfg.problem)
    if cfg.name:
        data = {"name": cfg.name, **data}
    if cfg.xtp is not None:
        data["xtp"] = cfg.xtp
    data["policy"] = dict(cfg.policy)
    if cfg.tolerances:
        data["tolerances"] = dict(cfg.tolerances)
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None)


BUILTIN_XTP = {
    "example1": {"type": "ball", "radius": 1.0, "count": 20},
    "example2": {"type": "cone_slice", "height": 5.0, "count": 10},
}


def builtin_config(name):
    sc = SCENARIOS[name]
    return Config(sc.problem(), dict(BUILTIN_XTP[name]), {"name": sc.policy, "skip": sc.skip},
                  {}, name)


def parse_xtp(spec, n, seed=42):
    """Initial points from a mapping or a compact string.

    Strings: ``ball:<radius>:<count>``, ``box:<half_width>:<count>``,
    ``cone_slice:<height>:<count>`` or ``points:x1,x2;y1,y2``.
    """
    if isinstance(spec, str):
        kind, _, rest = spec.partition(":")
        try:
            if kind == "points":
                pts = [[float(t) for t in row.split(",")] for row in rest.split(";") if row]
                spec = {"type": "points", "points": pts}
            else:
                a, b = rest.split(":")
                key = {"ball": "radius", "box": "half_width", "cone_slice": "height"}.get(kind)
                if key is None:
                    raise ConfigError(f"xtp: unknown kind {kind!r}")
                spec = {"type": kind, key: float(a), "count": int(b)}
        except ValueError:
            raise ConfigError(f"xtp: cannot parse {spec!r}") from None
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError("xtp: expected a mapping with a 'type' field")
    kind = spec["type"]
    try:
        if kind == "points":
            X = np.array(spec["points"], dtype=float).reshape(-1, n)
        elif kind == "ball":
            X = sample_ball(n, float(spec["radius"]), int(spec["count"]), seed)
        elif kind == "box":
            X = sample_box(n, float(spec["half_width"]), int(spec["count"]), seed)
        elif kind == "cone_slice":
            if n != 3:
                raise ConfigError("xtp: cone_slice needs a 3-dimensional state")
            X = sample_cone_slice(float(spec["height"]), int(spec["count"]), seed)
        else:
            raise ConfigError(f"xtp.type: unknown kind {kind!r}")
    except KeyError as exc:
        raise ConfigError(f"xtp: missing field {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ConfigError(f"xtp: {exc}") from None
    return X
