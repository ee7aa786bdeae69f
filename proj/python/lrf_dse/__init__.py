"""Python access to the low-rank factorization toolkit.

Layers are plain dicts in the model-descriptor format, e.g. ``fc(400, 120)`` or
``conv([3, 3, 256, 512], [8, 8], stride=2)``. Structured results come back as
dicts.
"""

import json

from . import _core
from ._core import LrfError

__all__ = [
    "LrfError",
    "fc",
    "conv",
    "original_cost",
    "solution",
    "space_size",
    "census",
    "constrained_query",
    "decompose",
    "score_level",
    "flexibility_level",
    "scorecard",
    "cli",
]


def fc(m, n, name="fc"):
    return {"name": name, "kind": "FC", "weight_shape": [m, n]}


def conv(weight_shape, input_spatial, stride=1, padding="same", name="conv"):
    """Conv layer; weight_shape is (K1..Kd, C, F) and picks Conv1D/2D/3D."""
    d = len(weight_shape) - 2
    if len(input_spatial) != d:
        raise ValueError(f"expected {d} input extents, got {len(input_spatial)}")
    return {
        "name": name,
        "kind": f"Conv{d}D",
        "weight_shape": list(weight_shape),
        "input_spatial": list(input_spatial),
        "stride": [stride] * d if isinstance(stride, int) else list(stride),
        "padding": padding,
    }


def _text(layer):
    return layer if isinstance(layer, str) else json.dumps(layer)


def _plan(plan):
    return None if plan is None else (list(plan[0]), list(plan[1]))


def original_cost(layer):
    return _core.original_cost(_text(layer))


def solution(layer, method, ranks, plan=None):
    return json.loads(_core.solution(_text(layer), method, list(ranks), _plan(plan)))


def space_size(layer, method):
    return _core.space_size(_text(layer), method)


def census(layer, methods=(), ratios=(0.25, 0.6, 0.85), tol=0.005):
    return json.loads(_core.census(_text(layer), list(methods), list(ratios), tol))


def constrained_query(layer, methods=(), fix="params", value=0.6, tol=0.005, minimize="flops"):
    raw = _core.constrained_query(_text(layer), list(methods), fix, value, tol, minimize)
    return {k: (json.loads(v) if v is not None else None) for k, v in raw.items()}


def decompose(layer, weight, method, ranks, plan=None, seed=0):
    return _core.decompose(_text(layer), weight, method, list(ranks), _plan(plan), seed)


def score_level(metric, raw):
    return _core.score_level(metric, raw)


def flexibility_level(flexibility):
    return _core.flexibility_level(flexibility)


def scorecard(layers, method, decomposition_time):
    return json.loads(_core.scorecard([_text(l) for l in layers], method, decomposition_time))


def cli(*args):
    """Runs one CLI invocation in-process; returns (exit_code, stdout, stderr)."""
    return _core.cli([str(a) for a in args])
