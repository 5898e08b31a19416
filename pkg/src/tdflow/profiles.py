"""Scalar functions of time with derivatives, built from numbers or sympy text."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import sympy as sp

_T = sp.Symbol("t", real=True)


@dataclass(frozen=True)
class TimeProfile:
    """A function ``f(t)`` together with its derivative ``f'(t)``.

    ``expr`` keeps the source text so configs and manifests can round-trip.
    """

    f: Callable[[float], float]
    df: Callable[[float], float]
    expr: str | None = field(default=None, compare=False)

    def __call__(self, t):
        return self.f(t)

    def derivative(self, t):
        return self.df(t)

    @classmethod
    def constant(cls, c: float) -> "TimeProfile":
        c = float(c)

        def f(t):
            return c if np.ndim(t) == 0 else np.full(np.shape(t), c)

        def df(t):
            return 0.0 if np.ndim(t) == 0 else np.zeros(np.shape(t))

        return cls(f, df, repr(c))

    @classmethod
    def parse(cls, source) -> "TimeProfile":
        """Build a profile from a number or an expression in ``t``."""
        if isinstance(source, TimeProfile):
            return source
        if isinstance(source, (int, float)) and not isinstance(source, bool):
            return cls.constant(source)
        if not isinstance(source, str):
            raise ValueError(f"cannot build a time profile from {source!r}")
        expr = sp.sympify(source, locals={"t": _T})
        extra = expr.free_symbols - {_T}
        if extra:
            names = ", ".join(sorted(str(s) for s in extra))
            raise ValueError(f"time profile {source!r} uses unknown symbols: {names}")
        if not expr.free_symbols:
            value = float(expr)
            if not math.isfinite(value):
                raise ValueError(f"time profile {source!r} is not finite")
            prof = cls.constant(value)
            return cls(prof.f, prof.df, source)
        f = sp.lambdify(_T, expr, "numpy")
        df = sp.lambdify(_T, sp.diff(expr, _T), "numpy")
        return cls(_as_float_fn(f), _as_float_fn(df), source)


def _as_float_fn(fn):
    def wrapped(t):
        out = fn(t)
        if np.ndim(t) == 0:
            return float(out)
        return np.broadcast_to(np.asarray(out, dtype=float), np.shape(t)).copy()

    return wrapped
