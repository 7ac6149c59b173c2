"""Binary associative operators over fixed-width element types.

Every scan in this package is parameterized by a ScanOperator: an associative
binary operation together with its identity element and a concrete numpy
dtype. Built-in operators are add, max, and min over i32/i64/f32/f64.

Integer add wraps modulo 2^width (two's complement), matching what the
vectorized kernels do natively; scalar applications are wrapped in
np.errstate so numpy's scalar overflow warning stays silent.

Operand order is canonical throughout the package: apply(a, b) means a is the
partial result folded over lower indices and b comes from higher indices.
The built-ins are commutative so this only matters for custom operators.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

DTYPES = {
    "i32": np.dtype(np.int32),
    "i64": np.dtype(np.int64),
    "f32": np.dtype(np.float32),
    "f64": np.dtype(np.float64),
}

OPERATOR_NAMES = ("add", "max", "min")


class UnsupportedOperatorError(ValueError):
    """Raised for an unknown operator name or element type token."""


def parse_dtype(token) -> np.dtype:
    """Map an element-type token (i32/i64/f32/f64) to its numpy dtype."""
    if isinstance(token, np.dtype):
        return token
    try:
        return DTYPES[token]
    except (KeyError, TypeError):
        raise UnsupportedOperatorError(
            f"unknown element type {token!r}; supported: {', '.join(DTYPES)}"
        ) from None


def dtype_token(dtype) -> str:
    dtype = np.dtype(dtype)
    for tok, dt in DTYPES.items():
        if dt == dtype:
            return tok
    raise UnsupportedOperatorError(f"no token for dtype {dtype}")


@dataclass(frozen=True)
class ScanOperator:
    """An associative binary operator bound to an element dtype.

    apply combines two scalars; combine and accumulate are the vectorized
    forms the kernels actually use (elementwise combine with broadcasting,
    and an inclusive left-to-right fold). identity satisfies
    apply(identity, v) == apply(v, identity) == v for every v of the dtype.
    """

    name: str
    dtype: np.dtype
    identity: object
    apply: Callable
    ufunc: Optional[np.ufunc] = None

    def combine(self, a, b, out=None):
        """Elementwise apply(a, b) with numpy broadcasting."""
        if self.ufunc is not None:
            with np.errstate(over="ignore"):
                return self.ufunc(a, b, out=out)
        aa, bb = np.broadcast_arrays(np.asarray(a, dtype=self.dtype),
                                     np.asarray(b, dtype=self.dtype))
        res = out if out is not None else np.empty(aa.shape, dtype=self.dtype)
        rf = res.flat
        for i, (x, y) in enumerate(zip(aa.flat, bb.flat)):
            rf[i] = self.apply(x, y)
        return res

    def accumulate(self, x, out=None):
        """Inclusive left fold of a 1-D array: out[j] = x[0] ⊕ ... ⊕ x[j]."""
        x = np.asarray(x, dtype=self.dtype)
        if self.ufunc is not None:
            # pin the accumulator dtype: add.accumulate would otherwise
            # widen i32 to the platform int instead of wrapping
            with np.errstate(over="ignore"):
                return self.ufunc.accumulate(x, out=out, dtype=self.dtype)
        res = out if out is not None else np.empty_like(x)
        acc = None
        for i, v in enumerate(x):
            acc = v if i == 0 else self.apply(acc, v)
            res[i] = acc
        return res


def _scalar_apply(ufunc, dtype):
    def apply(a, b):
        with np.errstate(over="ignore"):
            return ufunc(dtype.type(a), dtype.type(b))

    return apply


def make_operator(name: str, elem_type) -> ScanOperator:
    """Build a built-in operator (add/max/min) over an element type token."""
    dtype = parse_dtype(elem_type)
    if name == "add":
        ufunc, identity = np.add, dtype.type(0)
    elif name == "max":
        ufunc = np.maximum
        identity = dtype.type(np.iinfo(dtype).min if dtype.kind == "i" else -np.inf)
    elif name == "min":
        ufunc = np.minimum
        identity = dtype.type(np.iinfo(dtype).max if dtype.kind == "i" else np.inf)
    else:
        raise UnsupportedOperatorError(
            f"unknown operator {name!r}; supported: {', '.join(OPERATOR_NAMES)}"
        )
    return ScanOperator(name=name, dtype=dtype, identity=identity,
                        apply=_scalar_apply(ufunc, dtype), ufunc=ufunc)


class CountingOperator:
    """Wrapper that counts ⊕ applications while delegating the arithmetic.

    The count is exact: apply adds 1, combine adds the broadcast result size,
    accumulate over k elements adds max(k - 1, 0). Increments are serialized
    through a lock so concurrent workers cannot lose updates. Compute is
    delegated to the wrapped operator's vector paths, so instrumentation does
    not change how the work is performed, only that it is tallied.
    """

    def __init__(self, inner: ScanOperator):
        self.inner = inner
        self._count = 0
        self._lock = threading.Lock()

    @property
    def name(self):
        return self.inner.name

    @property
    def dtype(self):
        return self.inner.dtype

    @property
    def identity(self):
        return self.inner.identity

    @property
    def count(self) -> int:
        return self._count

    def reset(self):
        with self._lock:
            self._count = 0

    def apply(self, a, b):
        with self._lock:
            self._count += 1
        return self.inner.apply(a, b)

    def combine(self, a, b, out=None):
        res = self.inner.combine(a, b, out=out)
        with self._lock:
            self._count += int(np.asarray(res).size)
        return res

    def accumulate(self, x, out=None):
        res = self.inner.accumulate(x, out=out)
        with self._lock:
            self._count += max(int(np.asarray(x).size) - 1, 0)
        return res
