"""
Forward-mode dual numbers for exact log-posterior gradients.

A Dual carries a value and its derivative with respect to every model
coordinate at once: ``val`` is a float or an array of shape S, ``eps`` has
shape S + (d,).  Array-valued duals let whole series (n time steps) flow
through numpy in one pass; scalar duals are used inside the MA recursion.

Plain floats and arrays mix freely with duals and act as constants.
"""

from __future__ import annotations

from typing import Any, Iterable, List, Sequence, Union

import numpy as np

Number = Union[float, np.ndarray, "Dual"]


def _col(value: Any) -> np.ndarray:
    """Add a trailing axis so per-element factors scale the eps rows."""
    return np.asarray(value, dtype=float)[..., None]


def _grow(eps: np.ndarray, val: Any) -> np.ndarray:
    shape = np.shape(val)
    if len(shape) > eps.ndim - 1:
        return np.broadcast_to(eps, shape + eps.shape[-1:])
    return eps


class Dual:
    """Value plus gradient, propagated by the chain rule."""

    __slots__ = ("val", "eps")

    # ndarray (op) Dual must fall through to the reflected Dual method
    # instead of building an object array.
    __array_ufunc__ = None

    def __init__(self, val: Any, eps: np.ndarray) -> None:
        self.val = val
        self.eps = eps

    # -- construction ------------------------------------------------------

    @classmethod
    def variables(cls, values: Sequence[float]) -> List["Dual"]:
        """One independent scalar dual per coordinate, seeded with unit vectors."""
        values = np.asarray(values, dtype=float).ravel()
        eye = np.eye(values.size)
        return [cls(float(values[i]), eye[i]) for i in range(values.size)]

    @classmethod
    def stack(cls, items: Sequence["Dual"]) -> "Dual":
        return cls(
            np.array([item.val for item in items], dtype=float),
            np.stack([np.broadcast_to(item.eps, items[0].eps.shape[-1:]) for item in items]),
        )

    @property
    def dim(self) -> int:
        return int(self.eps.shape[-1])

    def chain(self, value: Any, derivative: Any) -> "Dual":
        """Apply f with f(val) = value and f'(val) = derivative."""
        return Dual(value, self.eps * _col(derivative))

    # -- container protocol ------------------------------------------------

    def __getitem__(self, idx: Any) -> "Dual":
        return Dual(self.val[idx], self.eps[idx])

    def __len__(self) -> int:
        return len(self.val)

    def sum(self) -> "Dual":
        if np.ndim(self.val) == 0:
            return self
        flat = self.eps.reshape(-1, self.dim)
        return Dual(float(np.sum(self.val)), flat.sum(axis=0))

    # -- arithmetic --------------------------------------------------------

    def __neg__(self) -> "Dual":
        return Dual(-self.val, -self.eps)

    def __add__(self, other: Any) -> "Dual":
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.eps + other.eps)
        val = self.val + other
        return Dual(val, _grow(self.eps, val))

    __radd__ = __add__

    def __sub__(self, other: Any) -> "Dual":
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.eps - other.eps)
        val = self.val - other
        return Dual(val, _grow(self.eps, val))

    def __rsub__(self, other: Any) -> "Dual":
        val = other - self.val
        return Dual(val, _grow(-self.eps, val))

    def __mul__(self, other: Any) -> "Dual":
        if isinstance(other, Dual):
            return Dual(
                self.val * other.val,
                self.eps * _col(other.val) + other.eps * _col(self.val),
            )
        return Dual(self.val * other, self.eps * _col(other))

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> "Dual":
        if isinstance(other, Dual):
            val = self.val / other.val
            return Dual(val, (self.eps - other.eps * _col(val)) / _col(other.val))
        return Dual(self.val / other, self.eps / _col(other))

    def __rtruediv__(self, other: Any) -> "Dual":
        val = other / self.val
        return Dual(val, self.eps * _col(-val / self.val))

    def __pow__(self, power: float) -> "Dual":
        return self.chain(self.val ** power, power * self.val ** (power - 1.0))

    def __repr__(self) -> str:
        return f"Dual(val={self.val!r}, eps={self.eps!r})"


# ---------------------------------------------------------------------------
# Elementary functions accepting floats, arrays or duals
# ---------------------------------------------------------------------------

def value_of(x: Number) -> Any:
    return x.val if isinstance(x, Dual) else x


def exp(x: Number) -> Number:
    if isinstance(x, Dual):
        value = np.exp(x.val)
        return x.chain(value, value)
    return np.exp(x)


def log(x: Number) -> Number:
    if isinstance(x, Dual):
        return x.chain(np.log(x.val), 1.0 / x.val)
    return np.log(x)


def shift(x: Number, lag: int) -> Number:
    """Delay a length-n sequence by ``lag`` steps, zero-filling the front."""
    if lag <= 0:
        return x
    if isinstance(x, Dual):
        val = np.zeros_like(x.val)
        eps = np.zeros_like(x.eps)
        val[lag:] = x.val[:-lag]
        eps[lag:] = x.eps[:-lag]
        return Dual(val, eps)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    out[lag:] = x[:-lag]
    return out


def stack(items: Iterable[Number]) -> Number:
    items = list(items)
    if items and isinstance(items[0], Dual):
        return Dual.stack(items)
    return np.array(items, dtype=float)
