"""Forward-mode dual numbers over numpy arrays.

A :class:`Dual` carries a primal value and one tangent of the same shape.
Matrix helpers (``det3``, ``inv3``, ``trace``) act on the trailing ``3 x 3``
axes so a whole batch of quadrature points propagates at once.
"""

import numpy as np


class Dual:
    __slots__ = ("value", "deriv")
    __array_ufunc__ = None

    def __init__(self, value, deriv=None):
        self.value = np.asarray(value, dtype=float)
        self.deriv = np.zeros_like(self.value) if deriv is None else np.asarray(deriv, dtype=float)

    @staticmethod
    def _lift(other):
        return other if isinstance(other, Dual) else Dual(other, np.zeros_like(np.asarray(other, dtype=float)))

    def __repr__(self):
        return f"Dual({self.value!r}, {self.deriv!r})"

    def __add__(self, other):
        o = self._lift(other)
        return Dual(self.value + o.value, self.deriv + o.deriv)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        return Dual(self.value - o.value, self.deriv - o.deriv)

    def __rsub__(self, other):
        return self._lift(other) - self

    def __neg__(self):
        return Dual(-self.value, -self.deriv)

    def __mul__(self, other):
        o = self._lift(other)
        return Dual(self.value * o.value, self.deriv * o.value + self.value * o.deriv)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        if np.any(o.value == 0):
            raise ZeroDivisionError("dual division by zero primal")
        return Dual(self.value / o.value,
                    (self.deriv * o.value - self.value * o.deriv) / o.value ** 2)

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __pow__(self, n):
        return Dual(self.value ** n, n * self.value ** (n - 1) * self.deriv)

    def __matmul__(self, other):
        o = self._lift(other)
        return Dual(self.value @ o.value, self.deriv @ o.value + self.value @ o.deriv)

    def __rmatmul__(self, other):
        return self._lift(other) @ self

    def __getitem__(self, key):
        return Dual(self.value[key], self.deriv[key])

    @property
    def T(self):
        return Dual(np.swapaxes(self.value, -1, -2), np.swapaxes(self.deriv, -1, -2))

    @property
    def shape(self):
        return self.value.shape


def expand(s):
    """Append two unit axes so a scalar field broadcasts against 3x3 matrices."""
    if isinstance(s, Dual):
        return Dual(s.value[..., None, None], s.deriv[..., None, None])
    return np.asarray(s)[..., None, None]


def log(x):
    if isinstance(x, Dual):
        if np.any(x.value <= 0):
            raise ValueError("log of non-positive primal")
        return Dual(np.log(x.value), x.deriv / x.value)
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("log of non-positive value")
    return np.log(x)


def trace(A):
    if isinstance(A, Dual):
        return Dual(np.trace(A.value, axis1=-2, axis2=-1), np.trace(A.deriv, axis1=-2, axis2=-1))
    return np.trace(A, axis1=-2, axis2=-1)


def _cof(A):
    # cofactor matrix built with the overloaded scalar ops
    def a(i, j):
        return A[..., i, j]

    rows = []
    for i in range(3):
        i1, i2 = (i + 1) % 3, (i + 2) % 3
        row = []
        for j in range(3):
            j1, j2 = (j + 1) % 3, (j + 2) % 3
            row.append(a(i1, j1) * a(i2, j2) - a(i1, j2) * a(i2, j1))
        rows.append(row)
    return rows


def _stack(rows):
    if isinstance(rows[0][0], Dual):
        val = np.stack([np.stack([c.value for c in r], axis=-1) for r in rows], axis=-2)
        der = np.stack([np.stack([c.deriv for c in r], axis=-1) for r in rows], axis=-2)
        return Dual(val, der)
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def det3(A):
    c = _cof(A)
    return A[..., 0, 0] * c[0][0] + A[..., 0, 1] * c[0][1] + A[..., 0, 2] * c[0][2]


def inv3(A):
    c = _cof(A)
    d = det3(A)
    adj = [[c[j][i] / d for j in range(3)] for i in range(3)]
    return _stack(adj)
