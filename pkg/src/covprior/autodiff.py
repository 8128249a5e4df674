"""Forward-mode automatic differentiation with dual numbers.

A :class:`Dual` carries a primal ``value`` (a float or an ndarray) together
with its ``partials`` with respect to ``k`` seed variables. Partials are
stored with the seed axis *leading*, so ``partials.shape == (k,) +
value.shape``. Array-valued duals let the density code work on whole
matrices at a time, which keeps the number of Python-level operations per
gradient independent of the matrix dimension.

The module-level functions (:func:`exp`, :func:`log`, :func:`tri_inv`, ...)
accept either plain floats/ndarrays or duals, so the same model code serves
both plain evaluation and gradient evaluation.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import DomainError, NonFiniteGradient

__all__ = [
    "Dual",
    "gradient",
    "is_dual",
    "value_of",
    "exp",
    "log",
    "log1p",
    "sqrt",
    "tanh",
    "atanh",
    "abs",
    "square",
    "logcosh",
    "sum",
    "cumsum",
    "diagonal",
    "diag_matrix",
    "matmul",
    "transpose",
    "tri_inv",
    "fill_tril",
    "exp_diag",
    "dot",
    "wsum",
    "sq_norm_matmul",
    "col_sq_sums",
    "concatenate",
]

_SCALARS = (float, int, np.float64)


@lru_cache(maxsize=None)
def _tril(d, strict):
    return np.tril_indices(d, k=-1 if strict else 0)


@lru_cache(maxsize=None)
def _arange(d):
    return np.arange(d)


def _lift(p, ndim):
    """Insert singleton axes after the seed axis so ``p`` broadcasts to ``ndim``."""
    extra = ndim - p.ndim + 1
    if extra > 0:
        p = p.reshape(p.shape[:1] + (1,) * extra + p.shape[1:])
    return p


class Dual:
    """A value with first-order partial derivatives.

    Parameters
    ----------
    value : float or ndarray
        Primal value.
    partials : ndarray
        Array of shape ``(k,) + np.shape(value)``.
    """

    __slots__ = ("value", "partials")
    # make numpy hand mixed expressions back to the reflected operators
    __array_ufunc__ = None

    def __init__(self, value, partials):
        self.value = value
        self.partials = partials

    @classmethod
    def variables(cls, x):
        """Seed one dual per coordinate of the 1-d array ``x``."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise ValueError("variables() expects a 1-d array")
        return cls(x.copy(), np.eye(x.size))

    @classmethod
    def constant(cls, value, k):
        value = np.asarray(value, dtype=float)
        return cls(value, np.zeros((k,) + value.shape))

    @property
    def nvars(self):
        return self.partials.shape[0]

    @property
    def shape(self):
        return np.shape(self.value)

    @property
    def ndim(self):
        return np.ndim(self.value)

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Dual({self.value!r}, partials={self.partials!r})"

    # arithmetic -----------------------------------------------------------

    def __neg__(self):
        return Dual(-self.value, -self.partials)

    def __pos__(self):
        return self

    def __add__(self, other):
        if type(other) in _SCALARS:
            return Dual(self.value + other, self.partials)
        sv = self.value
        if isinstance(other, Dual):
            v = sv + other.value
            if v.shape == sv.shape == other.value.shape:
                return Dual(v, self.partials + other.partials)
            nd = v.ndim
            p = _lift(self.partials, nd) + _lift(other.partials, nd)
        else:
            v = sv + other
            if v.shape == sv.shape:
                return Dual(v, self.partials)
            p = _lift(self.partials, v.ndim)
        if p.shape[1:] != v.shape:
            p = np.broadcast_to(p, p.shape[:1] + v.shape)
        return Dual(v, p)

    __radd__ = __add__

    def __sub__(self, other):
        if type(other) in _SCALARS:
            return Dual(self.value - other, self.partials)
        if isinstance(other, Dual):
            return self + (-other)
        return self + (-np.asarray(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if type(other) in _SCALARS:
            return Dual(self.value * other, self.partials * other)
        sv = self.value
        if isinstance(other, Dual):
            ov = other.value
            v = sv * ov
            if v.shape == sv.shape == ov.shape:
                return Dual(v, self.partials * ov + sv * other.partials)
            nd = v.ndim
            p = _lift(self.partials, nd) * ov + sv * _lift(other.partials, nd)
        else:
            v = sv * other
            if v.shape == sv.shape:
                return Dual(v, self.partials * other)
            p = _lift(self.partials, v.ndim) * other
        if p.shape[1:] != v.shape:
            p = np.broadcast_to(p, p.shape[:1] + v.shape)
        return Dual(v, p)

    __rmul__ = __mul__

    def reciprocal(self):
        v = 1.0 / self.value
        return Dual(v, -self.partials * (v * v))

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return self * other.reciprocal()
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, exponent):
        if isinstance(exponent, Dual):
            return exp(exponent * log(self))
        v = self.value ** exponent
        return Dual(v, self.partials * (exponent * self.value ** (exponent - 1)))

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Dual(self.value[idx], self.partials[(slice(None),) + idx])

    @property
    def T(self):
        return transpose(self)

    # elementary functions -------------------------------------------------

    def exp(self):
        v = np.exp(self.value)
        return Dual(v, self.partials * v)

    def log(self):
        if np.any(self.value <= 0):
            if np.any(self.value < 0):
                raise DomainError("log of a negative number")
            return Dual(np.log(self.value), np.full_like(self.partials, np.inf))
        return Dual(np.log(self.value), self.partials / self.value)

    def log1p(self):
        if np.any(self.value <= -1):
            raise DomainError("log1p at or below -1")
        return Dual(np.log1p(self.value), self.partials / (1.0 + self.value))

    def sqrt(self):
        if np.any(self.value < 0):
            raise DomainError("sqrt of a negative number")
        v = np.sqrt(self.value)
        with np.errstate(divide="ignore"):
            return Dual(v, self.partials * (0.5 / v))

    def tanh(self):
        v = np.tanh(self.value)
        return Dual(v, self.partials * (1.0 - v * v))

    def atanh(self):
        if np.any(np.abs(self.value) >= 1):
            raise DomainError("atanh outside (-1, 1)")
        return Dual(np.arctanh(self.value), self.partials / (1.0 - self.value * self.value))

    def __abs__(self):
        return Dual(np.abs(self.value), self.partials * np.sign(self.value))


def is_dual(x):
    return isinstance(x, Dual)


def value_of(x):
    """Primal value of a dual, or ``x`` itself."""
    return x.value if isinstance(x, Dual) else x


def _unary(name, npfunc):
    def f(x):
        if isinstance(x, Dual):
            return getattr(x, name)()
        return npfunc(x)

    f.__name__ = name
    return f


def _checked_log(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("log of a negative number")
    with np.errstate(divide="ignore"):
        return np.log(x)


def _checked_sqrt(x):
    if np.any(np.asarray(x) < 0):
        raise DomainError("sqrt of a negative number")
    return np.sqrt(x)


def _checked_atanh(x):
    if np.any(np.abs(np.asarray(x)) >= 1):
        raise DomainError("atanh outside (-1, 1)")
    return np.arctanh(x)


exp = _unary("exp", np.exp)
log = _unary("log", _checked_log)
log1p = _unary("log1p", np.log1p)
sqrt = _unary("sqrt", _checked_sqrt)
tanh = _unary("tanh", np.tanh)
atanh = _unary("atanh", _checked_atanh)


def abs(x):  # noqa: A001
    if isinstance(x, Dual):
        return x.__abs__()
    return np.abs(x)


def square(x):
    return x * x


def logcosh(x):
    """Stable ``log(cosh(x))``."""
    ax = abs(x)
    return ax + log1p(exp(-2.0 * ax)) - np.log(2.0)


def sum(x, axis=None):  # noqa: A001
    if not isinstance(x, Dual):
        return np.sum(x, axis=axis)
    p = x.partials
    if axis is None:
        return Dual(x.value.sum(), p.reshape(p.shape[0], -1).sum(axis=1))
    pax = axis + 1 if axis >= 0 else axis
    return Dual(x.value.sum(axis=axis), p.sum(axis=pax))


def cumsum(x, axis):
    if not isinstance(x, Dual):
        return np.cumsum(x, axis=axis)
    pax = axis + 1 if axis >= 0 else axis
    return Dual(np.cumsum(x.value, axis=axis), np.cumsum(x.partials, axis=pax))


def diagonal(x):
    """Main diagonal of a square matrix."""
    if not isinstance(x, Dual):
        return np.diagonal(x).copy()
    return Dual(np.diagonal(x.value).copy(), np.diagonal(x.partials, axis1=1, axis2=2).copy())


def diag_matrix(v):
    """Square diagonal matrix from a vector."""
    if not isinstance(v, Dual):
        return np.diag(v)
    d = v.value.shape[0]
    p = np.zeros((v.partials.shape[0], d, d))
    idx = _arange(d)
    p[:, idx, idx] = v.partials
    return Dual(np.diag(v.value), p)


def transpose(x):
    if not isinstance(x, Dual):
        return np.swapaxes(x, -1, -2)
    return Dual(np.swapaxes(x.value, -1, -2), np.swapaxes(x.partials, -1, -2))


def matmul(a, b):
    """Matrix product of 2-d operands, either of which may be dual."""
    ad, bd = isinstance(a, Dual), isinstance(b, Dual)
    if ad and bd:
        return Dual(a.value @ b.value, a.partials @ b.value + a.value @ b.partials)
    if ad:
        return Dual(a.value @ b, a.partials @ b)
    if bd:
        return Dual(a @ b.value, a @ b.partials)
    return a @ b


def _lower_inv(m):
    d = m.shape[0]
    if d == 1:
        return 1.0 / m
    if d == 2:
        a, c, e = m[0, 0], m[1, 0], m[1, 1]
        return np.array([[1.0 / a, 0.0], [-c / (a * e), 1.0 / e]])
    return np.tril(np.linalg.inv(m))


def tri_inv(L):
    """Inverse of a lower-triangular matrix with nonzero diagonal."""
    if not isinstance(L, Dual):
        return _lower_inv(np.asarray(L, dtype=float))
    X = _lower_inv(L.value)
    return Dual(X, -(X @ L.partials @ X))


def exp_diag(M):
    """Copy of a square matrix with its diagonal exponentiated."""
    idx = _arange(ad_shape(M)[0])
    if not isinstance(M, Dual):
        out = np.array(M, dtype=float)
        out[idx, idx] = np.exp(out[idx, idx])
        return out
    val = M.value.copy()
    e = np.exp(val[idx, idx])
    val[idx, idx] = e
    p = M.partials.copy()
    p[:, idx, idx] *= e
    return Dual(val, p)


def ad_shape(x):
    return np.shape(x.value if isinstance(x, Dual) else x)


def fill_tril(v, d, strict=False, exp_diagonal=False):
    """Place a vector row-wise into the (strict) lower triangle of a d x d matrix.

    With ``exp_diagonal`` the diagonal entries are exponentiated on the way in.
    """
    rows, cols = _tril(d, strict)
    if not isinstance(v, Dual):
        out = np.zeros((d, d))
        out[rows, cols] = v
        if exp_diagonal:
            idx = _arange(d)
            out[idx, idx] = np.exp(out[idx, idx])
        return out
    val = np.zeros((d, d))
    val[rows, cols] = v.value
    p = np.zeros((v.partials.shape[0], d, d))
    p[:, rows, cols] = v.partials
    if exp_diagonal:
        idx = _arange(d)
        e = np.exp(val[idx, idx])
        val[idx, idx] = e
        p[:, idx, idx] *= e
    return Dual(val, p)


def dot(a, b):
    """Inner product of two 1-d operands, either of which may be dual."""
    ad_, bd = isinstance(a, Dual), isinstance(b, Dual)
    if ad_ and bd:
        return Dual(a.value @ b.value, a.partials @ b.value + b.partials @ a.value)
    if ad_:
        return Dual(a.value @ b, a.partials @ b)
    if bd:
        return Dual(a @ b.value, b.partials @ a)
    return np.dot(a, b)


def wsum(x, w):
    """``sum(x * w)`` over all entries for dual ``x`` and constant weights ``w``."""
    if not isinstance(x, Dual):
        return np.sum(x * w)
    k = x.partials.shape[0]
    w = np.ravel(w)
    return Dual(np.ravel(x.value) @ w, x.partials.reshape(k, -1) @ w)


def sq_norm_matmul(A, B):
    """Squared Frobenius norm of ``A @ B`` for dual ``A`` and constant ``B``."""
    if not isinstance(A, Dual):
        M = A @ B
        return np.sum(M * M)
    M = A.value @ B
    dM = A.partials @ B
    k = dM.shape[0]
    return Dual(np.sum(M * M), 2.0 * (dM.reshape(k, -1) @ M.reshape(-1)))


def col_sq_sums(A):
    """Column sums of squares of a matrix, ``sum(A * A, axis=0)``."""
    if not isinstance(A, Dual):
        return np.sum(A * A, axis=0)
    return Dual(np.sum(A.value * A.value, axis=0), 2.0 * np.sum(A.partials * A.value, axis=1))


def concatenate(parts):
    """Concatenate 1-d operands, promoting constants when any part is dual."""
    duals = [x for x in parts if isinstance(x, Dual)]
    if not duals:
        return np.concatenate([np.atleast_1d(x) for x in parts])
    k = duals[0].partials.shape[0]
    vals, ps = [], []
    for x in parts:
        if isinstance(x, Dual):
            vals.append(np.atleast_1d(x.value))
            ps.append(x.partials.reshape(k, -1))
        else:
            x = np.atleast_1d(np.asarray(x, dtype=float))
            vals.append(x)
            ps.append(np.zeros((k, x.size)))
    return Dual(np.concatenate(vals), np.concatenate(ps, axis=1))


def gradient(f, x):
    """Value and gradient of a scalar function by forward-mode differentiation.

    ``f`` must be written against the generic operations of this module so it
    accepts a vector of duals. Returns ``(value, grad)``.
    """
    x = np.asarray(x, dtype=float)
    out = f(Dual.variables(x))
    if not isinstance(out, Dual):
        return float(out), np.zeros_like(x)
    value = float(out.value)
    grad = np.asarray(out.partials, dtype=float).reshape(-1)
    if np.isfinite(value) and not np.all(np.isfinite(grad)):
        raise NonFiniteGradient(f"non-finite gradient at finite value {value!r}")
    return value, grad
