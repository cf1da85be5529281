"""Dense complex linear algebra used throughout the package.

Matrices are plain ``numpy.ndarray`` objects of complex dtype. The Kronecker
convention is numpy's: entry ``(i*d_b + k, j*d_b + l)`` of ``a ⊗ b`` equals
``a[i, j] * b[k, l]``, and every other module relies on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

HERMITIAN_TOL = 1e-10
# relative floor below which singular values are treated as exact zeros
SINGULAR_FLOOR = 1e-14


class MatrixError(ValueError):
    """Raised on malformed matrix input (shape, finiteness, symmetry)."""


@dataclass(frozen=True)
class NormOrder:
    """Schatten exponent ``p`` in ``[1, inf]``.

    ``math.inf`` is handled as an explicit case everywhere and never raised
    to a power.
    """

    p: float

    def __post_init__(self):
        p = float(self.p)
        if math.isnan(p) or p < 1.0:
            raise ValueError(f"Schatten order must satisfy p >= 1, got {self.p!r}")
        object.__setattr__(self, "p", p)

    @property
    def is_inf(self) -> bool:
        return math.isinf(self.p)

    @property
    def q(self) -> float | None:
        """Half order ``p / 2``, defined only for ``p >= 2``."""
        if self.p < 2.0:
            return None
        return self.p / 2.0

    def half(self) -> "NormOrder":
        if self.q is None:
            raise ValueError(f"p/2 is below 1 for p={self.p}")
        return NormOrder(self.q)

    def __str__(self) -> str:
        return "inf" if self.is_inf else f"{self.p:g}"


def as_order(p) -> NormOrder:
    """Coerce a float, string (``"inf"``) or NormOrder into a NormOrder."""
    if isinstance(p, NormOrder):
        return p
    if isinstance(p, str):
        p = math.inf if p.strip().lower() in {"inf", "infinity", "∞"} else float(p)
    return NormOrder(p)


def as_matrix(m, *, square: bool = False) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.size == 0:
        raise MatrixError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise MatrixError("matrix has non-finite entries")
    if square and a.shape[0] != a.shape[1]:
        raise MatrixError(f"expected a square matrix, got shape {a.shape}")
    return a


def is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    scale = max(1.0, float(np.max(np.abs(m))))
    return bool(np.max(np.abs(m - m.conj().T)) <= tol * scale)


class EigenSystem(NamedTuple):
    values: np.ndarray  # real, descending
    vectors: np.ndarray  # columns are eigenvectors


class SingularSystem(NamedTuple):
    values: np.ndarray  # descending, nonnegative
    u: np.ndarray
    vh: np.ndarray


def spectral_factor(m, mode: str = "hermitian"):
    """Eigen- or singular-value factorization of a square matrix.

    ``mode="hermitian"`` returns an :class:`EigenSystem` with real eigenvalues
    sorted in descending order; ``mode="general"`` returns a
    :class:`SingularSystem` with ``m = u @ diag(values) @ vh``.
    """
    a = as_matrix(m, square=True)
    try:
        if mode == "hermitian":
            if not is_hermitian(a):
                raise MatrixError("hermitian mode requires a Hermitian matrix")
            w, v = np.linalg.eigh((a + a.conj().T) / 2)
            return EigenSystem(w[::-1].copy(), v[:, ::-1].copy())
        if mode == "general":
            u, s, vh = np.linalg.svd(a)
            return SingularSystem(s, u, vh)
    except np.linalg.LinAlgError as exc:
        raise MatrixError(f"factorization did not converge: {exc}") from exc
    raise ValueError(f"unknown mode {mode!r}; use 'hermitian' or 'general'")


def singular_values(m) -> np.ndarray:
    """Singular values (descending) of any matrix, rectangular allowed."""
    a = as_matrix(m)
    try:
        return np.linalg.svd(a, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise MatrixError(f"SVD did not converge: {exc}") from exc


def norm_from_singular(s, p) -> float:
    """Schatten norm from a vector of singular values."""
    p = as_order(p)
    s = np.asarray(s, dtype=float)
    if s.size == 0:
        return 0.0
    smax = float(np.max(s))
    if smax == 0.0:
        return 0.0
    if p.is_inf:
        return smax
    s = np.where(s < SINGULAR_FLOOR * smax, 0.0, s)
    # scale by smax so large p cannot underflow or overflow
    return smax * float(np.sum((s / smax) ** p.p)) ** (1.0 / p.p)


def schatten_norm(m, p) -> float:
    """``(sum_i s_i**p)**(1/p)`` over the singular values of ``m``."""
    return norm_from_singular(singular_values(m), p)


def kron(a, b) -> np.ndarray:
    return np.kron(as_matrix(a), as_matrix(b))


@dataclass(frozen=True)
class Block2x2:
    """Four equally sized square blocks ``[[a, b], [c, d]]``."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        blocks = [as_matrix(x, square=True) for x in (self.a, self.b, self.c, self.d)]
        dims = {x.shape[0] for x in blocks}
        if len(dims) != 1:
            raise MatrixError(f"blocks must share one dimension, got {sorted(dims)}")
        for name, x in zip("abcd", blocks):
            object.__setattr__(self, name, x)

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def blocks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self.a, self.b, self.c, self.d


def block_assemble(b: Block2x2) -> np.ndarray:
    return np.block([[b.a, b.b], [b.c, b.d]])


def block_extract(m, d: int | None = None) -> Block2x2:
    a = as_matrix(m, square=True)
    n = a.shape[0]
    if d is None:
        if n % 2:
            raise MatrixError(f"cannot split odd dimension {n} into 2x2 blocks")
        d = n // 2
    if 2 * d != n:
        raise MatrixError(f"matrix of size {n} is not a 2x2 arrangement of {d}x{d} blocks")
    return Block2x2(a[:d, :d].copy(), a[:d, d:].copy(), a[d:, :d].copy(), a[d:, d:].copy())


def partial_trace(m, dims: tuple[int, int], side: str = "second") -> np.ndarray:
    """Trace out one factor of a ``d1*d2``-dimensional operator.

    ``side="second"`` traces out the second factor and returns a ``d1 x d1``
    matrix; ``side="first"`` returns ``d2 x d2``.
    """
    a = as_matrix(m, square=True)
    d1, d2 = (int(x) for x in dims)
    if a.shape[0] != d1 * d2:
        raise MatrixError(f"matrix of size {a.shape[0]} does not match dims {dims}")
    t = a.reshape(d1, d2, d1, d2)
    if side == "second":
        return np.einsum("ikjk->ij", t)
    if side == "first":
        return np.einsum("kikj->ij", t)
    raise ValueError(f"side must be 'first' or 'second', got {side!r}")


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (g + g.conj().T) / 2


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Unitary ``V exp(i diag(w)) V*`` from the eigensystem of a random Hermitian matrix."""
    eig = spectral_factor(random_hermitian(d, rng), "hermitian")
    phases = np.exp(1j * rng.uniform(0, 2 * np.pi, size=d))
    return (eig.vectors * phases) @ eig.vectors.conj().T


def random_complex(shape, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
