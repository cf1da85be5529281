"""Linear maps on matrix algebras and the Bloch-ball picture of qubit maps.

A :class:`QuantumMap` always carries its superoperator ``S`` acting on
column-stacked matrices, ``vec(Phi(X)) = S @ vec(X)`` with
``vec(X) = X.reshape(-1, order="F")``.  Kraus operators are kept alongside
when the map was built from them.  The Choi matrix is the unnormalized
``sum_ij Phi(E_ij) ⊗ E_ij`` (trace ``d_in``), so trace preservation is the
statement that tracing out the output factor leaves the identity.

Trace-preserving qubit maps are also represented by :class:`AffineQubitMap`,
the action ``x -> A x + v`` on Bloch vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .matcore import as_matrix, as_order, partial_trace, random_complex

TP_TOL = 1e-10
CP_TOL = 1e-9
PP_TOL = 1e-10

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)


class MapError(ValueError):
    """Raised when a map does not satisfy an operation's precondition."""


def _superop_to_natural(s: np.ndarray, d_in: int, d_out: int) -> np.ndarray:
    # natural[a, b, c, d] = Phi(E_cd)[a, b]
    return s.reshape(d_out, d_out, d_in, d_in).transpose(1, 0, 3, 2)


def _natural_to_superop(t: np.ndarray) -> np.ndarray:
    d_out, _, d_in, _ = t.shape
    return np.ascontiguousarray(t.transpose(1, 0, 3, 2)).reshape(d_out * d_out, d_in * d_in)


def vec(x: np.ndarray) -> np.ndarray:
    return np.asarray(x).reshape(-1, order="F")


def unvec(y: np.ndarray, d: int) -> np.ndarray:
    return np.asarray(y).reshape(d, d, order="F")


class QuantumMap:
    """A linear map from ``d_in x d_in`` to ``d_out x d_out`` matrices."""

    def __init__(self, superop, d_in: int, d_out: int, kraus=None, name: str | None = None):
        s = as_matrix(superop)
        if s.shape != (d_out * d_out, d_in * d_in):
            raise MapError(
                f"superoperator shape {s.shape} does not match d_in={d_in}, d_out={d_out}"
            )
        self.superop = s
        self.d_in = int(d_in)
        self.d_out = int(d_out)
        self.kraus = None if kraus is None else [as_matrix(k) for k in kraus]
        self.name = name

    def __repr__(self):
        label = self.name or "map"
        form = "kraus" if self.kraus is not None else "superop"
        return f"QuantumMap({label}, d_in={self.d_in}, d_out={self.d_out}, {form})"

    @classmethod
    def from_superop(cls, superop, d_in: int | None = None, d_out: int | None = None, name=None):
        s = as_matrix(superop)
        d_out = d_out or math.isqrt(s.shape[0])
        d_in = d_in or math.isqrt(s.shape[1])
        return cls(s, d_in, d_out, name=name)

    @classmethod
    def from_kraus(cls, ops: Sequence, name=None):
        ops = [as_matrix(k) for k in ops]
        if not ops:
            raise MapError("empty Kraus list")
        d_out, d_in = ops[0].shape
        if any(k.shape != (d_out, d_in) for k in ops):
            raise MapError("Kraus operators must share one shape")
        s = sum(np.kron(k.conj(), k) for k in ops)
        return cls(s, d_in, d_out, kraus=ops, name=name)

    @classmethod
    def from_choi(cls, choi, d_in: int, d_out: int, name=None):
        j = as_matrix(choi, square=True)
        if j.shape[0] != d_in * d_out:
            raise MapError(f"Choi matrix size {j.shape[0]} != d_in*d_out = {d_in * d_out}")
        t = j.reshape(d_out, d_in, d_out, d_in).transpose(0, 2, 1, 3)
        return cls(_natural_to_superop(t), d_in, d_out, name=name)

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], d_in: int, name=None):
        cols = []
        for d in range(d_in):
            for c in range(d_in):
                e = np.zeros((d_in, d_in), dtype=complex)
                e[c, d] = 1.0
                cols.append(vec(as_matrix(fn(e))))
        s = np.stack(cols, axis=1)
        return cls(s, d_in, math.isqrt(s.shape[0]), name=name)

    @property
    def natural(self) -> np.ndarray:
        return _superop_to_natural(self.superop, self.d_in, self.d_out)

    def apply(self, rho) -> np.ndarray:
        x = as_matrix(rho, square=True)
        if x.shape[0] != self.d_in:
            raise MapError(f"input of size {x.shape[0]} for a map on {self.d_in}x{self.d_in}")
        return unvec(self.superop @ vec(x), self.d_out)

    __call__ = apply

    def adjoint_apply(self, y) -> np.ndarray:
        """Hilbert-Schmidt adjoint: ``Tr(Y* Phi(X)) = Tr(Phi^†(Y)* X)``."""
        y = as_matrix(y, square=True)
        return unvec(self.superop.conj().T @ vec(y), self.d_in)

    def choi(self) -> np.ndarray:
        t = self.natural
        n = self.d_out * self.d_in
        return t.transpose(0, 2, 1, 3).reshape(n, n)

    def is_trace_preserving(self, tol: float = TP_TOL) -> bool:
        red = partial_trace(self.choi(), (self.d_out, self.d_in), side="first")
        return bool(np.max(np.abs(red - np.eye(self.d_in))) <= tol)

    def tensor(self, other: "QuantumMap") -> "QuantumMap":
        t1, t2 = self.natural, other.natural
        t = np.einsum("abcd,efgh->aebfcgdh", t1, t2)
        do = self.d_out * other.d_out
        di = self.d_in * other.d_in
        t = t.reshape(do, do, di, di)
        kraus = None
        if self.kraus is not None and other.kraus is not None:
            kraus = [np.kron(k1, k2) for k1 in self.kraus for k2 in other.kraus]
        name = f"{self.name or 'map'}⊗{other.name or 'map'}"
        return QuantumMap(_natural_to_superop(t), di, do, kraus=kraus, name=name)

    def __matmul__(self, other: "QuantumMap") -> "QuantumMap":
        return self.tensor(other)


def mix_maps(maps: Sequence[QuantumMap], weights: Sequence[float]) -> QuantumMap:
    """Linear combination ``sum_i w_i Phi_i`` of maps of equal shape."""
    first = maps[0]
    s = sum(w * m.superop for w, m in zip(weights, maps))
    return QuantumMap(s, first.d_in, first.d_out, name="mixture")


# ---------------------------------------------------------------------------
# Bloch representation


@dataclass(frozen=True)
class AffineQubitMap:
    """Trace-preserving qubit map ``x -> A x + v`` on Bloch vectors."""

    A: np.ndarray
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        a = np.asarray(self.A, dtype=float).reshape(3, 3)
        v = np.asarray(self.v, dtype=float).reshape(3)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(v))):
            raise MapError("affine map has non-finite entries")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "v", v)

    def bloch(self, x) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float) + self.v

    def apply(self, rho) -> np.ndarray:
        x = as_matrix(rho, square=True)
        if x.shape[0] != 2:
            raise MapError("affine qubit maps act on 2x2 matrices")
        t = np.trace(x)
        coeff = np.array([np.trace(s @ x) for s in PAULIS])
        y = self.A @ coeff + self.v * t
        return 0.5 * (t * I2 + sum(yi * s for yi, s in zip(y, PAULIS)))

    __call__ = apply

    def to_map(self, name: str | None = None) -> QuantumMap:
        return map_from_affine(self, name=name)

    def scaled(self, r: float) -> "AffineQubitMap":
        return AffineQubitMap(r * self.A, r * self.v)

    def params(self) -> np.ndarray:
        """The 12 real coordinates ``(A.ravel(), v)``."""
        return np.concatenate([self.A.ravel(), self.v])


def bloch_vector(rho) -> np.ndarray:
    x = as_matrix(rho, square=True)
    return np.array([np.trace(s @ x).real for s in PAULIS])


def state_from_bloch(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return 0.5 * (I2 + sum(xi * s for xi, s in zip(x, PAULIS)))


def pure_state_from_bloch(x) -> np.ndarray:
    """Unit vector ``psi`` with ``psi psi* = (I + x.sigma)/2`` for a unit ``x``."""
    x = np.asarray(x, dtype=float)
    x = x / np.linalg.norm(x)
    theta = math.acos(max(-1.0, min(1.0, x[2])))
    phi = math.atan2(x[1], x[0])
    return np.array([math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)])


def map_from_affine(m: AffineQubitMap, name: str | None = None) -> QuantumMap:
    return QuantumMap.from_function(m.apply, 2, name=name or "affine")


def affine_from_map(m: QuantumMap) -> AffineQubitMap:
    """Read off ``A_ij = Tr(s_i Phi(s_j))/2`` and ``v_i = Tr(s_i Phi(I))/2``."""
    if m.d_in != 2 or m.d_out != 2:
        raise MapError(f"affine form needs a qubit map, got d_in={m.d_in}, d_out={m.d_out}")
    if not m.is_trace_preserving():
        raise MapError("map is not trace preserving")
    a = np.array([[0.5 * np.trace(si @ m(sj)) for sj in PAULIS] for si in PAULIS])
    v = np.array([0.5 * np.trace(si @ m(I2)) for si in PAULIS])
    if max(np.max(np.abs(a.imag)), np.max(np.abs(v.imag))) > TP_TOL:
        raise MapError("map does not preserve Hermiticity; no real Bloch representation")
    return AffineQubitMap(a.real, v.real)


def apply_map(m, rho) -> np.ndarray:
    return m.apply(rho)


class CPTest(NamedTuple):
    choi: np.ndarray
    is_cp: bool
    min_eigenvalue: float


def choi_and_cp_test(m) -> CPTest:
    if isinstance(m, AffineQubitMap):
        m = map_from_affine(m)
    j = m.choi()
    herm = (j + j.conj().T) / 2
    lo = float(np.linalg.eigvalsh(herm)[0])
    hermitian = np.max(np.abs(j - j.conj().T)) <= CP_TOL * max(1.0, np.max(np.abs(j)))
    is_cp = m.kraus is not None or (bool(hermitian) and lo >= -CP_TOL)
    return CPTest(j, is_cp, lo)


# ---------------------------------------------------------------------------
# Image radius: max over the unit sphere of |A x + v|


def _secular_root(h, g, lo, hi, iters=200):
    """Root ``mu > max(h)`` of ``1/|x(mu)| = 1`` with ``x_i = g_i/(mu - h_i)``."""

    def phi(mu):
        x = g / (mu - h)
        nx = np.linalg.norm(x)
        dphi = np.sum(g * g / (mu - h) ** 3) / nx**3
        return 1.0 / nx - 1.0, dphi

    mu = hi
    for _ in range(iters):
        f, df = phi(mu)
        if abs(f) < 1e-15:
            break
        if f < 0:
            lo = mu
        else:
            hi = mu
        if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(hi)):
            break
        step = mu - f / df if df > 0 else None
        mu = step if step is not None and lo < step < hi else 0.5 * (lo + hi)
    return mu


def image_radius(m: AffineQubitMap) -> tuple[float, np.ndarray]:
    """Farthest distance from the origin of the image of the Bloch sphere.

    Solves ``max x'Hx + 2g'x + c`` over ``|x| = 1`` with ``H = A'A``,
    ``g = A'v`` in the eigenbasis of ``H``.  Returns the radius and the unit
    input vector achieving it.
    """
    a, v = m.A, m.v
    h, q = np.linalg.eigh(a.T @ a)
    g = q.T @ (a.T @ v)
    hmax = h[-1]
    scale = max(hmax, float(np.linalg.norm(g)), 1e-300)
    top = h >= hmax - 1e-12 * scale
    gtop = float(np.linalg.norm(g[top]))

    y = None
    if gtop <= 1e-14 * scale:
        rest = ~top
        yp = np.zeros(3)
        yp[rest] = g[rest] / (hmax - h[rest])
        nrm = float(np.linalg.norm(yp))
        if nrm <= 1.0:
            # hard case: fill the norm budget along the top eigenspace
            k = int(np.flatnonzero(top)[-1])
            sign = 1.0 if g[k] >= 0 else -1.0
            rem = 1.0 - nrm * nrm
            # a budget at rounding level means the boundary of the hard case
            yp[k] = sign * math.sqrt(rem) if rem > 64 * np.finfo(float).eps else 0.0
            y = yp
        gs = np.where(top, 0.0, g)
    else:
        gs = g
    if y is None:
        gnorm = float(np.linalg.norm(gs))
        mu = _secular_root(h, gs, hmax, hmax + gnorm)
        y = gs / (mu - h)
    x = q @ y
    x = x / np.linalg.norm(x)
    return float(np.linalg.norm(a @ x + v)), x


def is_positivity_preserving(m: AffineQubitMap, tol: float = PP_TOL) -> bool:
    return image_radius(m)[0] <= 1.0 + tol


# ---------------------------------------------------------------------------
# Rotations and the diagonal form


def rotation_lift(rot) -> np.ndarray:
    """SU(2) element ``U`` with ``U (x.sigma) U* = (R x).sigma``."""
    r = np.asarray(rot, dtype=float)
    if r.shape != (3, 3):
        raise MapError(f"rotation must be 3x3, got {r.shape}")
    if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-10:
        raise MapError("matrix is not orthogonal")
    if abs(np.linalg.det(r) - 1.0) > 1e-10:
        raise MapError("matrix is not a proper rotation (det != 1)")
    qx, qy, qz, qw = Rotation.from_matrix(r).as_quat()
    return qw * I2 - 1j * (qx * SIGMA_X + qy * SIGMA_Y + qz * SIGMA_Z)


def rotation_of(u) -> np.ndarray:
    """The rotation ``R(U)`` induced on Bloch vectors by ``rho -> U rho U*``."""
    u = as_matrix(u, square=True)
    return np.array(
        [[0.5 * np.trace(si @ u @ sj @ u.conj().T).real for sj in PAULIS] for si in PAULIS]
    )


# conjugation by sigma_z / sigma_x as Bloch rotations
_FLIP_12 = np.diag([-1.0, -1.0, 1.0])
_FLIP_23 = np.diag([1.0, -1.0, -1.0])


@dataclass(frozen=True)
class DiagonalForm:
    """``Phi'(rho) = U_r Phi(U_d rho U_d*) U_r*`` has Bloch form ``(diag(lambdas), v)``."""

    lambdas: np.ndarray
    v: np.ndarray
    rot_domain: np.ndarray
    rot_range: np.ndarray

    @property
    def u_domain(self) -> np.ndarray:
        return rotation_lift(self.rot_domain)

    @property
    def u_range(self) -> np.ndarray:
        return rotation_lift(self.rot_range)

    def as_affine(self) -> AffineQubitMap:
        return AffineQubitMap(np.diag(self.lambdas), self.v)

    def reconstruct(self) -> AffineQubitMap:
        rr, rd = self.rot_range, self.rot_domain
        return AffineQubitMap(rr.T @ np.diag(self.lambdas) @ rd.T, rr.T @ self.v)


def _align_degenerate(s, u, vt_cols, v, tol):
    """Rotate within groups of equal singular values so ``u' v`` uses one axis per group."""
    n = len(s)
    i = 0
    while i < n:
        j = i + 1
        while j < n and abs(s[j] - s[i]) <= tol:
            j += 1
        k = j - i
        if k >= 2:
            ug = u[:, i:j]
            p = ug.T @ v
            pn = np.linalg.norm(p)
            if pn > 0:
                target = np.zeros(k)
                target[-1] = pn
                w = p - target
                wn = np.linalg.norm(w)
                hh = np.eye(k)
                if wn > 1e-300:
                    w = w / wn
                    hh = hh - 2.0 * np.outer(w, w)
                    flip = np.eye(k)
                    flip[0, 0] = -1.0
                    qg = flip @ hh  # proper rotation taking p to |p| e_last
                    u[:, i:j] = ug @ qg.T
                    vt_cols[:, i:j] = vt_cols[:, i:j] @ qg.T
        i = j


def diagonal_form(m: AffineQubitMap) -> DiagonalForm:
    u, s, vt = np.linalg.svd(m.A)
    vcols = vt.T.copy()
    u = u.copy()
    # deterministic sign per singular pair
    for i in range(3):
        k = int(np.argmax(np.abs(vcols[:, i])))
        if vcols[k, i] < 0:
            vcols[:, i] *= -1
            u[:, i] *= -1
    _align_degenerate(s, u, vcols, m.v, tol=1e-10 * max(1.0, s[0]))
    lam = s.astype(float).copy()
    if np.linalg.det(u) < 0:
        u[:, 2] *= -1
        lam[2] *= -1
    if np.linalg.det(vcols) < 0:
        vcols[:, 2] *= -1
        lam[2] *= -1
    rot_range = u.T
    rot_domain = vcols
    if lam[0] < 0:
        rot_domain = rot_domain @ _FLIP_12
        lam = lam * np.diag(_FLIP_12)
    if lam[1] < 0:
        rot_domain = rot_domain @ _FLIP_23
        lam = lam * np.diag(_FLIP_23)
    return DiagonalForm(lam, rot_range @ m.v, rot_domain, rot_range)


def conjugated(m: AffineQubitMap, u_domain, u_range) -> AffineQubitMap:
    """Bloch form of ``rho -> U_r Phi(U_d rho U_d*) U_r*``."""
    rd, rr = rotation_of(u_domain), rotation_of(u_range)
    return AffineQubitMap(rr @ m.A @ rd, rr @ m.v)


# ---------------------------------------------------------------------------
# Closed-form maximal p-norm of qubit maps


def h_p(r: float, p) -> float:
    """p-norm of a qubit state whose Bloch vector has length ``r``."""
    p = as_order(p)
    if not 0.0 <= r <= 1.0 + 1e-9:
        raise ValueError(f"Bloch length must lie in [0, 1], got {r}")
    r = min(r, 1.0)
    hi, lo = (1.0 + r) / 2.0, (1.0 - r) / 2.0
    if p.is_inf:
        return hi
    return hi * (1.0 + (lo / hi) ** p.p) ** (1.0 / p.p)


class QubitNorm(NamedTuple):
    value: float
    state: np.ndarray
    bloch: np.ndarray
    radius: float


def nu_p_qubit(m, p) -> QubitNorm:
    """Maximal output p-norm of a positivity-preserving trace-preserving qubit map."""
    if isinstance(m, QuantumMap):
        m = affine_from_map(m)
    r, x = image_radius(m)
    if r > 1.0 + PP_TOL:
        raise MapError(f"map is not positivity preserving (image radius {r:.12g} > 1)")
    return QubitNorm(h_p(min(r, 1.0), p), pure_state_from_bloch(x), x, r)


# ---------------------------------------------------------------------------
# Constructors


def identity(d: int = 2) -> QuantumMap:
    return QuantumMap.from_kraus([np.eye(d)], name=f"identity({d})")


def transpose(d: int = 2) -> QuantumMap:
    if d < 1:
        raise ValueError("dimension must be positive")
    return QuantumMap.from_function(lambda x: x.T, d, name=f"transpose({d})")


def werner_holevo(d: int = 3) -> QuantumMap:
    """``rho -> (Tr(rho) I - rho^T) / (d - 1)``."""
    if d < 2:
        raise ValueError(f"Werner-Holevo channel needs d >= 2, got {d}")
    eye = np.eye(d)
    return QuantumMap.from_function(
        lambda x: (np.trace(x) * eye - x.T) / (d - 1), d, name=f"werner_holevo({d})"
    )


def depolarizing(lam: float) -> QuantumMap:
    """``rho -> lam rho + (1 - lam) I/2`` as Kraus operators."""
    if not -1.0 / 3.0 - 1e-12 <= lam <= 1.0 + 1e-12:
        raise ValueError(f"depolarizing parameter must lie in [-1/3, 1], got {lam}")
    a = math.sqrt(max(0.0, (1 + 3 * lam) / 4))
    b = math.sqrt(max(0.0, (1 - lam) / 4))
    return QuantumMap.from_kraus([a * I2] + [b * s for s in PAULIS], name=f"depolarizing({lam:g})")


def depolarizing_affine(lam: float) -> AffineQubitMap:
    return AffineQubitMap(lam * np.eye(3), np.zeros(3))


def amplitude_damping(gamma: float) -> QuantumMap:
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"damping parameter must lie in [0, 1], got {gamma}")
    k0 = np.array([[1, 0], [0, math.sqrt(1 - gamma)]], dtype=complex)
    k1 = np.array([[0, math.sqrt(gamma)], [0, 0]], dtype=complex)
    return QuantumMap.from_kraus([k0, k1], name=f"amplitude_damping({gamma:g})")


def amplitude_damping_affine(gamma: float) -> AffineQubitMap:
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"damping parameter must lie in [0, 1], got {gamma}")
    c = math.sqrt(1 - gamma)
    return AffineQubitMap(np.diag([c, c, 1 - gamma]), np.array([0.0, 0.0, gamma]))


def random_cp(d: int, rank: int, rng: np.random.Generator, d_out: int | None = None) -> QuantumMap:
    """Random channel: Gaussian Kraus operators ``G_k S^{-1/2}`` with ``S = sum G_k* G_k``."""
    if d < 1 or rank < 1:
        raise ValueError("dimension and rank must be positive")
    d_out = d_out or d
    gs = [random_complex((d_out, d), rng) for _ in range(rank)]
    s = sum(g.conj().T @ g for g in gs)
    w, vecs = np.linalg.eigh(s)
    inv_sqrt = (vecs / np.sqrt(w)) @ vecs.conj().T
    ops = [g @ inv_sqrt for g in gs]
    m = QuantumMap.from_kraus(ops, name=f"random_cp({d},{rank})")
    if not m.is_trace_preserving():
        raise MapError("random channel failed its trace-preservation self-check")
    return m


def random_pp_tp_qubit(r: float, rng: np.random.Generator) -> AffineQubitMap:
    """Generic positivity-preserving qubit map whose image radius is exactly ``r``."""
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"target radius must lie in [0, 1], got {r}")
    while True:
        m = AffineQubitMap(rng.uniform(-1, 1, (3, 3)), rng.uniform(-1, 1, 3))
        rad, _ = image_radius(m)
        if rad > 1e-6:
            return m.scaled(r / rad)
