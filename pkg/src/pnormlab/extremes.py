"""Extreme affine maps of the unit ball and convex decompositions into them.

An extreme map ``x -> B x + w`` of the closed unit ball of R^3 is described
by ``kappa in [0, 1]``, ``delta in (0, 1]`` and orthogonal ``Q1, Q2`` via

    Q1 w = (0, 0, delta (1 - kappa^2)),   Q1 B Q2 = diag(m, m, kappa m),
    m = sqrt(1 + kappa^2 delta^2 - delta^2).

Positivity-preserving qubit maps with image radius at most ``r`` are exactly
the ``r``-scaled ball maps, so every such map is a convex combination of at
most 13 scaled extremes; :func:`decompose_into_extremes` finds one by column
generation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize
from scipy.spatial.transform import Rotation

from .channels import AffineQubitMap, diagonal_form, image_radius

ORTHO_TOL = 1e-10
MEMBER_TOL = 1e-9
MAX_ATOMS = 13
_E3 = np.array([0.0, 0.0, 1.0])


class DecompositionError(RuntimeError):
    def __init__(self, message: str, best: "Decomposition | None" = None):
        super().__init__(message)
        self.best = best


# ---------------------------------------------------------------------------
# Rotations


def rotvec_to_matrix(rv) -> np.ndarray:
    rv = np.asarray(rv, dtype=float)
    theta = float(np.linalg.norm(rv))
    if theta < 1e-300:
        return np.eye(3)
    k = rv / theta
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(theta) * kx + (1 - math.cos(theta)) * (kx @ kx)


def matrix_to_rotvec(rot) -> np.ndarray:
    return Rotation.from_matrix(np.asarray(rot, dtype=float)).as_rotvec()


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.standard_normal(4)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_orthogonal(rng: np.random.Generator) -> np.ndarray:
    sign = 1.0 if rng.random() < 0.5 else -1.0
    return sign * random_rotation(rng)


def _check_orthogonal(q, name):
    q = np.asarray(q, dtype=float)
    if q.shape != (3, 3) or np.max(np.abs(q.T @ q - np.eye(3))) > ORTHO_TOL:
        raise ValueError(f"{name} is not a 3x3 orthogonal matrix")
    return q


# ---------------------------------------------------------------------------
# Extreme maps


def gs_scalar(kappa: float, delta: float) -> float:
    return math.sqrt(max(0.0, 1.0 + kappa * kappa * delta * delta - delta * delta))


@dataclass(frozen=True)
class GSExtreme:
    kappa: float
    delta: float
    q1: np.ndarray
    q2: np.ndarray
    B: np.ndarray = field(init=False, repr=False)
    w: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = gs_scalar(self.kappa, self.delta)
        d = np.diag([m, m, self.kappa * m])
        object.__setattr__(self, "B", self.q1.T @ d @ self.q2.T)
        object.__setattr__(self, "w", self.q1.T @ (_E3 * self.delta * (1 - self.kappa**2)))

    @property
    def m_scalar(self) -> float:
        return gs_scalar(self.kappa, self.delta)

    @property
    def boundary(self) -> bool:
        """True for the ``delta = 0`` closure maps outside the classification."""
        return self.delta == 0.0

    def as_affine(self) -> AffineQubitMap:
        return AffineQubitMap(self.B, self.w)

    def scaled_map(self, r: float) -> AffineQubitMap:
        return AffineQubitMap(r * self.B, r * self.w)

    def canonical(self) -> tuple[np.ndarray, np.ndarray, int]:
        """``(rotvec1, rotvec2, sign)`` with ``Q1 = R(rotvec1)``, ``Q2 = sign * R(rotvec2)``.

        Uses that ``(Q1, Q2)`` and ``(-P Q1, -Q2 P)`` with ``P = diag(1, -1, -1)``
        describe the same map.
        """
        q1, q2 = self.q1, self.q2
        if np.linalg.det(q1) < 0:
            p = np.diag([1.0, -1.0, -1.0])
            q1, q2 = -p @ q1, -q2 @ p
        sign = 1 if np.linalg.det(q2) > 0 else -1
        return matrix_to_rotvec(q1), matrix_to_rotvec(sign * q2), sign

    def to_dict(self) -> dict:
        rv1, rv2, sign = self.canonical()
        return {"kappa": self.kappa, "delta": self.delta, "q1_rotvec": rv1.tolist(),
                "q2_rotvec": rv2.tolist(), "sign": sign, "boundary": self.boundary}

    @classmethod
    def from_dict(cls, d: dict) -> "GSExtreme":
        q1 = rotvec_to_matrix(d["q1_rotvec"])
        q2 = d.get("sign", 1) * rotvec_to_matrix(d["q2_rotvec"])
        return cls(float(d["kappa"]), float(d["delta"]), q1, q2)


def gs_build(kappa: float, delta: float, q1=None, q2=None, allow_boundary: bool = False) -> GSExtreme:
    """Build the extreme ball map with the given parameters and verify ball containment."""
    if not 0.0 <= kappa <= 1.0:
        raise ValueError(f"kappa must lie in [0, 1], got {kappa}")
    lo_ok = delta >= 0.0 if allow_boundary else delta > 0.0
    if not (lo_ok and delta <= 1.0):
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    q1 = np.eye(3) if q1 is None else _check_orthogonal(q1, "q1")
    q2 = np.eye(3) if q2 is None else _check_orthogonal(q2, "q2")
    e = GSExtreme(float(kappa), float(delta), q1, q2)
    radius, _ = image_radius(e.as_affine())
    if radius > 1.0 + 1e-10:
        raise ArithmeticError(f"extreme map leaves the unit ball (radius {radius})")
    return e


def random_gs(rng: np.random.Generator) -> GSExtreme:
    kappa = float(rng.uniform(0.0, 1.0))
    delta = float(1.0 - rng.uniform(0.0, 1.0))  # (0, 1]
    return gs_build(kappa, delta, random_orthogonal(rng), random_orthogonal(rng))


def lemma2_check(e: GSExtreme, r: float, tol: float = 1e-9) -> bool:
    """Diagonal form of the r-scaled map has at most one nonzero translation entry.

    Also requires the diagonal to be ``(r m, r m, r kappa m)`` up to order and sign.
    """
    df = diagonal_form(e.scaled_map(r))
    few_nonzero = int(np.count_nonzero(np.abs(df.v) < tol)) >= 2
    m = e.m_scalar
    expected = np.sort([r * m, r * m, r * e.kappa * m])
    shape_ok = bool(np.max(np.abs(np.sort(np.abs(df.lambdas)) - expected)) <= tol)
    return few_nonzero and shape_ok


@dataclass(frozen=True)
class CrMembership:
    r: float
    map: AffineQubitMap
    radius: float
    member: bool


def cr_membership(m: AffineQubitMap, r: float) -> CrMembership:
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"r must lie in [0, 1], got {r}")
    radius, _ = image_radius(m)
    return CrMembership(r, m, radius, radius <= r + MEMBER_TOL)


# ---------------------------------------------------------------------------
# Parameterized atoms for the search
#
# theta = (a, b, rv1[3], rv2[3]) with kappa = sin(a)^2, delta = sin(b)^2,
# Q1 = R(rv1), Q2 = sign * R(rv2).


def _atom_from_theta(theta, sign) -> GSExtreme:
    kappa = math.sin(theta[0]) ** 2
    delta = math.sin(theta[1]) ** 2
    return GSExtreme(kappa, delta, rotvec_to_matrix(theta[2:5]), sign * rotvec_to_matrix(theta[5:8]))


def _atom_vec(theta, sign) -> np.ndarray:
    kappa = math.sin(theta[0]) ** 2
    delta = math.sin(theta[1]) ** 2
    m = gs_scalar(kappa, delta)
    r1 = rotvec_to_matrix(theta[2:5])
    r2 = rotvec_to_matrix(theta[5:8])
    b = sign * (r1.T * np.array([m, m, kappa * m])) @ r2.T
    w = r1[2] * (delta * (1 - kappa * kappa))
    return np.concatenate([b.ravel(), w])


def _theta_of(e: GSExtreme) -> tuple[np.ndarray, int]:
    rv1, rv2, sign = e.canonical()
    a = math.asin(math.sqrt(min(1.0, max(0.0, e.kappa))))
    b = math.asin(math.sqrt(min(1.0, max(0.0, e.delta))))
    return np.concatenate([[a, b], rv1, rv2]), sign


def _procrustes(k: np.ndarray) -> tuple[float, np.ndarray]:
    """``max Tr(Q' K)`` over O(3) and its maximizer ``Q = U V'``."""
    u, s, vt = np.linalg.svd(k)
    return float(np.sum(s)), u @ vt


def _pricing_value(x, ga, gv):
    kappa = math.sin(x[0]) ** 2
    delta = math.sin(x[1]) ** 2
    m = gs_scalar(kappa, delta)
    r1 = rotvec_to_matrix(x[2:5])
    # <Q1' D Q2', G> = Tr(Q2' (G' Q1' D)) maximized over Q2 in O(3)
    k = ga.T @ r1.T * np.array([m, m, kappa * m])
    nuc = np.linalg.svd(k, compute_uv=False).sum()
    return nuc + delta * (1 - kappa * kappa) * float(r1[2] @ gv)


def price(direction: np.ndarray, rng: np.random.Generator, starts: int = 12, warm=()) -> tuple[GSExtreme, float]:
    """Extreme ball map maximizing ``<(B, w), direction>`` (multi-start local search)."""
    ga = direction[:9].reshape(3, 3)
    gv = direction[9:]
    x0s = [np.concatenate([rng.uniform(0, math.pi / 2, 2), rng.standard_normal(3)]) for _ in range(starts)]
    for e in warm:
        th, _ = _theta_of(e)
        x0s.append(th[:5])
    best_val, best_x = -math.inf, None
    for x0 in x0s:
        res = minimize(lambda x: -_pricing_value(x, ga, gv), x0, method="BFGS",
                       options={"gtol": 1e-10, "maxiter": 200})
        if -res.fun > best_val:
            best_val, best_x = -res.fun, res.x
    kappa = math.sin(best_x[0]) ** 2
    delta = math.sin(best_x[1]) ** 2
    m = gs_scalar(kappa, delta)
    r1 = rotvec_to_matrix(best_x[2:5])
    _, q2 = _procrustes(ga.T @ r1.T * np.array([m, m, kappa * m]))
    atom = GSExtreme(kappa, delta, r1, q2)
    vec = np.concatenate([atom.B.ravel(), atom.w])
    return atom, float(vec @ direction)


# ---------------------------------------------------------------------------
# Master problem: least squares over the probability simplex


def simplex_lsq(cols: np.ndarray, target: np.ndarray, max_iter: int = 500, eps: float = 1e-13) -> np.ndarray:
    """Minimize ``|cols @ w - target|`` subject to ``w >= 0, sum(w) = 1``.

    Primal active-set method; ``cols`` has one atom per column.
    """
    n = cols.shape[1]
    q = cols.T @ cols
    c = cols.T @ target
    start = int(np.argmin(np.sum((cols - target[:, None]) ** 2, axis=0)))
    w = np.zeros(n)
    w[start] = 1.0
    free = [start]
    for _ in range(max_iter):
        k = len(free)
        kkt = np.zeros((k + 1, k + 1))
        kkt[:k, :k] = q[np.ix_(free, free)]
        kkt[:k, k] = kkt[k, :k] = 1.0
        rhs = np.concatenate([c[free], [1.0]])
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        z, nu = sol[:k], sol[k]
        if np.all(z >= -eps):
            w[:] = 0.0
            w[free] = np.maximum(z, 0.0)
            mu = q @ w - c + nu
            mu[free] = 0.0
            j = int(np.argmin(mu))
            if mu[j] >= -1e-12 * max(1.0, float(np.max(np.abs(c)))):
                break
            free.append(j)
            continue
        cur = w[free]
        neg = z < cur
        ratios = np.where(neg & (z < 0), cur / np.maximum(cur - z, 1e-300), np.inf)
        alpha = min(1.0, float(np.min(ratios)))
        new = cur + alpha * (z - cur)
        w[:] = 0.0
        w[free] = np.maximum(new, 0.0)
        free = [f for f, val in zip(free, new) if val > eps]
        if not free:
            free = [start]
            w[start] = 1.0
    w = np.maximum(w, 0.0)
    return w / w.sum()


def caratheodory_reduce(points: np.ndarray, weights: np.ndarray, max_points: int) -> np.ndarray:
    """Reduce a convex combination to at most ``max_points`` support points, same barycenter."""
    w = weights.copy()
    while np.count_nonzero(w) > max_points:
        idx = np.flatnonzero(w)
        aug = np.vstack([points[:, idx], np.ones(len(idx))])
        z = np.linalg.svd(aug)[2][-1]
        if not np.any(z > 0):
            z = -z
        pos = np.flatnonzero(z > 1e-14)
        ratios = w[idx[pos]] / z[pos]
        j = int(np.argmin(ratios))
        w[idx] = w[idx] - ratios[j] * z
        w[idx[pos[j]]] = 0.0
        w = np.maximum(w, 0.0)
    return w / w.sum()


# ---------------------------------------------------------------------------
# Decomposition


@dataclass(frozen=True)
class Decomposition:
    r: float
    atoms: list
    weights: np.ndarray
    residual: float
    converged: bool
    columns_generated: int = 0

    def recombine(self) -> AffineQubitMap:
        a = sum(w * e.B for w, e in zip(self.weights, self.atoms)) * self.r
        v = sum(w * e.w for w, e in zip(self.weights, self.atoms)) * self.r
        return AffineQubitMap(a, v)

    @property
    def uses_boundary(self) -> bool:
        return any(e.boundary for e in self.atoms)

    def to_dict(self) -> dict:
        return {"r": self.r, "atoms": [e.to_dict() for e in self.atoms],
                "weights": [float(x) for x in self.weights], "residual": self.residual,
                "converged": self.converged, "uses_boundary": self.uses_boundary}


def _refine(thetas, signs, weights, target, max_nfev=2000):
    """Joint nonlinear least squares over atom parameters and simplex weights."""
    k = len(thetas)
    x0 = np.concatenate([np.concatenate(thetas), np.sqrt(np.maximum(weights, 0.0))])

    def resid(x):
        s = x[8 * k:]
        w = s * s / np.sum(s * s)
        acc = -target.copy()
        for i in range(k):
            acc += w[i] * _atom_vec(x[8 * i: 8 * i + 8], signs[i])
        return acc

    sol = least_squares(resid, x0, method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev)
    x = sol.x
    s = x[8 * k:]
    w = s * s / np.sum(s * s)
    return [x[8 * i: 8 * i + 8] for i in range(k)], w


def match_single_extreme(m: AffineQubitMap, tol: float = 1e-9) -> GSExtreme | None:
    """Recognize a ball map that is itself an extreme map, via its diagonal form."""
    df = diagonal_form(m)
    lam, vp = df.lambdas, df.v
    scale = max(1.0, float(np.max(np.abs(lam))))
    nonzero = np.flatnonzero(np.abs(vp) > tol * scale)
    if len(nonzero) > 1:
        return None
    mag = np.abs(lam)
    k = int(nonzero[0]) if len(nonzero) else int(np.argmin(mag))
    others = [i for i in range(3) if i != k]
    mval = float(np.mean(mag[others]))
    c = float(abs(vp[k]))
    if mval <= tol:
        kappa, delta = 0.0, 1.0
    else:
        kappa = min(1.0, float(mag[k]) / mval)
        if len(nonzero) == 0:
            if kappa < 1.0 - tol:
                return None
            kappa, delta = 1.0, 1.0
        else:
            if kappa >= 1.0:
                return None
            delta = c / (1.0 - kappa * kappa)
    if not 0.0 < delta <= 1.0 + tol:
        return None
    delta = min(delta, 1.0)
    perm = np.zeros((3, 3))
    for row, col in enumerate(others + [k]):
        perm[row, col] = 1.0
    e = np.diag([1.0, 1.0, 1.0 if vp[k] >= 0 else -1.0])
    lam_perm = perm @ lam
    f = np.diag(np.where(np.diag(e) * lam_perm >= 0, 1.0, -1.0))
    q1 = e @ perm @ df.rot_range
    q2 = df.rot_domain @ perm.T @ f
    atom = GSExtreme(kappa, delta, q1, q2)
    err = max(np.max(np.abs(atom.B - m.A)), np.max(np.abs(atom.w - m.v)))
    return atom if err <= tol else None


def decompose_into_extremes(m: AffineQubitMap, r: float, tol: float = 1e-6, max_columns: int = 200,
                            seed: int = 0, strict: bool = True) -> Decomposition:
    """Write ``m`` as a convex combination of at most 13 r-scaled extreme maps.

    The recombination matches ``(A, v)`` entrywise within ``tol``.  When the
    column budget runs out, raises :class:`DecompositionError` carrying the
    best decomposition found (or returns it when ``strict=False``).
    """
    mem = cr_membership(m, r)
    if not mem.member:
        raise ValueError(f"map has image radius {mem.radius:.12g} > r = {r}")
    rng = np.random.default_rng(seed)
    if r <= 1e-15:
        e = gs_build(1.0, 1.0)
        return Decomposition(r, [e], np.ones(1), float(np.max(np.abs(m.params()))), True)
    target = m.params() / r
    inner_tol = 0.1 * tol / r
    single = match_single_extreme(AffineQubitMap(m.A / r, m.v / r), tol=inner_tol)
    if single is not None:
        dec = Decomposition(r, [single], np.ones(1), 0.0, True)
        rec = dec.recombine()
        resid = float(max(np.max(np.abs(rec.A - m.A)), np.max(np.abs(rec.v - m.v))))
        return Decomposition(r, [single], np.ones(1), resid, True)

    thetas, signs = [], []
    cols = np.zeros((12, 0))
    weights = np.zeros(0)
    generated = 0
    direction = target.copy() if np.linalg.norm(target) > 0 else rng.standard_normal(12)
    best = None

    def record(thetas, signs, weights):
        atoms = [_atom_from_theta(t, s) for t, s in zip(thetas, signs)]
        vecs = np.stack([_atom_vec(t, s) for t, s in zip(thetas, signs)], axis=1)
        err = float(np.max(np.abs(vecs @ weights - target)))
        return atoms, vecs, err

    while generated < max_columns:
        atom, _ = price(direction, rng, warm=[_atom_from_theta(t, s) for t, s in zip(thetas[:3], signs[:3])])
        th, sg = _theta_of(atom)
        thetas.append(th)
        signs.append(sg)
        cols = np.column_stack([cols, _atom_vec(th, sg)])
        generated += 1
        weights = simplex_lsq(cols, target)
        keep = weights > 1e-14
        thetas = [t for t, k in zip(thetas, keep) if k]
        signs = [s for s, k in zip(signs, keep) if k]
        cols, weights = cols[:, keep], weights[keep] / weights[keep].sum()
        res = target - cols @ weights
        err = float(np.max(np.abs(res)))
        if best is None or err < best[0]:
            best = (err, list(thetas), list(signs), weights.copy())
        if err <= inner_tol:
            break
        # polish once the active set spans enough directions or progress stalls
        if len(thetas) >= 3 and (generated % 5 == 0 or err < 1e-3):
            rt, rw = _refine(thetas, signs, weights, target)
            _, vecs, rerr = record(rt, signs, rw)
            if rerr < err:
                thetas, weights, cols, err = rt, rw, vecs, rerr
                res = target - cols @ weights
                if err < best[0]:
                    best = (err, list(thetas), list(signs), weights.copy())
                if err <= inner_tol:
                    break
        direction = res

    err, thetas, signs, weights = best
    if err > inner_tol and len(thetas) >= 1:
        rt, rw = _refine(thetas, signs, weights, target, max_nfev=5000)
        _, _, rerr = record(rt, signs, rw)
        if rerr < err:
            thetas, weights, err = rt, rw, rerr

    vecs = np.stack([_atom_vec(t, s) for t, s in zip(thetas, signs)], axis=1)
    weights = np.maximum(weights, 0.0)
    weights = weights / weights.sum()
    if len(thetas) > MAX_ATOMS:
        weights = caratheodory_reduce(vecs, weights, MAX_ATOMS)
    keep = weights > 0
    atoms = [_atom_from_theta(t, s) for t, s, k in zip(thetas, signs, keep) if k]
    weights = weights[keep] / weights[keep].sum()
    dec = Decomposition(r, atoms, weights, 0.0, False, generated)
    rec = dec.recombine()
    resid = float(max(np.max(np.abs(rec.A - m.A)), np.max(np.abs(rec.v - m.v))))
    dec = Decomposition(r, atoms, weights, resid, resid <= tol, generated)
    if not dec.converged and strict:
        raise DecompositionError(
            f"no decomposition within tol={tol} after {generated} columns (best residual {resid:.3g})", dec)
    return dec
