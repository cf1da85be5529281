"""End-to-end numerical reproductions.

* multiplicativity of the maximal p-norm for (qubit PP-TP map) ⊗ (CP map)
* the step-by-step bounds for qubit maps whose translation has one nonzero entry
* the transpose map, where multiplicativity fails below p = 2
* the crossing point of the Werner-Holevo witness for d = 3
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .blockineq import ChainStep, _step, norm_2x2
from .channels import (
    AffineQubitMap,
    MapError,
    QuantumMap,
    choi_and_cp_test,
    diagonal_form,
    identity,
    image_radius,
    map_from_affine,
    nu_p_qubit,
    random_cp,
    random_pp_tp_qubit,
    transpose,
    werner_holevo,
)
from .matcore import Block2x2, as_matrix, as_order, block_extract, norm_from_singular, random_complex, schatten_norm
from .pnorm import OptimizerConfig, max_entangled, nu_p_estimate
from .serial import order_to_json

RATIO_TOL = 1e-6
SLACK_TOL = 1e-9
TENSOR_CONFIG = OptimizerConfig(restarts=128)


def _proven(p) -> bool:
    return p.p == 2.0 or p.p >= 4.0


@dataclass(frozen=True)
class SpecialFormMap:
    """Diagonal qubit map ``diag(l1, l2, l3)`` with translation ``(0, 0, v3)``, ``l1, l2 >= 0``."""

    lambda1: float
    lambda2: float
    lambda3: float
    v3: float

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be nonnegative")

    @property
    def c_pp(self) -> float:
        return (1 + self.v3 + self.lambda3) / 2

    @property
    def c_pm(self) -> float:
        return (1 + self.v3 - self.lambda3) / 2

    @property
    def c_mp(self) -> float:
        return (1 - self.v3 + self.lambda3) / 2

    @property
    def c_mm(self) -> float:
        return (1 - self.v3 - self.lambda3) / 2

    @property
    def lam(self) -> float:
        return max(self.lambda1, self.lambda2)

    @property
    def z(self) -> complex:
        return 1.0 if self.lambda1 >= self.lambda2 else 1j

    def as_affine(self) -> AffineQubitMap:
        return AffineQubitMap(np.diag([self.lambda1, self.lambda2, self.lambda3]), [0.0, 0.0, self.v3])

    def coefficients_nonnegative(self, tol: float = 1e-12) -> bool:
        return min(self.c_pp, self.c_pm, self.c_mp, self.c_mm) >= -tol


def special_form(m: AffineQubitMap, tol: float = 1e-9) -> SpecialFormMap:
    """Canonicalize a qubit map whose diagonal form has at most one nonzero translation entry.

    A cyclic relabeling of axes (a rotation, so implementable by unitary
    conjugation) moves the nonzero entry to the third slot; the sign of the
    first two diagonal entries is then fixed by Pauli conjugation.
    """
    df = diagonal_form(m)
    nz = np.flatnonzero(np.abs(df.v) > tol)
    if len(nz) > 1:
        raise MapError("diagonal form has more than one nonzero translation entry")
    k = int(nz[0]) if len(nz) else 2
    shift = 2 - k
    lam = np.roll(df.lambdas, shift)
    v = np.roll(df.v, shift)
    if lam[0] < 0:
        lam[0], lam[1] = -lam[0], -lam[1]
    if lam[1] < 0:
        lam[1], lam[2] = -lam[1], -lam[2]
    return SpecialFormMap(float(lam[0]), float(lam[1]), float(lam[2]), float(v[2]))


def random_special_form(rng: np.random.Generator, max_tries: int = 10_000) -> SpecialFormMap:
    """Positivity-preserving special-form map: draw (l3, v3) with |l3| + |v3| <= 1, then l1, l2."""
    for _ in range(max_tries):
        l3 = rng.uniform(-1, 1)
        v3 = rng.uniform(-1, 1) * (1 - abs(l3))
        l1, l2 = rng.uniform(0, 1 - abs(v3), 2)
        s = SpecialFormMap(float(l1), float(l2), float(l3), float(v3))
        if image_radius(s.as_affine())[0] <= 1.0:
            return s
    raise RuntimeError("rejection sampling of special-form maps failed")


# ---------------------------------------------------------------------------
# Multiplicativity


@dataclass(frozen=True)
class MultiplicativityReport:
    p: object
    nu_phi: float
    nu_omega: float
    product: float
    tensor_estimate: float
    ratio: float
    verdict: str
    consensus: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["p"] = order_to_json(self.p)
        return d


def multiplicativity_gap(phi: AffineQubitMap, omega: QuantumMap, p, cfg: OptimizerConfig | None = None,
                         mode: str = "assert") -> MultiplicativityReport:
    """Compare the estimated maximal p-norm of ``phi ⊗ omega`` with the product of the factors.

    ``nu_phi`` is the closed form; ``nu_omega`` and the tensor value are
    multi-start lower bounds.  The product of the two maximizers is included
    among the tensor starting points, so ``ratio >= 1`` up to rounding.
    """
    p = as_order(p)
    cfg = cfg or TENSOR_CONFIG
    if mode == "assert":
        if not _proven(p):
            raise ValueError(f"assertion mode needs p = 2 or p >= 4, got p={p}")
        if not choi_and_cp_test(omega).is_cp:
            raise MapError("omega is not completely positive")
    qn = nu_p_qubit(phi, p)
    est_omega = nu_p_estimate(omega, p, cfg.replace(seed=cfg.seed + 1))
    joint = map_from_affine(phi) @ omega
    start = np.kron(qn.state, est_omega.argmax)
    est = nu_p_estimate(joint, p, cfg, starts=[start])
    product = qn.value * est_omega.value
    ratio = est.value / product
    verdict = "violation" if ratio > 1 + RATIO_TOL else "consistent"
    return MultiplicativityReport(p, qn.value, est_omega.value, product, est.value, ratio, verdict, est.consensus)


# ---------------------------------------------------------------------------
# Step-by-step bounds for special-form maps


def _hermitian_parts(b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``B = B1 - i B2`` with B1, B2 Hermitian."""
    b1 = (b + b.conj().T) / 2
    b2 = 1j * (b - b.conj().T) / 2
    return b1, b2


def lemma1_chain(phi: SpecialFormMap, omega: QuantumMap, rho12, p, nu_omega: float | None = None,
                 cfg: OptimizerConfig | None = None, tol: float = SLACK_TOL) -> list[ChainStep]:
    """Evaluate every inequality bounding ``||(phi ⊗ omega)(rho12)||_p`` by ``nu_p(phi) nu_p(omega)``.

    ``rho12`` is a state on C^2 ⊗ C^d (qubit first).  For p >= 4 the steps
    follow the block-norm route; for p = 2 the quadratic expansion is used.
    ``nu_omega`` defaults to a multi-start estimate.
    """
    p = as_order(p)
    if not (p.p == 2.0 or p.p >= 4.0):
        raise ValueError(f"the chain is stated for p = 2 or p >= 4, got p={p}")
    rho = as_matrix(rho12, square=True)
    if np.max(np.abs(rho - rho.conj().T)) > 1e-10 or np.linalg.eigvalsh((rho + rho.conj().T) / 2)[0] < -1e-10:
        raise ValueError("rho12 must be positive semidefinite")
    if abs(np.trace(rho) - 1) > 1e-10:
        raise ValueError("rho12 must have unit trace")
    d = omega.d_in
    if rho.shape[0] != 2 * d:
        raise ValueError(f"rho12 has size {rho.shape[0]}, expected {2 * d}")

    blocks = block_extract(rho, d)
    x, y, zb = blocks.a, blocks.b, blocks.d
    A, B, C = omega(x), omega(y), omega(zb)
    b1, b2 = _hermitian_parts(B)
    l1, l2, lam = phi.lambda1, phi.lambda2, phi.lam
    top = phi.c_pp * A + phi.c_pm * C
    bot = phi.c_mm * A + phi.c_mp * C
    off_up = l1 * b1 - 1j * l2 * b2
    off_lo = l1 * b1 + 1j * l2 * b2
    assembled = np.block([[top, off_up], [off_lo, bot]])

    direct = (map_from_affine(phi.as_affine()) @ omega)(rho)
    nu_phi = nu_p_qubit(phi.as_affine(), p).value
    if nu_omega is None:
        nu_omega = nu_p_estimate(omega, p, cfg or TENSOR_CONFIG).value
    na, nb, nc = (schatten_norm(t, p) for t in (A, B, C))
    zph = phi.z
    nz = np.array([[na, zph * nb], [np.conj(zph) * nb, nc]])
    phi_nz = phi.as_affine().apply(nz)
    out_norm = schatten_norm(direct, p)
    trace_sum = float(np.trace(x).real + np.trace(zb).real)

    steps = [_step("block-form", float(np.max(np.abs(direct - assembled))), 0.0, tol)]
    if p.p == 2.0:
        quad = (np.trace(top @ top).real + 2 * (l1**2 * np.trace(b1 @ b1).real + l2**2 * np.trace(b2 @ b2).real)
                + np.trace(bot @ bot).real)
        out2 = out_norm**2
        cross = l1**2 * np.trace(b1 @ b1).real + l2**2 * np.trace(b2 @ b2).real
        bound11 = ((phi.c_pp * na + phi.c_pm * nc) ** 2 + 2 * cross + (phi.c_mm * na + phi.c_mp * nc) ** 2)
        bound12 = ((phi.c_pp * na + phi.c_pm * nc) ** 2 + 2 * lam**2 * nb**2 + (phi.c_mm * na + phi.c_mp * nc) ** 2)
        steps += [
            _step("quadratic-expansion", abs(out2 - quad), 0.0, tol),
            _step("expanded-bound", out2, bound11, tol),
            _step("hermitian-parts", cross, lam**2 * nb**2, tol),
            _step("lambda-bound", bound11, bound12, tol),
            _step("phase-form", abs(bound12 - schatten_norm(phi_nz, 2) ** 2), 0.0, tol),
        ]
    else:
        m_mat = np.array([[schatten_norm(top, p), schatten_norm(off_up, p)],
                          [schatten_norm(off_lo, p), schatten_norm(bot, p)]])
        m_bound = np.array([[phi.c_pp * na + phi.c_pm * nc, lam * nb],
                            [lam * nb, phi.c_mm * na + phi.c_mp * nc]])
        steps += [
            _step("norm-matrix", out_norm, norm_2x2(m_mat, p), tol),
            _step("top-block", m_mat[0, 0], m_bound[0, 0], tol),
            _step("bottom-block", m_mat[1, 1], m_bound[1, 1], tol),
            _step("off-diagonal", max(m_mat[0, 1], m_mat[1, 0]), lam * nb, tol),
            _step("entrywise", norm_2x2(m_mat, p), norm_2x2(m_bound, p), tol),
            _step("phase-form", abs(norm_2x2(m_bound, p) - schatten_norm(phi_nz, p)), 0.0, tol),
        ]
    steps += [
        _step("qubit-form", out_norm, schatten_norm(phi_nz, p), tol),
        _step("nu-phi", schatten_norm(phi_nz, p), nu_phi * (na + nc), tol),
        _step("nu-omega", na + nc, nu_omega * trace_sum, tol),
        _step("trace", abs(trace_sum - 1.0), 0.0, tol),
        _step("final", out_norm, nu_phi * nu_omega, tol),
    ]
    return steps


def random_state(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = rank or dim
    g = random_complex((dim, rank), rng)
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


# ---------------------------------------------------------------------------
# Transpose map and the Werner-Holevo witness


@dataclass(frozen=True)
class TransposeDemo:
    p: object
    estimate: float
    ratio: float
    exact: float

    def to_dict(self) -> dict:
        return {"p": order_to_json(self.p), "estimate": self.estimate, "ratio": self.ratio, "exact": self.exact}


def transpose_demo(p, cfg: OptimizerConfig | None = None) -> TransposeDemo:
    """Estimated ``nu_p(T ⊗ id) / (nu_p(T) nu_p(id))`` for the qubit transpose T.

    ``exact`` is the norm of the partially transposed maximally entangled
    state, ``2^(2/p - 1)``.
    """
    p = as_order(p)
    cfg = cfg or TENSOR_CONFIG
    t2, id2 = transpose(2), identity(2)
    est = nu_p_estimate(t2 @ id2, p, cfg)
    denom = nu_p_qubit(t2, p).value * nu_p_qubit(id2, p).value
    exact = 0.5 if p.is_inf else 2.0 ** (2.0 / p.p - 1.0)
    return TransposeDemo(p, est.value, est.value / denom, exact)


def wh_entangled_output(d: int = 3) -> np.ndarray:
    psi = max_entangled(d)
    wh = werner_holevo(d)
    return (wh @ wh)(np.outer(psi, psi.conj()))


def wh_gap(p, d: int = 3, spectrum: np.ndarray | None = None) -> float:
    """Entangled witness norm minus the product value ``nu_p(Psi)^2 = 2^(2(1-p)/p)``."""
    p = as_order(p)
    if spectrum is None:
        spectrum = np.linalg.eigvalsh(wh_entangled_output(d))
    ent = norm_from_singular(np.abs(spectrum), p)
    prod = 0.25 if p.is_inf else 2.0 ** (2.0 * (1.0 - p.p) / p.p)
    return ent - prod


@dataclass(frozen=True)
class Crossing:
    p_star: float
    lo: float
    hi: float
    spectrum: np.ndarray

    def to_dict(self) -> dict:
        return {"p_star": self.p_star, "lo": self.lo, "hi": self.hi,
                "spectrum": [float(x) for x in self.spectrum]}


def wh_crossing(d: int = 3, bracket: tuple[float, float] = (4.0, 5.5), tol: float = 0.005) -> Crossing:
    """Bisect for the p where the maximally entangled witness overtakes the product bound."""
    spectrum = np.sort(np.linalg.eigvalsh(wh_entangled_output(d)))[::-1]
    lo, hi = map(float, bracket)
    glo, ghi = wh_gap(lo, d, spectrum), wh_gap(hi, d, spectrum)
    if not (glo < 0 < ghi):
        raise ValueError(f"bracket {bracket} does not straddle a sign change (g={glo:.3g}, {ghi:.3g})")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if wh_gap(mid, d, spectrum) < 0:
            lo = mid
        else:
            hi = mid
    return Crossing(0.5 * (lo + hi), lo, hi, spectrum)


# ---------------------------------------------------------------------------
# Random instance generators shared by batches and the CLI


def instance_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def random_pair(rng: np.random.Generator, dims=(2, 3)) -> tuple[AffineQubitMap, QuantumMap]:
    phi = random_pp_tp_qubit(float(rng.uniform(0.05, 1.0)), rng)
    d = int(rng.choice(dims))
    omega = random_cp(d, int(rng.integers(1, d * d + 1)), rng)
    return phi, omega


def channel_block_sampler(dims=(2, 3)):
    """Block matrices ``(Phi ⊗ Omega)(rho)`` split into their qubit blocks."""

    def sample(rng: np.random.Generator) -> Block2x2:
        phi, omega = random_pair(rng, dims)
        rho = random_state(2 * omega.d_in, rng, rank=int(rng.integers(1, 2 * omega.d_in + 1)))
        return block_extract((map_from_affine(phi) @ omega)(rho), omega.d_out)

    sample.__name__ = "channel"
    return sample
