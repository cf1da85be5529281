"""Multi-start estimation of the maximal output p-norm over pure states.

The objective ``F(psi) = ||Phi(psi psi*)||_p`` is maximized on the unit
sphere of C^d by Riemannian gradient ascent (tangent projection, retraction
by normalization) with Barzilai-Borwein trial steps and Armijo backtracking.
All restarts are advanced together as one batch.  Every reported value is
the norm of an actual output, so estimates are lower bounds on the maximum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channels import QuantumMap
from .matcore import NormOrder, as_order, partial_trace

ARMIJO_C = 1e-4
MAX_BACKTRACKS = 40


class StateError(ValueError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    restarts: int = 64
    max_iters: int = 500
    step_tol: float = 1e-10
    value_tol: float = 1e-9
    seed: int = 0
    agree_tol: float = 1e-7
    polish_iters: int = 300

    def __post_init__(self):
        if self.restarts < 1 or self.max_iters < 1:
            raise ValueError("restarts and max_iters must be positive")
        if min(self.step_tol, self.value_tol, self.agree_tol) <= 0:
            raise ValueError("tolerances must be positive")

    def replace(self, **changes) -> "OptimizerConfig":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(changes)
        return OptimizerConfig(**d)


@dataclass(frozen=True)
class NuPEstimate:
    value: float
    argmax: np.ndarray
    restarts_agreeing: int
    restart_values: np.ndarray = field(repr=False)
    dropped: int = 0

    @property
    def consensus(self) -> float:
        return self.restarts_agreeing / max(1, len(self.restart_values))


def normalize_state(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).ravel()
    n = np.linalg.norm(psi)
    if n == 0 or not np.isfinite(n):
        raise StateError("state vector must be finite and nonzero")
    return psi / n


def max_entangled(d: int) -> np.ndarray:
    """``(1/sqrt d) sum_i |ii>`` in the ``(i*d + k)`` product basis."""
    if d < 2:
        raise ValueError(f"maximally entangled state needs d >= 2, got {d}")
    return np.eye(d, dtype=complex).ravel() / math.sqrt(d)


def reduced_state(psi, dims: tuple[int, int], side: str = "second") -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return partial_trace(np.outer(psi, psi.conj()), dims, side=side)


class _Objective:
    """Batched value/gradient of ``psi -> ||Phi(psi psi*)||_p``."""

    def __init__(self, m: QuantumMap, p: NormOrder):
        self.m = m
        self.p = p
        self.s = m.superop
        self.sh = m.superop.conj().T
        self.hermitian = _preserves_hermiticity(m)

    def outputs(self, psi: np.ndarray) -> np.ndarray:
        r, d = psi.shape
        rho = psi[:, :, None] * psi.conj()[:, None, :]
        x = rho.transpose(0, 2, 1).reshape(r, d * d) @ self.s.T
        n = self.m.d_out
        return x.reshape(r, n, n).transpose(0, 2, 1)

    def __call__(self, psi: np.ndarray, grad: bool = True):
        """Return ``(F, f, dF)``: norm, norm**p and the Euclidean gradient of F.

        For ``p = inf`` the second entry is F itself.
        """
        x = self.outputs(psi)
        p = self.p
        if self.hermitian:
            xh = (x + x.conj().transpose(0, 2, 1)) / 2
            lam, w = np.linalg.eigh(xh)
            sv = np.abs(lam)
        else:
            w, sv, vh = np.linalg.svd(x)
        smax = sv.max(axis=1)
        safe = np.where(smax > 0, smax, 1.0)
        if p.is_inf:
            F = smax
            f = F
        else:
            f = np.sum(sv**p.p, axis=1)
            F = safe * np.sum((sv / safe[:, None]) ** p.p, axis=1) ** (1.0 / p.p)
            F = np.where(smax > 0, F, 0.0)
        if not grad:
            return F, f, None
        if self.hermitian:
            if p.is_inf:
                idx = np.argmax(sv, axis=1)
                coef = np.zeros_like(lam)
                coef[np.arange(len(idx)), idx] = np.sign(lam[np.arange(len(idx)), idx])
            else:
                # d(F)/d(lambda_i) = sign(l_i) |l_i|^(p-1) * F^(1-p)
                rel = sv / safe[:, None]
                coef = np.sign(lam) * rel ** (p.p - 1.0)
                coef *= (np.sum(rel**p.p, axis=1) ** (1.0 / p.p - 1.0))[:, None]
            g = (w * coef[:, None, :]) @ w.conj().transpose(0, 2, 1)
        else:
            if p.is_inf:
                g = w[:, :, :1] @ vh[:, :1, :]
            else:
                rel = sv / safe[:, None]
                coef = rel ** (p.p - 1.0)
                coef *= (np.sum(rel**p.p, axis=1) ** (1.0 / p.p - 1.0))[:, None]
                g = (w * coef[:, None, :]) @ vh
        n = self.m.d_out
        r, d = psi.shape
        gv = g.transpose(0, 2, 1).reshape(r, n * n) @ self.sh.T
        h = gv.reshape(r, d, d).transpose(0, 2, 1)
        hs = h + h.conj().transpose(0, 2, 1)
        dF = np.einsum("rab,rb->ra", hs, psi)
        return F, f, dF


def _preserves_hermiticity(m: QuantumMap) -> bool:
    rng = np.random.default_rng(12345)
    d = m.d_in
    x = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    x = x + x.conj().T
    y = m.apply(x)
    return bool(np.max(np.abs(y - y.conj().T)) <= 1e-12 * max(1.0, np.max(np.abs(y))))


def objective_and_gradient(m: QuantumMap, psi, p) -> tuple[float, np.ndarray | None]:
    """Value ``||Phi(psi psi*)||_p`` and the Euclidean gradient of ``Tr|X|^p``.

    The gradient is returned as a complex vector ``g`` standing for the real
    gradient ``(Re g, Im g)`` with respect to ``(Re psi, Im psi)``.  It is
    ``None`` where the objective is not differentiable: ``p = 1`` with a
    singular output, and ``p = inf`` with a repeated top singular value.
    """
    p = as_order(p)
    psi = np.asarray(psi, dtype=complex).ravel()
    if psi.shape[0] != m.d_in:
        raise StateError(f"state of dimension {psi.shape[0]} for a map on C^{m.d_in}")
    if abs(np.linalg.norm(psi) - 1.0) > 1e-12:
        raise StateError("state must be normalized")
    obj = _Objective(m, p)
    F, f, dF = obj(psi[None, :])
    F, f, dF = float(F[0]), float(f[0]), dF[0]
    sv = np.linalg.svd(obj.outputs(psi[None, :])[0], compute_uv=False)
    if p.is_inf:
        if len(sv) > 1 and sv[0] - sv[1] <= 1e-10 * max(sv[0], 1e-300):
            return F, None
        return F, dF
    if p.p == 1.0 and sv[-1] <= 1e-10 * sv[0]:
        return F, None
    # d(F^p) = p F^(p-1) dF
    return F, p.p * F ** (p.p - 1.0) * dF


def _retract(psi: np.ndarray) -> np.ndarray:
    return psi / np.linalg.norm(psi, axis=1, keepdims=True)


def _project(psi: np.ndarray, g: np.ndarray) -> np.ndarray:
    radial = np.real(np.sum(psi.conj() * g, axis=1, keepdims=True))
    return g - radial * psi


def _random_states(cfg: OptimizerConfig, d: int) -> tuple[np.ndarray, list[np.random.Generator]]:
    rngs = [np.random.default_rng(np.random.SeedSequence([cfg.seed, i])) for i in range(cfg.restarts)]
    psi = np.stack([r.standard_normal(d) + 1j * r.standard_normal(d) for r in rngs])
    return _retract(psi), rngs


def _ascend(obj: _Objective, psi: np.ndarray, cfg: OptimizerConfig):
    n = psi.shape[0]
    F, _, dF = obj(psi)
    g = _project(psi, dF)
    step = np.full(n, 1.0)
    active = np.isfinite(F)
    stall = np.zeros(n, dtype=int)
    prev_psi = prev_g = None
    for _ in range(cfg.max_iters):
        gn2 = np.sum(np.abs(g) ** 2, axis=1)
        active &= np.sqrt(gn2) > cfg.step_tol
        if not active.any():
            break
        idx = np.flatnonzero(active)
        if prev_psi is not None:
            s = (psi[idx] - prev_psi[idx]).view(float)
            y = (prev_g[idx] - g[idx]).view(float)
            sy = np.abs(np.sum(s * y, axis=1))
            ss = np.sum(s * s, axis=1)
            bb = np.where(sy > 1e-300, ss / np.maximum(sy, 1e-300), step[idx] * 2.0)
            step[idx] = np.clip(bb, 1e-10, 1e4)
        prev_psi, prev_g = psi.copy(), g.copy()

        t = step[idx].copy()
        accepted = np.zeros(len(idx), dtype=bool)
        newF = F[idx].copy()
        newpsi = psi[idx].copy()
        newdF = dF[idx].copy()
        todo = np.arange(len(idx))
        for _bt in range(MAX_BACKTRACKS):
            if len(todo) == 0:
                break
            k = idx[todo]
            cand = _retract(psi[k] + t[todo, None] * g[k])
            cF, _, cdF = obj(cand)
            ok = np.isfinite(cF) & (cF >= F[k] + ARMIJO_C * t[todo] * gn2[k])
            hit = todo[ok]
            accepted[hit] = True
            newF[hit], newpsi[hit], newdF[hit] = cF[ok], cand[ok], cdF[ok]
            todo = todo[~ok]
            t[todo] *= 0.5
        gain = newF - F[idx]
        step[idx] = t
        F[idx], psi[idx], dF[idx] = newF, newpsi, newdF
        g[idx] = _project(psi[idx], dF[idx])
        small = gain <= 1e-3 * cfg.value_tol * np.maximum(1.0, F[idx])
        stall[idx] = np.where(small, stall[idx] + 1, 0)
        done = ~accepted | (stall[idx] >= 3)
        active[idx[done]] = False
    return psi, F


def _polish(obj: _Objective, psi, F, rngs, iters: int):
    """Value-only random perturbation search for non-differentiable orders."""
    n, d = psi.shape
    radius = np.full(n, 1e-2)
    for _ in range(iters):
        noise = np.stack([r.standard_normal(d) + 1j * r.standard_normal(d) for r in rngs])
        cand = _retract(psi + radius[:, None] * noise / math.sqrt(2 * d))
        cF, _, _ = obj(cand, grad=False)
        better = np.isfinite(cF) & (cF > F)
        psi[better], F[better] = cand[better], cF[better]
        radius = np.where(better, radius * 2.0, radius * 0.7)
        radius = np.clip(radius, 1e-12, 1.0)
    return psi, F


def nu_p_estimate(m: QuantumMap, p, cfg: OptimizerConfig | None = None, starts=()) -> NuPEstimate:
    """Best value of ``||Phi(psi psi*)||_p`` found from ``cfg.restarts`` random starts.

    ``starts`` adds caller-supplied initial states to the random ones.
    """
    cfg = cfg or OptimizerConfig()
    p = as_order(p)
    obj = _Objective(m, p)
    psi, rngs = _random_states(cfg, m.d_in)
    extra = [normalize_state(s) for s in starts]
    if extra:
        psi = np.vstack([psi, np.stack(extra)])
        base = len(rngs)
        rngs = rngs + [
            np.random.default_rng(np.random.SeedSequence([cfg.seed, base + i]))
            for i in range(len(extra))
        ]
    psi, F = _ascend(obj, psi, cfg)
    if p.is_inf or p.p == 1.0:
        psi, F = _polish(obj, psi, F, rngs, cfg.polish_iters)
    finite = np.isfinite(F)
    dropped = int(np.count_nonzero(~finite))
    if not finite.any():
        raise RuntimeError("every restart produced a non-finite objective")
    vals = np.where(finite, F, -np.inf)
    best = int(np.argmax(vals))
    # re-evaluate the winner on its own so the value is exactly reproducible
    value = float(obj(psi[best : best + 1], grad=False)[0][0])
    agreeing = int(np.count_nonzero(vals >= value - cfg.agree_tol * max(1.0, value)))
    return NuPEstimate(value, psi[best].copy(), agreeing, F.copy(), dropped)


def output_norm(m: QuantumMap, psi, p) -> float:
    """``||Phi(psi psi*)||_p`` for a single state, by the same path as the optimizer."""
    obj = _Objective(m, as_order(p))
    return float(obj(normalize_state(psi)[None, :], grad=False)[0][0])


@dataclass(frozen=True)
class ProductBound:
    value: float
    first: NuPEstimate
    second: NuPEstimate

    @property
    def argmax(self) -> np.ndarray:
        return np.kron(self.first.argmax, self.second.argmax)


def product_lower_bound(m1: QuantumMap, m2: QuantumMap, p, cfg: OptimizerConfig | None = None) -> ProductBound:
    """``est(m1) * est(m2)``, attained on the product of the two maximizers."""
    cfg = cfg or OptimizerConfig()
    e1 = nu_p_estimate(m1, p, cfg)
    e2 = nu_p_estimate(m2, p, cfg.replace(seed=cfg.seed + 1))
    return ProductBound(e1.value * e2.value, e1, e2)
