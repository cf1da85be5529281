"""Numerical checks of the 2x2 block Schatten-norm inequality

    || [[A, B], [C, D]] ||_p  <=  || [[|A|_p, |B|_p], [|C|_p, |D|_p]] ||_p

which holds for p = 2 (with equality) and p >= 4, together with the chain of
intermediate bounds used to establish it, and randomized sweeps over p.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .matcore import (
    Block2x2,
    MatrixError,
    NormOrder,
    as_matrix,
    as_order,
    block_assemble,
    block_extract,
    norm_from_singular,
    random_complex,
    schatten_norm,
    singular_values,
)
from .serial import matrix_from_json, matrix_to_json, order_to_json

VIOLATION_TOL = 1e-9

Sampler = Callable[[np.random.Generator], Block2x2]


@dataclass(frozen=True)
class IneqReport:
    p: NormOrder
    lhs: float
    rhs: float
    slack: float
    holds: bool

    def to_dict(self) -> dict:
        return {"p": order_to_json(self.p), "lhs": self.lhs, "rhs": self.rhs,
                "slack": self.slack, "holds": self.holds}


def _report(p: NormOrder, lhs: float, rhs: float, tol: float) -> IneqReport:
    slack = rhs - lhs
    return IneqReport(p, float(lhs), float(rhs), float(slack), bool(slack >= -tol))


def singular_values_2x2(n) -> np.ndarray:
    """Closed-form singular values of a 2x2 matrix, descending."""
    n = np.asarray(n, dtype=complex)
    fro2 = float(np.sum(np.abs(n) ** 2))
    det = abs(n[0, 0] * n[1, 1] - n[0, 1] * n[1, 0])
    plus = math.sqrt(max(0.0, fro2 + 2 * det))
    minus = math.sqrt(max(0.0, fro2 - 2 * det))
    return np.array([(plus + minus) / 2, (plus - minus) / 2])


def norm_2x2(n, p) -> float:
    return norm_from_singular(singular_values_2x2(n), p)


def norm_matrix(b: Block2x2, p) -> np.ndarray:
    """The real 2x2 matrix of blockwise Schatten norms."""
    p = as_order(p)
    return np.array([[schatten_norm(b.a, p), schatten_norm(b.b, p)],
                     [schatten_norm(b.c, p), schatten_norm(b.d, p)]])


def _in_proven_range(p: NormOrder) -> bool:
    return p.p == 2.0 or p.p >= 4.0


class Theorem2Instance:
    """Singular values of a block matrix and of its blocks, reusable across p."""

    def __init__(self, b: Block2x2):
        self.blocks = b
        self.full = singular_values(block_assemble(b))
        self.parts = [singular_values(x) for x in b.blocks()]

    def report(self, p, tol: float = VIOLATION_TOL) -> IneqReport:
        p = as_order(p)
        lhs = norm_from_singular(self.full, p)
        n = np.array([norm_from_singular(s, p) for s in self.parts]).reshape(2, 2)
        return _report(p, lhs, norm_2x2(n, p), tol)


def theorem2_check(b: Block2x2, p, tol: float = VIOLATION_TOL, mode: str = "assert") -> IneqReport:
    """Compare both sides of the block inequality.

    ``mode="assert"`` only accepts p = 2 or p >= 4 (where the inequality is
    a theorem); ``mode="explore"`` accepts any p >= 1.  Violations come back
    as ``holds=False``; nothing is raised for them.
    """
    p = as_order(p)
    if mode == "assert" and not _in_proven_range(p):
        raise ValueError(f"assertion mode needs p = 2 or p >= 4, got p={p}")
    if mode not in {"assert", "explore"}:
        raise ValueError(f"unknown mode {mode!r}")
    return Theorem2Instance(b).report(p, tol)


def psd_block_check(P, q, tol: float = VIOLATION_TOL) -> IneqReport:
    """``||P||_q <= ||norm_matrix(P)||_q`` for a positive semidefinite block matrix, q >= 2."""
    q = as_order(q)
    if q.p < 2:
        raise ValueError(f"q must be >= 2, got {q}")
    P = as_matrix(P, square=True)
    herm = (P + P.conj().T) / 2
    if np.max(np.abs(P - herm)) > 1e-9 * max(1.0, np.max(np.abs(P))):
        raise MatrixError("matrix is not Hermitian")
    if np.linalg.eigvalsh(herm)[0] < -1e-9:
        raise MatrixError("matrix is not positive semidefinite")
    b = block_extract(P)
    return _report(q, schatten_norm(P, q), norm_2x2(norm_matrix(b, q), q), tol)


@dataclass(frozen=True)
class ChainStep:
    name: str
    lhs: float
    rhs: float
    slack: float
    holds: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _step(name: str, lhs: float, rhs: float, tol: float) -> ChainStep:
    slack = rhs - lhs
    return ChainStep(name, float(lhs), float(rhs), float(slack), bool(slack >= -tol))


def proof_chain_thm2(b: Block2x2, p, tol: float = VIOLATION_TOL) -> list[ChainStep]:
    """Check each intermediate bound leading from ``M*M`` to the block inequality.

    With ``q = p/2`` and ``M = [[A, B], [C, D]]``:

    1. ``q-bound``: ``||M*M||_q <= ||N||_q``, N the q-norm matrix of the blocks of M*M
    2. ``m11``: ``||A*A + C*C||_q <= |A|_p^2 + |C|_p^2``
    3. ``m12``: ``||A*B + C*D||_q <= |A|_p |B|_p + |C|_p |D|_p``
    4. ``m22``: ``||B*B + D*D||_q <= |B|_p^2 + |D|_p^2``
    5. ``monotone``: ``||N||_q <= ||m*m||_q`` with m the p-norm matrix of M
    6. ``final``: ``||M||_p <= ||m||_p``
    """
    p = as_order(p)
    if p.p < 4:
        raise ValueError(f"the chain is stated for p >= 4, got p={p}")
    q = p.half()
    mm = block_assemble(b)
    gram = mm.conj().T @ mm
    gb = block_extract(gram, b.dim)
    nq = norm_matrix(gb, q)
    a, bb, c, d = (schatten_norm(x, p) for x in b.blocks())
    m = np.array([[a, bb], [c, d]])
    mtm = m.T @ m
    return [
        _step("q-bound", schatten_norm(gram, q), norm_2x2(nq, q), tol),
        _step("m11", nq[0, 0], a * a + c * c, tol),
        _step("m12", max(nq[0, 1], nq[1, 0]), a * bb + c * d, tol),
        _step("m22", nq[1, 1], bb * bb + d * d, tol),
        _step("monotone", norm_2x2(nq, q), norm_2x2(mtm, q), tol),
        _step("final", schatten_norm(mm, p), norm_2x2(m, p), tol),
    ]


# ---------------------------------------------------------------------------
# Samplers


def gaussian_sampler(dims: tuple[int, int] = (1, 8)) -> Sampler:
    lo, hi = dims

    def sample(rng: np.random.Generator) -> Block2x2:
        d = int(rng.integers(lo, hi + 1))
        return Block2x2(*(random_complex((d, d), rng) for _ in range(4)))

    sample.__name__ = "gaussian"
    return sample


def psd_sampler(dims: tuple[int, int] = (1, 8)) -> Sampler:
    """Blocks of a Gram matrix ``G*G`` of random rank."""
    lo, hi = dims

    def sample(rng: np.random.Generator) -> Block2x2:
        d = int(rng.integers(lo, hi + 1))
        k = int(rng.integers(1, 2 * d + 1))
        g = random_complex((k, 2 * d), rng)
        return block_extract(g.conj().T @ g, d)

    sample.__name__ = "psd"
    return sample


def mixed_sampler(samplers: Sequence[Sampler]) -> Sampler:
    def sample(rng: np.random.Generator) -> Block2x2:
        return samplers[int(rng.integers(len(samplers)))](rng)

    sample.__name__ = "mixed"
    return sample


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, trial]))


# ---------------------------------------------------------------------------
# Sweeps and counterexample records


def blocks_to_json(b: Block2x2) -> dict:
    return {k: matrix_to_json(getattr(b, k)) for k in "abcd"}


def blocks_from_json(data: dict) -> Block2x2:
    return Block2x2(*(matrix_from_json(data[k]) for k in "abcd"))


def violation_record(b: Block2x2, rep: IneqReport, seed: int, trial: int, shrunk_t: float | None = None) -> dict:
    rec = {"seed": seed, "trial": trial, "p": order_to_json(rep.p), "lhs": rep.lhs,
           "rhs": rep.rhs, "slack": rep.slack, "blocks": blocks_to_json(b)}
    if shrunk_t is not None:
        rec["offdiag_scale"] = shrunk_t
    return rec


def replay(record: dict, tol: float = VIOLATION_TOL) -> IneqReport:
    return theorem2_check(blocks_from_json(record["blocks"]), record["p"], tol, mode="explore")


def shrink_violation(b: Block2x2, p, tol: float = VIOLATION_TOL, iters: int = 60) -> tuple[Block2x2, float]:
    """Scale the off-diagonal blocks toward zero while the violation persists.

    At scale 0 the instance is block diagonal, where both sides agree, so
    bisection finds the smallest scale that still violates by more than
    ``tol``.
    """
    p = as_order(p)

    def scaled(t):
        return Block2x2(b.a, t * b.b, t * b.c, b.d)

    if theorem2_check(b, p, tol, mode="explore").holds:
        return b, 1.0
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if theorem2_check(scaled(mid), p, tol, mode="explore").holds:
            lo = mid
        else:
            hi = mid
    return scaled(hi), hi


@dataclass
class PStats:
    p: NormOrder
    trials: int = 0
    direct_violations: int = 0
    reverse_violations: int = 0
    min_slack: float = math.inf
    max_slack: float = -math.inf
    worst: dict | None = None
    reverse_worst: dict | None = None

    def to_dict(self) -> dict:
        return {
            "p": order_to_json(self.p), "trials": self.trials,
            "direct_violations": self.direct_violations,
            "reverse_violations": self.reverse_violations,
            "min_slack": self.min_slack, "max_slack": self.max_slack,
            "worst": self.worst, "reverse_worst": self.reverse_worst,
        }


def p_sweep(sampler: Sampler, p_grid: Iterable, trials: int, seed: int,
            tol: float = VIOLATION_TOL, shrink: bool = True) -> list[PStats]:
    """Violation statistics of the block inequality over a grid of p.

    A direct violation is ``slack < -tol``.  A reverse violation, counted
    only for ``p <= 2`` where the reverse inequality is expected, is
    ``slack > tol``.  Nothing is asserted; trial ``t`` can be replayed from
    ``trial_rng(seed, t)``.
    """
    grid = [as_order(p) for p in p_grid]
    stats = [PStats(p) for p in grid]
    for t in range(trials):
        b = sampler(trial_rng(seed, t))
        inst = Theorem2Instance(b)
        for st in stats:
            rep = inst.report(st.p, tol)
            st.trials += 1
            st.min_slack = min(st.min_slack, rep.slack)
            st.max_slack = max(st.max_slack, rep.slack)
            if rep.slack < -tol:
                st.direct_violations += 1
                if st.worst is None or rep.slack < st.worst["slack"]:
                    sb, scale = shrink_violation(b, st.p, tol) if shrink else (b, None)
                    st.worst = violation_record(b, rep, seed, t)
                    if shrink:
                        st.worst["shrunk"] = violation_record(sb, theorem2_check(sb, st.p, tol, "explore"), seed, t, scale)
            if st.p.p <= 2.0 and rep.slack > tol:
                st.reverse_violations += 1
                if st.reverse_worst is None or rep.slack > st.reverse_worst["slack"]:
                    st.reverse_worst = violation_record(b, rep, seed, t)
    return stats
