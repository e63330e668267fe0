"""Desk-scale verification of the packing constructions and Haar moments.

Builds small families of packing POVMs around Haar-random unitaries and a
fixed rank-d/2 projector, certifies their pairwise separation against the
distance module, and Monte-Carlo-checks the projector-difference moments
``E f^2 = d/2`` and ``E f^4 = d^4 / (4(d^2 - 1))`` that the separation
arguments rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import haar_isometry, make_rng
from .distances import d_av, d_op_exact
from .povm import Povm, leading_projector, packing_av_povm, packing_op_povm

REDRAW_FACTOR = 10  # budget: REDRAW_FACTOR * n_members candidate draws
TRACE_NORM_THRESHOLD = 0.25  # acceptance rule: (1/d) || UPU+ - VPV+ ||_1 >= 1/4


class PackingBudgetError(RuntimeError):
    """Raised when the rejection rule exhausts its redraw budget."""


@dataclass(frozen=True)
class PackingFamily:
    kind: str  # "op" | "av"
    dim: int
    epsilon: float
    projector_rank: int
    unitaries: tuple
    members: tuple
    n_draws: int
    n_rejected: int


@dataclass(frozen=True)
class SeparationReport:
    min_pairwise: float
    threshold: float
    ok: bool


@dataclass(frozen=True)
class MomentReport:
    f2_mean: float
    f2_target: float
    f2_z: float
    f4_mean: float
    f4_target: float
    f4_z: float


def haar_unitary(d: int, seed) -> np.ndarray:
    """Haar-random d x d unitary (QR of a complex Gaussian, phases fixed)."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    return haar_isometry(d, d, make_rng(seed))


def _trace_norm(a: np.ndarray) -> float:
    return float(np.sum(np.abs(np.linalg.eigvalsh((a + a.conj().T) / 2))))


def build_packing(
    kind: str,
    d: int,
    n_outcomes: int,
    epsilon: float,
    n_members: int,
    seed,
) -> PackingFamily:
    """Assemble a family of packing POVMs from Haar-random unitaries.

    ``op`` families carry one unitary per member and ``n_outcomes`` flat
    effects (members have n_outcomes + 2 effects in total); a candidate is
    redrawn unless its rotated projector is at least 1/4 away in normalized
    trace norm from every accepted member, which certifies the pairwise
    worst-case separation epsilon/8. ``av`` families carry n_outcomes/2
    unitaries per member and have exactly ``n_outcomes`` effects; their
    separation is probabilistic, not enforced.
    """
    if kind not in ("op", "av"):
        raise ValueError("kind must be 'op' or 'av'")
    if d % 2:
        raise ValueError(f"packing families need even dimension, got d={d}")
    if not 0 < epsilon <= 0.5:
        raise ValueError(f"epsilon must lie in (0, 1/2], got {epsilon}")
    if n_members < 1:
        raise ValueError("n_members must be >= 1")
    if kind == "av" and n_outcomes % 2:
        raise ValueError("av families need an even outcome count")
    rng = make_rng(seed)
    projector = leading_projector(d)
    budget = REDRAW_FACTOR * n_members

    unitaries: list = []
    members: list[Povm] = []
    n_draws = 0
    n_rejected = 0
    if kind == "op":
        rotated: list[np.ndarray] = []
        while len(members) < n_members:
            if n_draws >= budget:
                raise PackingBudgetError(
                    f"could not assemble {n_members} members within {budget} draws; "
                    "parameters too tight for desk scale"
                )
            n_draws += 1
            u = haar_isometry(d, d, rng)
            candidate = u @ projector @ u.conj().T
            if any(
                _trace_norm(candidate - other) / d < TRACE_NORM_THRESHOLD
                for other in rotated
            ):
                n_rejected += 1
                continue
            rotated.append(candidate)
            unitaries.append(u)
            members.append(packing_op_povm(u, epsilon, n_outcomes, projector))
    else:
        for _ in range(n_members):
            n_draws += 1
            us = tuple(haar_isometry(d, d, rng) for _ in range(n_outcomes // 2))
            unitaries.append(us)
            members.append(packing_av_povm(us, epsilon, projector))
    return PackingFamily(
        kind, d, float(epsilon), d // 2, tuple(unitaries), tuple(members), n_draws, n_rejected
    )


def verify_separation(family: PackingFamily) -> SeparationReport:
    """Minimum pairwise distance of the family against its target threshold.

    ``op`` families compare worst-case distances to epsilon/8; ``av``
    families compare sqrt(d) * average-case distances to epsilon/4.
    """
    if len(family.members) < 2:
        raise ValueError("separation needs at least two members")
    min_pairwise = np.inf
    for a in range(len(family.members)):
        for b in range(a + 1, len(family.members)):
            if family.kind == "op":
                value = d_op_exact(family.members[a], family.members[b]).value
            else:
                value = np.sqrt(family.dim) * d_av(family.members[a], family.members[b]).value
            min_pairwise = min(min_pairwise, value)
    threshold = family.epsilon / 8 if family.kind == "op" else family.epsilon / 4
    return SeparationReport(float(min_pairwise), float(threshold), bool(min_pairwise >= threshold))


def haar_moment_check(d: int, trials: int, seed) -> MomentReport:
    """Monte Carlo check of the rotated-projector difference moments.

    Samples Haar pairs (U, V), computes ``f = ||U P U^+ - V P V^+||_F`` for
    the rank-d/2 projector P, and compares the empirical means of f^2 and f^4
    against d/2 and d^4/(4(d^2-1)) via z-scores on the Monte Carlo standard
    errors.
    """
    if d % 2:
        raise ValueError("the moment targets assume a rank-d/2 projector (even d)")
    if trials < 100:
        raise ValueError("need at least 100 trials")
    rng = make_rng(seed)
    projector = leading_projector(d)
    f2 = np.empty(trials)
    for t in range(trials):
        u = haar_isometry(d, d, rng)
        v = haar_isometry(d, d, rng)
        diff = u @ projector @ u.conj().T - v @ projector @ v.conj().T
        f2[t] = np.linalg.norm(diff) ** 2
    f4 = f2**2
    f2_target = d / 2
    f4_target = d**4 / (4 * (d**2 - 1))
    f2_se = float(np.std(f2, ddof=1) / np.sqrt(trials))
    f4_se = float(np.std(f4, ddof=1) / np.sqrt(trials))
    return MomentReport(
        float(np.mean(f2)),
        float(f2_target),
        float((np.mean(f2) - f2_target) / f2_se),
        float(np.mean(f4)),
        float(f4_target),
        float((np.mean(f4) - f4_target) / f4_se),
    )
