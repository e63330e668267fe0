"""POVM representation, constructors, Born-rule evaluation, and file I/O.

A POVM is stored as an (L, d, d) stack of Hermitian effects that are positive
semidefinite and sum to the identity within a validation tolerance. The
unconstrained least-squares output lives in :class:`RawEstimate`, which only
requires hermiticity.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from . import linalg
from ._rng import haar_isometry, make_rng

POVM_TOL = 1e-8
RAW_HERMITICITY_TOL = 1e-9


class PovmValidationError(ValueError):
    """Raised when a candidate fails the positivity or completeness checks."""


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    min_eigenvalue: float
    completeness_residual: float


def _as_element_stack(elements) -> np.ndarray:
    if isinstance(elements, (Povm, RawEstimate)):
        return elements.elements
    arr = np.asarray(elements, dtype=complex)
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise ValueError(f"expected an (L, d, d) stack of effects, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise ValueError("a POVM needs at least one effect")
    return arr


def validate(candidate, tol: float = POVM_TOL) -> ValidationReport:
    """Check positivity and completeness of a POVM candidate.

    ``ok`` iff the smallest eigenvalue over all effects is >= -tol and
    ``||sum_j E_j - I||_F <= tol``. The report is returned either way.
    """
    arr = _as_element_stack(candidate)
    min_eig = min(
        float(np.linalg.eigvalsh(linalg.hermitize(e))[0]) for e in arr
    )
    residual = float(np.linalg.norm(arr.sum(axis=0) - np.eye(arr.shape[1])))
    return ValidationReport(min_eig >= -tol and residual <= tol, min_eig, residual)


class Povm:
    """An L-outcome POVM on C^d: PSD effects summing to the identity.

    Validation runs at construction with tolerance ``tol`` (default 1e-8);
    element arrays are frozen afterwards so values can be shared freely.
    """

    def __init__(self, elements, tol: float = POVM_TOL):
        arr = linalg.hermitize(_as_element_stack(elements)).copy()
        report = validate(arr, tol)
        if not report.ok:
            raise PovmValidationError(
                f"not a valid POVM at tol {tol:.1e}: min eigenvalue "
                f"{report.min_eigenvalue:.3e}, completeness residual "
                f"{report.completeness_residual:.3e}"
            )
        arr.flags.writeable = False
        self.elements = arr
        self.outcomes = arr.shape[0]
        self.dim = arr.shape[1]
        self.tol = tol

    def __repr__(self):
        return f"Povm(dim={self.dim}, outcomes={self.outcomes})"


class RawEstimate:
    """An unconstrained tuple of Hermitian matrices (no positivity required)."""

    def __init__(self, elements, tol: float = RAW_HERMITICITY_TOL):
        arr = _as_element_stack(elements).copy()
        for e in arr:
            dev = float(np.linalg.norm(e - e.conj().T))
            if dev > tol:
                raise ValueError(f"raw element is not Hermitian: deviation {dev:.3e}")
        arr.flags.writeable = False
        self.elements = arr
        self.outcomes = arr.shape[0]
        self.dim = arr.shape[1]

    def __repr__(self):
        return f"RawEstimate(dim={self.dim}, outcomes={self.outcomes})"


def leading_projector(d: int) -> np.ndarray:
    """diag(1, ..., 1, 0, ..., 0) with d/2 ones; d must be even."""
    if d % 2:
        raise ValueError(f"rank-d/2 projector needs even dimension, got d={d}")
    return np.diag(np.concatenate([np.ones(d // 2), np.zeros(d // 2)])).astype(complex)


def computational_povm(d: int) -> Povm:
    """The projective measurement onto the computational basis."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    eye = np.eye(d, dtype=complex)
    return Povm(np.array([np.outer(eye[j], eye[j]) for j in range(d)]))


def rotated_povm(u) -> Povm:
    """Computational-basis measurement conjugated by the unitary ``u``."""
    u = linalg.require_square(u)
    if np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0])) > 1e-10:
        raise ValueError("rotation matrix is not unitary")
    return Povm(np.array([np.outer(u[:, j], u[:, j].conj()) for j in range(u.shape[0])]))


def sic_qubit_povm() -> Povm:
    """The qubit SIC measurement: effects (1/2)|phi_k><phi_k| over the tetrahedron."""
    from .frames import SIC_QUBIT_STATES

    return Povm(np.array([0.5 * np.outer(s, s.conj()) for s in SIC_QUBIT_STATES]))


def depolarized(base: Povm, p: float) -> Povm:
    """Mix each effect with white noise: E_j -> (1-p) E_j + p tr(E_j) I / d."""
    if not 0 <= p <= 1:
        raise ValueError(f"depolarizing strength must lie in [0, 1], got {p}")
    d = base.dim
    eye = np.eye(d)
    elements = np.array(
        [(1 - p) * e + p * np.trace(e).real * eye / d for e in base.elements]
    )
    return Povm(elements)


def random_povm(d: int, n_outcomes: int, seed) -> Povm:
    """Haar-random POVM: partition a random isometry C^d -> C^(dL) into L effects."""
    if n_outcomes < 2:
        raise ValueError("random POVMs need at least 2 outcomes")
    rng = make_rng(seed)
    v = haar_isometry(d * n_outcomes, d, rng)
    blocks = v.reshape(n_outcomes, d, d)
    return Povm(np.einsum("jak,jal->jkl", blocks.conj(), blocks))


def packing_op_povm(u, epsilon: float, n_flat: int, projector=None) -> Povm:
    """Worst-case-distance packing member with n_flat + 2 effects.

    The first ``n_flat`` effects are flat (I/(2L)); the last two are
    ``(1 +- eps)/4 * I -+ (eps/2) U P U^dagger`` with P a rank-d/2 projector.
    """
    u = linalg.require_square(u)
    d = u.shape[0]
    if not 0 <= epsilon <= 0.5:
        raise ValueError(f"epsilon must lie in [0, 1/2], got {epsilon}")
    if n_flat < 1:
        raise ValueError("need at least one flat effect")
    proj = leading_projector(d) if projector is None else linalg.require_square(projector)
    if proj.shape[0] != d:
        raise ValueError("projector dimension mismatch")
    eye = np.eye(d)
    rotated = u @ proj @ u.conj().T
    elements = [eye / (2 * n_flat)] * n_flat
    elements.append((1 + epsilon) / 4 * eye - epsilon / 2 * rotated)
    elements.append((1 - epsilon) / 4 * eye + epsilon / 2 * rotated)
    return Povm(np.array(elements))


def packing_av_povm(unitaries, epsilon: float, projector=None) -> Povm:
    """Average-case-distance packing member: L = 2 * len(unitaries) effects.

    Effect j is ``(1-eps)/L * I + (2 eps/L) U_j P U_j^dagger`` and effect
    j + L/2 is its mirrored partner, so the pair sums cancel exactly.
    """
    unitaries = [linalg.require_square(u) for u in unitaries]
    if not unitaries:
        raise ValueError("need at least one unitary")
    d = unitaries[0].shape[0]
    if not 0 <= epsilon <= 0.5:
        raise ValueError(f"epsilon must lie in [0, 1/2], got {epsilon}")
    proj = leading_projector(d) if projector is None else linalg.require_square(projector)
    n_outcomes = 2 * len(unitaries)
    eye = np.eye(d)
    plus, minus = [], []
    for u in unitaries:
        rotated = u @ proj @ u.conj().T
        plus.append((1 - epsilon) / n_outcomes * eye + 2 * epsilon / n_outcomes * rotated)
        minus.append((1 + epsilon) / n_outcomes * eye - 2 * epsilon / n_outcomes * rotated)
    return Povm(np.array(plus + minus))


def build_povm(spec: dict) -> Povm:
    """Build a POVM from a serializable spec dict (see the CLI config schema)."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError("povm spec must be a dict with a 'kind' key")
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind == "computational":
        povm = computational_povm(int(spec.pop("dim")))
    elif kind == "rotated":
        povm = rotated_povm(_matrix_from_pairs(spec.pop("unitary")))
    elif kind == "sic_qubit":
        povm = sic_qubit_povm()
    elif kind == "depolarized":
        povm = depolarized(build_povm(spec.pop("base")), float(spec.pop("p")))
    elif kind == "random":
        povm = random_povm(int(spec.pop("dim")), int(spec.pop("outcomes")), int(spec.pop("seed")))
    elif kind == "packing_op":
        povm = packing_op_povm(
            _matrix_from_pairs(spec.pop("unitary")),
            float(spec.pop("epsilon")),
            int(spec.pop("flat_outcomes")),
        )
    elif kind == "packing_av":
        povm = packing_av_povm(
            [_matrix_from_pairs(u) for u in spec.pop("unitaries")],
            float(spec.pop("epsilon")),
        )
    else:
        raise ValueError(f"unknown povm kind {kind!r}")
    if spec:
        raise ValueError(f"unknown povm spec keys: {sorted(spec)}")
    return povm


def born(povm: Povm, state) -> np.ndarray:
    """Born-rule outcome probabilities tr(E_j rho), clipped and renormalized.

    ``state`` is a unit vector or a density matrix (trace 1). Tiny negative
    values from validation slack are clipped to zero and the vector is
    renormalized exactly so it can feed a sampler directly.
    """
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        if abs(np.linalg.norm(state) - 1.0) > 1e-6:
            raise ValueError("state vector is not normalized")
        probs = np.einsum("k,jkl,l->j", state.conj(), povm.elements, state).real
    elif state.ndim == 2:
        linalg.require_hermitian(state, 1e-6)
        if abs(np.trace(state).real - 1.0) > 1e-6:
            raise ValueError("density matrix does not have unit trace")
        probs = np.einsum("jkl,lk->j", povm.elements, state).real
    else:
        raise ValueError("state must be a vector or a density matrix")
    total = probs.sum()
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"probabilities sum to {total}, state or POVM invalid")
    probs = np.clip(probs, 0.0, 1.0)
    return probs / probs.sum()


def coarse_grain(povm_or_raw, subset) -> np.ndarray:
    """Sum of the effects with (0-based) indices in ``subset``."""
    arr = _as_element_stack(povm_or_raw)
    indices = sorted(set(int(k) for k in subset))
    if indices and not (0 <= indices[0] and indices[-1] < arr.shape[0]):
        raise IndexError(f"outcome indices out of range [0, {arr.shape[0]})")
    out = np.zeros((arr.shape[1], arr.shape[1]), dtype=complex)
    for k in indices:
        out += arr[k]
    return out


def pauli_strings(n_qubits: int) -> tuple[list[str], np.ndarray]:
    """Normalized Pauli strings on n qubits, lexicographic in {I, X, Y, Z}^n.

    Returns labels and a (4^n, d, d) stack with each string scaled by
    1/sqrt(d), so the stack is orthonormal under the Hilbert-Schmidt inner
    product.
    """
    single = {
        "I": np.eye(2, dtype=complex),
        "X": np.array([[0, 1], [1, 0]], dtype=complex),
        "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
        "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    }
    d = 2**n_qubits
    labels, mats = [], []
    for combo in itertools.product("IXYZ", repeat=n_qubits):
        label = "".join(combo)
        m = np.array([[1.0 + 0j]])
        for c in combo:
            m = np.kron(m, single[c])
        labels.append(label)
        mats.append(m / np.sqrt(d))
    return labels, np.array(mats)


def measurement_channel(ideal: Povm, estimated: Povm) -> np.ndarray:
    """Transfer matrix of sum_j |E_j)(E*_j| in the normalized Pauli basis.

    Entry (a, b) is ``sum_j tr(sigma_a E_j) tr(sigma_b E*_j)`` with sigma the
    orthonormal Pauli strings; rows index the ideal POVM, columns the
    estimate. Requires a qubit register (d = 2^n) and matching shapes.
    """
    if ideal.dim != estimated.dim or ideal.outcomes != estimated.outcomes:
        raise ValueError("measurement_channel needs POVMs of identical shape")
    n_qubits = int(round(np.log2(ideal.dim)))
    if 2**n_qubits != ideal.dim:
        raise ValueError("the Pauli transfer representation needs d = 2^n")
    _, sigma = pauli_strings(n_qubits)
    left = np.einsum("akl,jlk->ja", sigma, ideal.elements).real
    right = np.einsum("bkl,jlk->jb", sigma, estimated.elements).real
    return left.T @ right


def save_povm(povm, path) -> None:
    """Write a POVM (or raw estimate) as JSON with exact float round-trip."""
    arr = _as_element_stack(povm)
    doc = {
        "dim": int(arr.shape[1]),
        "outcomes": int(arr.shape[0]),
        "elements": [
            [[[float(x.real), float(x.imag)] for x in row] for row in e] for e in arr
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_povm_file(path) -> np.ndarray:
    """Read the element stack from a POVM file without validating it."""
    with open(path) as fh:
        doc = json.load(fh)
    arr = _matrix_stack_from_pairs(doc["elements"])
    if arr.shape != (doc["outcomes"], doc["dim"], doc["dim"]):
        raise ValueError(f"POVM file is inconsistent: {arr.shape} vs header")
    return arr


def load_povm(path, tol: float = POVM_TOL) -> Povm:
    """Read a POVM file written by :func:`save_povm` and validate it."""
    return Povm(read_povm_file(path), tol=tol)


def _matrix_from_pairs(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ValueError("expected a matrix of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def _matrix_stack_from_pairs(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 4 or arr.shape[3] != 2:
        raise ValueError("expected a stack of matrices of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]
