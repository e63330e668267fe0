"""Shot simulation, closed-form least-squares estimation, and projection.

The reconstruction pipeline is:

1. :func:`simulate_shots` draws probe states uniformly and samples outcomes
   through the Born rule, producing a sparse :class:`FrequencyTable`;
2. :func:`lse_estimate` applies the dual-frame inversion
   ``E_hat_j = sum_i f_ij nu_i`` (exact on expectation values);
3. :func:`project_onto_povms` returns the nearest physical POVM under the
   chosen metric via Dykstra's alternating projections.

Sample-size calculators and the concentration diagnostics that power them
live here as well.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from ._rng import make_rng
from .frames import ProbeEnsemble, frame_operator
from .povm import Povm, RawEstimate, born, coarse_grain

ENUMERATION_CAP = 100_000  # largest ensemble we fully enumerate

PROJECTION_METRICS = ("frobenius", "dav")


class FrequencyTable:
    """Sparse outcome counts from N shots over an M-state ensemble.

    ``counts`` maps (state_index, outcome_index) to a positive integer; cells
    never observed are absent. Relative frequencies are counts divided by the
    total shot number N, so the whole table sums to one and each cell is an
    unbiased estimate of ``<psi_i|E_j|psi_i> / M``.
    """

    def __init__(self, n_states: int, n_outcomes: int, n_shots: int, counts: dict):
        if n_shots < 1:
            raise ValueError("n_shots must be >= 1")
        total = 0
        clean = {}
        for (i, j), c in counts.items():
            i, j, c = int(i), int(j), int(c)
            if not (0 <= i < n_states and 0 <= j < n_outcomes):
                raise ValueError(f"cell ({i}, {j}) outside {n_states} x {n_outcomes}")
            if c < 0:
                raise ValueError("counts must be nonnegative")
            if c:
                clean[(i, j)] = c
                total += c
        if total != n_shots:
            raise ValueError(f"counts sum to {total}, expected n_shots = {n_shots}")
        self.n_states = n_states
        self.n_outcomes = n_outcomes
        self.n_shots = n_shots
        self.counts = clean

    def frequencies(self) -> dict:
        """Relative frequencies counts/N (sums to 1 over the whole table)."""
        n = self.n_shots
        return {cell: c / n for cell, c in self.counts.items()}

    def dense_counts(self) -> np.ndarray:
        """Counts as a dense (M, L) array; only for enumerable ensembles."""
        if self.n_states * self.n_outcomes > ENUMERATION_CAP:
            raise ValueError("table too large to densify")
        out = np.zeros((self.n_states, self.n_outcomes), dtype=np.int64)
        for (i, j), c in self.counts.items():
            out[i, j] = c
        return out

    def __repr__(self):
        return (
            f"FrequencyTable(M={self.n_states}, L={self.n_outcomes}, "
            f"N={self.n_shots}, cells={len(self.counts)})"
        )


def simulate_shots(povm: Povm, ensemble: ProbeEnsemble, n_shots: int, seed) -> FrequencyTable:
    """Sample N shots: a uniform probe state, then a Born-rule outcome.

    Deterministic given ``seed`` (Philox stream); shots landing on the same
    probe state are drawn as one multinomial, which is distributionally
    identical to per-shot sampling and never materializes product ensembles.
    """
    if povm.dim != ensemble.dim:
        raise ValueError(f"POVM dim {povm.dim} != ensemble dim {ensemble.dim}")
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    rng = make_rng(seed)
    indices = rng.integers(0, ensemble.size, size=n_shots)
    unique, per_state = np.unique(indices, return_counts=True)
    counts = {}
    for i, c in zip(unique, per_state):
        probs = born(povm, ensemble.state(int(i)))
        drawn = rng.multinomial(int(c), probs)
        for j, cj in enumerate(drawn):
            if cj:
                counts[(int(i), j)] = int(cj)
    return FrequencyTable(ensemble.size, povm.outcomes, n_shots, counts)


def exact_frequencies(povm: Povm, ensemble: ProbeEnsemble) -> dict:
    """Expected frequencies ``<psi_i|E_j|psi_i> / M`` for every cell.

    Substituting these for measured frequencies makes the least-squares
    estimator reproduce the POVM exactly. Requires an enumerable ensemble.
    """
    if povm.dim != ensemble.dim:
        raise ValueError("dimension mismatch")
    m = ensemble.size
    if m * povm.outcomes > ENUMERATION_CAP:
        raise ValueError(f"ensemble too large to enumerate ({m} states)")
    freqs = {}
    for i in range(m):
        probs = born(povm, ensemble.state(i))
        for j, p in enumerate(probs):
            if p:
                freqs[(i, j)] = p / m
    return freqs


def lse_estimate(frequencies, ensemble: ProbeEnsemble, n_outcomes: int | None = None) -> RawEstimate:
    """Closed-form least-squares estimator ``E_hat_j = sum_i f_ij nu_i``.

    ``frequencies`` is a :class:`FrequencyTable` or a sparse mapping
    ``(state_index, outcome_index) -> frequency`` (pass ``n_outcomes`` if the
    largest outcome index may be unobserved). Only observed cells are
    touched; each dual frame operator is built once per observed state.
    """
    if isinstance(frequencies, FrequencyTable):
        if frequencies.n_states != ensemble.size:
            raise ValueError(
                f"table has {frequencies.n_states} states, ensemble has {ensemble.size}"
            )
        n_outcomes = frequencies.n_outcomes
        cells = frequencies.frequencies()
    else:
        cells = dict(frequencies)
        if n_outcomes is None:
            n_outcomes = max(j for _, j in cells) + 1
    d = ensemble.dim
    by_state: dict[int, list] = {}
    for (i, j), f in cells.items():
        by_state.setdefault(int(i), []).append((int(j), float(f)))
    elements = np.zeros((n_outcomes, d, d), dtype=complex)
    for i, row in by_state.items():
        nu = frame_operator(ensemble, i)
        for j, f in row:
            elements[j] += f * nu
    return RawEstimate(linalg.hermitize(elements))


@dataclass(frozen=True)
class ProjectionOptions:
    metric: str = "frobenius"  # "frobenius" | "dav"
    tol_feasibility: float = 1e-9
    tol_step: float = 1e-10
    max_iterations: int = 10000

    def __post_init__(self):
        if self.metric not in PROJECTION_METRICS:
            raise ValueError(f"metric must be one of {PROJECTION_METRICS}")
        if self.tol_feasibility <= 0 or self.tol_step <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class ProjectionDiagnostics:
    iterations: int
    final_residual: float
    converged: bool


def _psd_step_frobenius(w: np.ndarray) -> np.ndarray:
    return np.maximum(w, 0.0)


def _psd_step_dav(w: np.ndarray) -> np.ndarray:
    # minimize sum_k (z_k - w_k)^2 + (sum_k (z_k - w_k))^2 over z >= 0.
    # The solution keeps a top segment of the sorted eigenvalues shifted by a
    # common offset s and zeroes the rest; scan all segment sizes and keep the
    # feasible candidate with the smallest objective.
    order = np.argsort(w)[::-1]
    ws = w[order]
    d = len(ws)
    suffix = np.concatenate([np.cumsum(ws[::-1])[::-1], [0.0]])  # suffix[m] = sum ws[m:]
    best, best_obj = None, np.inf
    for m in range(d + 1):
        s = -suffix[m] / (1 + m)
        z = np.zeros(d)
        z[:m] = ws[:m] - s
        if m and z[m - 1] < -1e-12:
            continue
        z = np.maximum(z, 0.0)
        diff = z - ws
        obj = diff @ diff + diff.sum() ** 2
        if obj < best_obj:
            best, best_obj = z, obj
    out = np.empty(d)
    out[order] = best
    return out


def project_onto_povms(raw, options: ProjectionOptions | None = None):
    """Metric projection of a raw estimate onto the set of physical POVMs.

    Runs Dykstra's algorithm (correction-variable form) between the product
    of PSD cones and the affine set {sum_j Z_j = I, Z_j Hermitian}. With the
    ``frobenius`` metric this minimizes ``sum_j ||raw_j - Z_j||_F^2``; with
    ``dav`` it minimizes ``sum_j (||raw_j - Z_j||_F^2 + tr(raw_j - Z_j)^2)``,
    whose PSD-cone step solves a coupled eigenvalue clip. The affine-step
    projection coincides for both metrics.

    Returns ``(Povm, ProjectionDiagnostics)``; if the iteration cap is hit
    the best iterate is returned flagged as non-converged.
    """
    opts = options or ProjectionOptions()
    if isinstance(raw, Povm):
        arr = raw.elements.copy()
    elif isinstance(raw, RawEstimate):
        arr = raw.elements.copy()
    else:
        arr = RawEstimate(raw).elements.copy()
    n_outcomes, d, _ = arr.shape
    clip = _psd_step_frobenius if opts.metric == "frobenius" else _psd_step_dav
    eye = np.eye(d)

    x = arr
    p_corr = np.zeros_like(arr)
    q_corr = np.zeros_like(arr)
    psd_iterate = x
    iterations = 0
    converged = False
    while iterations < opts.max_iterations:
        iterations += 1
        # PSD cones with correction
        w_in = x + p_corr
        psd_iterate = np.empty_like(w_in)
        for j in range(n_outcomes):
            eigenvalues, eigenvectors = np.linalg.eigh(linalg.hermitize(w_in[j]))
            clipped = clip(eigenvalues)
            psd_iterate[j] = (eigenvectors * clipped) @ eigenvectors.conj().T
        p_corr = w_in - psd_iterate
        # affine set with correction
        w_in = psd_iterate + q_corr
        w_in = linalg.hermitize(w_in)
        x_next = w_in - (w_in.sum(axis=0) - eye) / n_outcomes
        q_corr = psd_iterate + q_corr - x_next
        step = float(np.sqrt(np.sum(np.abs(x_next - x) ** 2)))
        x = x_next
        residual = float(np.linalg.norm(psd_iterate.sum(axis=0) - eye))
        if step <= opts.tol_step and residual <= opts.tol_feasibility:
            converged = True
            break
    residual = float(np.linalg.norm(psd_iterate.sum(axis=0) - eye))
    diagnostics = ProjectionDiagnostics(iterations, residual, converged)
    tol = 1e-6 if converged else max(1e-6, 10 * residual)
    return Povm(linalg.hermitize(psd_iterate), tol=tol), diagnostics


def sample_size(
    d: int,
    n_outcomes: int,
    epsilon: float,
    delta: float,
    frame: str = "global",
    distance: str = "op",
    variant: str = "theorem",
    n_qubits: int | None = None,
) -> int:
    """Shots guaranteeing reconstruction error <= epsilon with confidence 1 - delta.

    Evaluates the closed-form bound for the requested frame kind (``global``
    2-design or ``local`` product of single-qubit 2-designs, which requires
    ``n_qubits``), distance (``op`` worst case, ``av`` average case), and for
    the global average-case bound the ``theorem`` or ``proof`` constant. The
    returned integer is one above the ceiling of the bound, so it strictly
    exceeds the real-valued threshold even when that threshold is integral.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if frame not in ("global", "local"):
        raise ValueError("frame must be 'global' or 'local'")
    if distance not in ("op", "av"):
        raise ValueError("distance must be 'op' or 'av'")
    if variant not in ("theorem", "proof"):
        raise ValueError("variant must be 'theorem' or 'proof'")
    if variant == "proof" and not (frame == "global" and distance == "av"):
        raise ValueError("the 'proof' constant is only defined for the global av bound")
    L = n_outcomes
    if frame == "local":
        if n_qubits is None or 2**n_qubits != d:
            raise ValueError("local frames need n_qubits with d = 2**n_qubits")
        n = n_qubits
        if distance == "op":
            value = (
                8 * (10**n + 4**n * epsilon / 6) / epsilon**2
                * math.log(2 ** (L + 1) * 2**n / delta)
            )
        else:
            value = (
                8 * L**2 * (5**n + 2**n * epsilon / 6) / epsilon**2
                * math.log(4 * L * 2**n / delta)
            )
    else:
        if distance == "op":
            value = (
                8 * (d**3 + d**2 * (1 + epsilon / 6)) / epsilon**2
                * math.log(2 ** (L + 1) * d / delta)
            )
        elif variant == "theorem":
            value = (
                8 * L**2 * (d**2 + d * (1 + epsilon / (3 * L))) / epsilon**2
                * math.log(4 * L * d / delta)
            )
        else:
            value = (
                8 * L**2 * (d**2 + d * (1 + math.sqrt(d) * epsilon / (6 * L))) / epsilon**2
                * math.log(4 * L * d / delta)
            )
    return math.ceil(value) + 1


@dataclass(frozen=True)
class BernsteinReport:
    k_emp: float
    k_bound: float
    sigma2_emp: float
    sigma2_bound: float


def bernstein_diagnostics(povm: Povm, ensemble: ProbeEnsemble, subset) -> BernsteinReport:
    """Empirical matrix-concentration parameters for an outcome grouping.

    ``k_emp`` is the largest dual-frame operator norm; ``sigma2_emp`` is
    ``||sum_i p_i nu_i^2 - F^2||`` with ``p_i = <psi_i|F|psi_i>/M`` and F the
    coarse-grained effect. Both are reported shot-free (multiply by 1/N for
    the per-shot quantities) and are certified not to exceed the closed-form
    bounds d^2 and d^3 + d^2 (global) or 4^n and 10^n (local).
    """
    if povm.dim != ensemble.dim:
        raise ValueError("dimension mismatch")
    m = ensemble.size
    if m > ENUMERATION_CAP:
        raise ValueError("ensemble too large to enumerate for diagnostics")
    effect = coarse_grain(povm, subset)
    k_emp = 0.0
    second_moment = np.zeros_like(effect)
    for i in range(m):
        nu = frame_operator(ensemble, i)
        psi = ensemble.state(i)
        p_i = float((psi.conj() @ effect @ psi).real) / m
        k_emp = max(k_emp, linalg.matrix_norm(nu, "spectral"))
        second_moment += p_i * (nu @ nu)
    sigma2_emp = linalg.matrix_norm(linalg.hermitize(second_moment - effect @ effect), "spectral")
    if ensemble.kind == "local":
        n = ensemble.n_qubits
        k_bound, sigma2_bound = float(4**n), float(10**n)
    else:
        d = ensemble.dim
        k_bound, sigma2_bound = float(d**2), float(d**3 + d**2)
    if k_emp > k_bound + 1e-9 or sigma2_emp > sigma2_bound + 1e-9:
        raise AssertionError(
            f"diagnostics exceed closed-form bounds: K {k_emp} vs {k_bound}, "
            f"sigma2 {sigma2_emp} vs {sigma2_bound}"
        )
    return BernsteinReport(k_emp, k_bound, sigma2_emp, sigma2_bound)


def spec_hash(spec: dict) -> str:
    """sha256 of the canonical JSON encoding of a spec dict."""
    canon = json.dumps(spec, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def save_counts(table: FrequencyTable, path, ensemble_spec: dict | None = None) -> None:
    """Write counts as CSV plus a `<path>.meta.json` sidecar.

    The CSV has header ``state_index,outcome_index,count`` with rows sorted
    by cell; the sidecar records M, L, N and, when given, the ensemble spec
    and its hash so ingestion can verify compatibility.
    """
    path = str(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["state_index", "outcome_index", "count"])
        for (i, j) in sorted(table.counts):
            writer.writerow([i, j, table.counts[(i, j)]])
    meta = {
        "n_states": table.n_states,
        "n_outcomes": table.n_outcomes,
        "n_shots": table.n_shots,
    }
    if ensemble_spec is not None:
        meta["ensemble_spec"] = ensemble_spec
        meta["ensemble_spec_sha256"] = spec_hash(ensemble_spec)
    with open(path + ".meta.json", "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_counts(path) -> tuple[FrequencyTable, dict]:
    """Read a counts CSV and its sidecar; returns (table, metadata)."""
    path = str(path)
    with open(path + ".meta.json") as fh:
        meta = json.load(fh)
    counts = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["state_index", "outcome_index", "count"]:
            raise ValueError(f"unexpected counts header: {header}")
        for row in reader:
            i, j, c = int(row[0]), int(row[1]), int(row[2])
            counts[(i, j)] = counts.get((i, j), 0) + c
    table = FrequencyTable(meta["n_states"], meta["n_outcomes"], meta["n_shots"], counts)
    return table, meta
