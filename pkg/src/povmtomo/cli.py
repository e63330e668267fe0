"""Command-line pipeline: simulate, reconstruct, compare, and calibrate.

Every command reads a JSON config (strict schema, unknown keys rejected) or
explicit flags, and writes deterministic artifacts: POVM files, counts CSVs
with metadata sidecars, result CSVs, and report JSONs. Identical configs and
seeds produce byte-identical reconstruction outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import distances, packing_lab, povm as povm_mod
from .frames import build_ensemble
from .povm import build_povm, load_povm, measurement_channel, pauli_strings, save_povm, validate
from .tomography import (
    ProjectionOptions,
    bernstein_diagnostics,
    lse_estimate,
    load_counts,
    project_onto_povms,
    sample_size,
    save_counts,
    simulate_shots,
    spec_hash,
)

CONFIG_KEYS = {"povm", "ensemble", "shots", "seed", "projection", "epsilon", "delta", "outputs"}
PROJECTION_KEYS = {"metric", "tol_feasibility", "tol_step", "max_iterations"}


@dataclass(frozen=True)
class ExperimentConfig:
    povm_spec: dict
    ensemble_spec: dict
    shots: int
    seed: int
    projection: ProjectionOptions
    epsilon: float
    delta: float
    out_dir: str

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        unknown = set(doc) - CONFIG_KEYS
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key in ("povm", "ensemble", "shots", "seed"):
            if key not in doc:
                raise ValueError(f"config is missing required key {key!r}")
        proj_doc = dict(doc.get("projection", {}))
        unknown = set(proj_doc) - PROJECTION_KEYS
        if unknown:
            raise ValueError(f"unknown projection keys: {sorted(unknown)}")
        projection = ProjectionOptions(**proj_doc)
        outputs = dict(doc.get("outputs", {}))
        if set(outputs) - {"dir"}:
            raise ValueError(f"unknown outputs keys: {sorted(set(outputs) - {'dir'})}")
        shots = int(doc["shots"])
        if shots < 1:
            raise ValueError("shots must be >= 1")
        return cls(
            povm_spec=doc["povm"],
            ensemble_spec=doc["ensemble"],
            shots=shots,
            seed=int(doc["seed"]),
            projection=projection,
            epsilon=float(doc.get("epsilon", 0.1)),
            delta=float(doc.get("delta", 0.05)),
            out_dir=outputs.get("dir", "."),
        )

    def build(self):
        target = build_povm(self.povm_spec)
        ensemble = build_ensemble(self.ensemble_spec)
        if target.dim != ensemble.dim:
            raise ValueError(
                f"POVM dimension {target.dim} does not match ensemble dimension {ensemble.dim}"
            )
        return target, ensemble


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    with open(path) as fh:
        doc = json.load(fh)
    config = ExperimentConfig.from_dict(doc)
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    if "seed" in overrides:
        config = replace(config, seed=int(overrides["seed"]))
    if "shots" in overrides:
        config = replace(config, shots=int(overrides["shots"]))
    if "out" in overrides:
        config = replace(config, out_dir=str(overrides["out"]))
    if "metric" in overrides:
        config = replace(config, projection=replace(config.projection, metric=overrides["metric"]))
    if "tol" in overrides:
        config = replace(
            config, projection=replace(config.projection, tol_feasibility=float(overrides["tol"]))
        )
    return config


def _dump_json(doc, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _sample_size_panel(d: int, n_outcomes: int, epsilon: float, delta: float, ensemble) -> dict:
    panel = {
        "epsilon": epsilon,
        "delta": delta,
        "global_op": sample_size(d, n_outcomes, epsilon, delta, "global", "op"),
        "global_av_theorem": sample_size(d, n_outcomes, epsilon, delta, "global", "av", "theorem"),
        "global_av_proof": sample_size(d, n_outcomes, epsilon, delta, "global", "av", "proof"),
    }
    if ensemble.kind == "local":
        n = ensemble.n_qubits
        panel["local_op"] = sample_size(d, n_outcomes, epsilon, delta, "local", "op", n_qubits=n)
        panel["local_av"] = sample_size(d, n_outcomes, epsilon, delta, "local", "av", n_qubits=n)
    return panel


def run_reconstruction(config: ExperimentConfig, counts_path: str | None = None) -> dict:
    """Full pipeline: (simulate or ingest) -> least squares -> projection -> report.

    Writes ``estimated_povm.json`` and ``report.json`` (plus ``counts.csv``
    when simulating) under the config's output directory and returns the
    report dict.
    """
    target, ensemble = config.build()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if counts_path is None:
        table = simulate_shots(target, ensemble, config.shots, config.seed)
        save_counts(table, out_dir / "counts.csv", ensemble_spec=config.ensemble_spec)
    else:
        table, meta = load_counts(counts_path)
        expected = spec_hash(config.ensemble_spec)
        recorded = meta.get("ensemble_spec_sha256")
        if recorded is not None and recorded != expected:
            raise ValueError(
                "counts file was produced for a different ensemble spec "
                f"(sidecar hash {recorded[:12]}..., config hash {expected[:12]}...)"
            )
        if table.n_states != ensemble.size:
            raise ValueError(
                f"counts table has {table.n_states} states, ensemble has {ensemble.size}"
            )

    raw = lse_estimate(table, ensemble)
    estimated, diagnostics = project_onto_povms(raw, config.projection)
    save_povm(estimated, out_dir / "estimated_povm.json")

    surrogates = distances.upper_surrogates(target, estimated)
    bern = bernstein_diagnostics(target, ensemble, range(target.outcomes))
    report = {
        "shots": table.n_shots,
        "seed": config.seed,
        "ensemble_spec_sha256": spec_hash(config.ensemble_spec),
        "distances": {
            "d_op": distances.d_op_exact(target, estimated).value,
            "d_av": distances.d_av(target, estimated).value,
            "frob_sum": surrogates.frob_sum,
            "spec_sum": surrogates.spec_sum,
        },
        "solver": {
            "metric": config.projection.metric,
            "iterations": diagnostics.iterations,
            "final_residual": diagnostics.final_residual,
            "converged": diagnostics.converged,
        },
        "bernstein": {
            "k_emp": bern.k_emp,
            "k_bound": bern.k_bound,
            "sigma2_emp": bern.sigma2_emp,
            "sigma2_bound": bern.sigma2_bound,
        },
        "sample_size": _sample_size_panel(
            target.dim, target.outcomes, config.epsilon, config.delta, ensemble
        ),
    }
    _dump_json(report, out_dir / "report.json")
    return report


@dataclass(frozen=True)
class ScalingResult:
    rows: tuple  # (n_shots, trial, d_op, d_av, runtime_ms)
    slope_op: float
    intercept_op: float
    slope_av: float
    intercept_av: float
    medians: dict


def run_scaling(config: ExperimentConfig, n_list, trials: int) -> ScalingResult:
    """Repeat the pipeline over a shot ladder and fit log-log error slopes.

    Trial t at shot count N uses the derived stream (seed, index(N), t), so
    the study is reproducible and trials are independent. Medians per N feed
    a least-squares line in log space; slopes near -1/2 reflect the
    shot-noise-limited regime.
    """
    n_list = [int(n) for n in n_list]
    if len(n_list) < 3 or sorted(set(n_list)) != n_list:
        raise ValueError("need >= 3 strictly increasing shot counts")
    if trials < 5:
        raise ValueError("need >= 5 trials per shot count")
    target, ensemble = config.build()
    rows = []
    medians_op, medians_av = [], []
    for n_index, n_shots in enumerate(n_list):
        errs_op, errs_av = [], []
        for trial in range(trials):
            start = time.perf_counter()
            table = simulate_shots(target, ensemble, n_shots, (config.seed, n_index, trial))
            raw = lse_estimate(table, ensemble)
            estimated, _ = project_onto_povms(raw, config.projection)
            err_op = distances.d_op_exact(target, estimated).value
            err_av = distances.d_av(target, estimated).value
            runtime_ms = (time.perf_counter() - start) * 1000
            rows.append((n_shots, trial, err_op, err_av, runtime_ms))
            errs_op.append(err_op)
            errs_av.append(err_av)
        medians_op.append(float(np.median(errs_op)))
        medians_av.append(float(np.median(errs_av)))
    log_n = np.log(np.asarray(n_list, dtype=float))
    slope_op, intercept_op = np.polyfit(log_n, np.log(medians_op), 1)
    slope_av, intercept_av = np.polyfit(log_n, np.log(medians_av), 1)
    medians = {
        "n_list": n_list,
        "d_op": medians_op,
        "d_av": medians_av,
    }
    return ScalingResult(
        tuple(rows), float(slope_op), float(intercept_op), float(slope_av), float(intercept_av), medians
    )


def _write_scaling(result: ScalingResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "scaling.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["N", "trial", "d_op", "d_av", "runtime_ms"])
        for n_shots, trial, err_op, err_av, runtime_ms in result.rows:
            writer.writerow([n_shots, trial, repr(err_op), repr(err_av), f"{runtime_ms:.3f}"])
    _dump_json(
        {
            "medians": result.medians,
            "fit": {
                "slope_d_op": result.slope_op,
                "intercept_d_op": result.intercept_op,
                "slope_d_av": result.slope_av,
                "intercept_d_av": result.intercept_av,
            },
        },
        out_dir / "scaling_report.json",
    )


def _cmd_simulate(args) -> int:
    config = load_config(args.config, vars(args))
    target, ensemble = config.build()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = simulate_shots(target, ensemble, config.shots, config.seed)
    save_counts(table, out_dir / "counts.csv", ensemble_spec=config.ensemble_spec)
    print(json.dumps({"counts": str(out_dir / "counts.csv"), "shots": table.n_shots}))
    return 0


def _cmd_reconstruct(args) -> int:
    config = load_config(args.config, vars(args))
    report = run_reconstruction(config, counts_path=args.from_counts)
    print(json.dumps(report, sort_keys=True, indent=2))
    return 0


def _cmd_distance(args) -> int:
    first = load_povm(args.povm_a)
    second = load_povm(args.povm_b)
    surrogates = distances.upper_surrogates(first, second)
    if first.outcomes <= distances.MAX_EXACT_OUTCOMES:
        op = distances.d_op_exact(first, second)
        op_doc = {"kind": op.kind, "value": op.value, "witness": list(op.witness or ())}
    else:
        op = distances.d_op_lower(first, second, seed=args.seed or 0)
        op_doc = {"kind": op.kind, "value": op.value, "witness": list(op.witness or ())}
    doc = {
        "d_op": op_doc,
        "d_av": distances.d_av(first, second).value,
        "frob_sum": surrogates.frob_sum,
        "spec_sum": surrogates.spec_sum,
    }
    print(json.dumps(doc, sort_keys=True, indent=2))
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _dump_json(doc, out_dir / "distance.json")
    return 0


def _cmd_scaling(args) -> int:
    config = load_config(args.config, vars(args))
    n_list = [int(tok) for tok in args.n_list.split(",")]
    result = run_scaling(config, n_list, args.trials)
    _write_scaling(result, Path(config.out_dir))
    print(
        json.dumps(
            {
                "slope_d_op": result.slope_op,
                "slope_d_av": result.slope_av,
                "medians": result.medians,
            },
            sort_keys=True,
            indent=2,
        )
    )
    return 0


def _cmd_bounds(args) -> int:
    doc = {
        "dim": args.dim,
        "outcomes": args.outcomes,
        "epsilon": args.epsilon,
        "delta": args.delta,
        "global_op": sample_size(args.dim, args.outcomes, args.epsilon, args.delta, "global", "op"),
        "global_av_theorem": sample_size(
            args.dim, args.outcomes, args.epsilon, args.delta, "global", "av", "theorem"
        ),
        "global_av_proof": sample_size(
            args.dim, args.outcomes, args.epsilon, args.delta, "global", "av", "proof"
        ),
    }
    if args.n_qubits is not None:
        doc["local_op"] = sample_size(
            args.dim, args.outcomes, args.epsilon, args.delta, "local", "op", n_qubits=args.n_qubits
        )
        doc["local_av"] = sample_size(
            args.dim, args.outcomes, args.epsilon, args.delta, "local", "av", n_qubits=args.n_qubits
        )
    print(json.dumps(doc, sort_keys=True, indent=2))
    return 0


def _cmd_packing(args) -> int:
    rows = []
    for seed_offset in range(args.seeds):
        family = packing_lab.build_packing(
            args.kind, args.dim, args.outcomes, args.epsilon, args.members, (args.seed, seed_offset)
        )
        report = packing_lab.verify_separation(family)
        rows.append(
            {
                "kind": args.kind,
                "dim": args.dim,
                "outcomes": args.outcomes,
                "epsilon": args.epsilon,
                "members": args.members,
                "seed": seed_offset,
                "min_pairwise": report.min_pairwise,
                "threshold": report.threshold,
                "ok": report.ok,
            }
        )
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "packing.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["kind", "dim", "outcomes", "epsilon", "members", "seed", "min_pairwise", "threshold", "ok"]
            )
            for row in rows:
                writer.writerow(
                    [
                        row["kind"],
                        row["dim"],
                        row["outcomes"],
                        row["epsilon"],
                        row["members"],
                        row["seed"],
                        repr(row["min_pairwise"]),
                        repr(row["threshold"]),
                        int(row["ok"]),
                    ]
                )
    n_ok = sum(row["ok"] for row in rows)
    print(json.dumps({"ok_seeds": n_ok, "total_seeds": len(rows)}))
    return 0 if n_ok == len(rows) else 1


def _cmd_channel(args) -> int:
    ideal = load_povm(args.ideal)
    estimated = load_povm(args.estimated)
    matrix = measurement_channel(ideal, estimated)
    labels, _ = pauli_strings(int(round(np.log2(ideal.dim))))
    doc = {
        "dim": ideal.dim,
        "basis": labels,
        "matrix": [[float(x) for x in row] for row in matrix],
    }
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _dump_json(doc, out_dir / "channel.json")
    print(json.dumps({"dim": ideal.dim, "basis_size": len(labels)}))
    return 0


def _cmd_validate(args) -> int:
    report = validate(povm_mod.read_povm_file(args.povm), tol=args.tol)
    print(
        json.dumps(
            {
                "ok": report.ok,
                "min_eigenvalue": report.min_eigenvalue,
                "completeness_residual": report.completeness_residual,
                "tol": args.tol,
            },
            sort_keys=True,
            indent=2,
        )
    )
    return 0 if report.ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="povmtomo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--shots", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("simulate", help="sample shots and write a counts CSV")
    add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("reconstruct", help="simulate or ingest counts, then reconstruct")
    add_common(p)
    p.add_argument("--from-counts", default=None, help="ingest an existing counts CSV")
    p.add_argument("--metric", choices=["frobenius", "dav"], default=None)
    p.add_argument("--tol", type=float, default=None, help="projection feasibility tolerance")
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("distance", help="distances between two POVM files")
    p.add_argument("--povm-a", required=True)
    p.add_argument("--povm-b", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_distance)

    p = sub.add_parser("scaling", help="error-vs-shots study with slope fit")
    add_common(p)
    p.add_argument("--n-list", required=True, help="comma-separated shot counts")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--metric", choices=["frobenius", "dav"], default=None)
    p.add_argument("--tol", type=float, default=None)
    p.set_defaults(func=_cmd_scaling)

    p = sub.add_parser("bounds", help="evaluate the sample-size calculators")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--outcomes", type=int, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--n-qubits", type=int, default=None)
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("packing", help="build packing families and verify separation")
    p.add_argument("--kind", choices=["op", "av"], required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--outcomes", type=int, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--members", type=int, required=True)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_packing)

    p = sub.add_parser("channel", help="half-sided measurement channel of two POVMs")
    p.add_argument("--ideal", required=True)
    p.add_argument("--estimated", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_channel)

    p = sub.add_parser("validate", help="check a POVM file")
    p.add_argument("--povm", required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=_cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface every failure as a machine-readable record
        record = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
