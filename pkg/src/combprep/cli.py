"""Command-line orchestration: experiment configs in, JSON + CSV + figures out.

Every run embeds its fully resolved config and a content hash in the result
document; timestamps live in a separate field so that identical (config,
seed, threads) invocations produce byte-identical result payloads.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .ansatz import Circuit, build_comb_ansatz
from .configio import (SCHEMAS, build_grid, build_target, config_hash,
                       dump_json, load_config, validate, write_csv)
from .crossinterp import build_target as tci_build_target
from .crossinterp import tci_error
from .errors import CapacityError, ConfigError, ConvergenceError
from .grids import GridSpec, bits_to_coords, eval_target, normalized_state, values_on_grid
from .measure import covariance_experiment, eps_max
from .mps import MPS
from .native import compile_native, count_two_qubit, export_qasm, prune
from .noise import NoiseModel
from .sim import DenseBackend, MpsBackend, gradient_scan, infidelity, run
from .training import Schedule, noise_aware_finetune, run_iqsp
from .utils import set_default_threads

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_CAPACITY = 3
EXIT_CONVERGENCE = 4


def _backend_from(doc: dict):
    if doc["kind"] == "dense":
        return DenseBackend(dtype=np.complex64 if doc["dtype"] == "complex64" else np.complex128)
    return MpsBackend(chi_max=doc["chi_max"], tol=doc["tol"])


def _schedule_from(doc: dict, spec=None, grid=None) -> Schedule:
    kw = dict(n_epochs=doc["n_epochs"], n_epochs_final=doc["n_epochs_final"], lr=doc["lr"])
    if doc["adaptive"]:
        return Schedule.adaptive(spec, grid, epsilon=doc["epsilon"],
                                 max_steps=doc["max_steps"], **kw)
    return Schedule.uniform(doc["delta_lambda"], **kw)


def _load_checkpoint(path: str) -> Circuit:
    with open(path) as fh:
        return Circuit.from_json_dict(json.load(fh))


def _train_circuit(cfg: dict, spec, grid) -> Circuit:
    """Circuit from a checkpoint file, or freshly trained via the schedule."""
    if cfg.get("checkpoint"):
        return _load_checkpoint(cfg["checkpoint"])
    schedule = _schedule_from(cfg["schedule"], spec, grid)
    trace = run_iqsp(spec, grid, cfg["layers"], schedule, chi_max=cfg["tci"]["chi_max"],
                     tci_tol=cfg["tci"]["tol"], seed=cfg["seed"], jitter=cfg["jitter"],
                     keep_checkpoints=False)
    return build_comb_ansatz(grid, cfg["layers"]).with_theta(trace.theta)


# ---------------------------------------------------------------------------
# subcommand handlers: cfg -> (results dict, list of extra artifact paths)


def cmd_tci_build(cfg, out: Path, plots: bool):
    spec = build_target(cfg["target"])
    grid = build_grid(cfg["target"], cfg["n_x"])
    built = tci_build_target(spec, grid, chi_max=cfg["chi_max"], tol=cfg["tol"],
                             max_sweeps=cfg["max_sweeps"], seed=cfg["seed"],
                             with_comb=cfg["with_comb"])

    def f(bits):
        return eval_target(spec, bits_to_coords(bits, grid))

    err = tci_error(built.mps, f, cfg["n_avg"], seed=cfg["seed"] + 1)
    rows = built.cross.history
    write_csv(out / "convergence.csv", rows, ["sweep", "max_chi", "eps_r", "n_evals"])
    dump_json(out / "state.json", built.mps.to_json_dict())
    if built.comb is not None:
        dump_json(out / "comb.json", built.comb.to_json_dict())
    if plots and rows:
        from .plots import plot_tci_convergence

        plot_tci_convergence(rows, out / "convergence.png")
    if not built.cross.converged:
        raise ConvergenceError(f"cross interpolation stalled at eps_r={built.cross.eps_r:.3e}")
    return {
        "converged": built.cross.converged,
        "eps_r": err,
        "eps_r_heldout": built.cross.eps_r,
        "max_chi": built.mps.max_bond,
        "n_evals": built.cross.n_evals,
        "raw_norm": built.raw_norm,
    }


def cmd_iqsp_run(cfg, out: Path, plots: bool):
    spec = build_target(cfg["target"])
    grid = build_grid(cfg["target"], cfg["n_x"])
    schedule = _schedule_from(cfg["schedule"], spec, grid)
    backend = _backend_from(cfg["backend"])
    trace = run_iqsp(spec, grid, cfg["layers"], schedule, chi_max=cfg["tci"]["chi_max"],
                     tci_tol=cfg["tci"]["tol"], backend=backend, engine=cfg["engine"],
                     seed=cfg["seed"], jitter=cfg["jitter"])
    steps = [vars(s) for s in trace.steps]
    write_csv(out / "trace.csv", steps,
              ["k", "lam", "initial_overlap", "initial_avg_grad", "initial_infidelity",
               "final_infidelity", "epochs", "target_chi"])
    write_csv(out / "timing.csv", steps, ["k", "wall_time"])  # timings live separately
    epoch_rows = [{"k": k, "epoch": e, "infidelity": v}
                  for k, hist in enumerate(trace.epoch_history) for e, v in enumerate(hist)]
    write_csv(out / "epochs.csv", epoch_rows, ["k", "epoch", "infidelity"])
    circ = build_comb_ansatz(grid, cfg["layers"]).with_theta(trace.theta)
    dump_json(out / "checkpoint.json", circ.to_json_dict())
    dump_json(out / "checkpoints_per_step.json",
              {"theta": [t.tolist() for t in trace.checkpoints]})
    if plots:
        from .plots import plot_iqsp_trace

        plot_iqsp_trace(steps, out / "trace.png")
    return {"final_infidelity": trace.final_infidelity,
            "steps": len(trace.steps),
            "m_parameters": circ.m}


def cmd_cci_run(cfg, out: Path, plots: bool):
    from .pivotfit import run_cci

    spec = build_target(cfg["target"])
    grid = build_grid(cfg["target"], cfg["n_x"])
    res = run_cci(spec, grid, n_layers=cfg["layers"], n_pivots_max=cfg["n_pivots_max"],
                  n_epochs=cfg["n_epochs"], max_iters=cfg["max_iters"], tol=cfg["tol"],
                  lr=cfg["lr"], seed=cfg["seed"], jitter=cfg["jitter"])
    rows = [vars(t) for t in res.trace]
    write_csv(out / "trace.csv", rows, ["iteration", "n_pivots", "cost", "infidelity"])
    circ = build_comb_ansatz(grid, cfg["layers"]).with_theta(res.theta)
    dump_json(out / "checkpoint.json", circ.to_json_dict())
    if plots:
        from .plots import plot_cci_trace

        plot_cci_trace(rows, out / "trace.png")
    return {"converged": res.converged,
            "final_cost": res.trace[-1].cost,
            "final_infidelity": res.trace[-1].infidelity,
            "best_infidelity": min(t.infidelity for t in res.trace)}


def cmd_grad_scan(cfg, out: Path, plots: bool):
    rows = []
    summary = {}
    for d in cfg["dims"]:
        tdoc = dict(cfg["target"])
        tdoc["d"] = d
        spec = build_target(tdoc)
        grid = build_grid(tdoc, cfg["n_x"])
        if "random_init" in cfg["modes"]:
            backend = DenseBackend(dtype=np.complex64 if cfg["random_dtype"] == "complex64"
                                   else np.complex128)
            target = tci_build_target(spec, grid, chi_max=cfg["tci"]["chi_max"],
                                      tol=cfg["tci"]["tol"], seed=cfg["seed"]).mps
            rows += [vars(r) for r in gradient_scan(
                grid, cfg["layers"], spec, "random_init", cfg["n_repeats"],
                cfg["seed"], target=target, backend=backend)]
        if "warm_start" in cfg["modes"]:
            backend = DenseBackend(dtype=np.complex64 if cfg["warm_dtype"] == "complex64"
                                   else np.complex128)
            schedule = _schedule_from(cfg["warm_schedule"], spec, grid)
            traces = []
            for s in cfg["warm_seeds"]:
                traces.append(run_iqsp(spec, grid, cfg["layers"], schedule,
                                       chi_max=cfg["tci"]["chi_max"], tci_tol=cfg["tci"]["tol"],
                                       backend=backend, seed=s, jitter=cfg["jitter"],
                                       keep_checkpoints=False))
            rows += [vars(r) for r in gradient_scan(
                grid, cfg["layers"], spec, "warm_start", 0, cfg["seed"], traces=traces)]
    write_csv(out / "scan.csv", rows, ["mode", "n", "repeat", "overlap", "avg_grad"])
    for mode in cfg["modes"]:
        sub = [r for r in rows if r["mode"] == mode]
        ns = sorted({r["n"] for r in sub})
        means = {n: float(np.mean([r["avg_grad"] for r in sub if r["n"] == n])) for n in ns}
        summary[mode] = {"mean_avg_grad": means}
        if mode == "random_init" and len(ns) >= 2:
            slope = np.polyfit(ns, [np.log(means[n]) for n in ns], 1)[0]
            summary[mode]["log_slope"] = float(slope)
    if plots and rows:
        from .plots import plot_grad_scan

        plot_grad_scan(rows, out / "scan.png")
    return summary


def cmd_noise_finetune(cfg, out: Path, plots: bool):
    spec = build_target(cfg["target"])
    grid = build_grid(cfg["target"], cfg["n_x"])
    circ = _train_circuit(cfg, spec, grid)
    target = tci_build_target(spec, grid, chi_max=cfg["tci"]["chi_max"],
                              tol=cfg["tci"]["tol"], seed=cfg["seed"]).mps
    tdense = target.to_dense()
    model = NoiseModel(a=cfg["noise"]["a"], b=cfg["noise"]["b"])
    fin = cfg["finetune"]
    theta, native, report = noise_aware_finetune(
        circ, tdense, model, n_epochs=fin["n_epochs"], lr=fin["lr"], seed=cfg["seed"],
        n_traj_train=fin["n_traj_train"], n_traj_eval=fin["n_traj_eval"],
        pressure_traj=fin["pressure_traj"], pressure_refresh=fin["pressure_refresh"],
        theta_min=fin["theta_min"])
    dump_json(out / "checkpoint.json", circ.with_theta(theta).to_json_dict())
    with open(out / "circuit.qasm", "w") as fh:
        fh.write(export_qasm(native))
    results = dict(vars(report))
    if plots:
        from .plots import plot_finetune

        plot_finetune(results, out / "finetune.png")
    return results


def cmd_sample_stats(cfg, out: Path, plots: bool):
    spec = build_target(cfg["target"])
    grid = build_grid(cfg["target"], cfg["n_x"])
    circ = _train_circuit(cfg, spec, grid)
    state = run(circ, DenseBackend()) if grid.n <= 24 else run(circ, MpsBackend())
    native = None
    model = None
    if cfg["noise"] is not None:
        native = compile_native(circ)
        model = NoiseModel(a=cfg["noise"]["a"], b=cfg["noise"]["b"])
    from .utils import parallel_map

    reports = parallel_map(
        lambda k: covariance_experiment(state, spec, grid, cfg["n_shots"],
                                        cfg["seed"] + k, native=native, model=model),
        range(cfg["n_seeds"]))
    first_report = reports[0]
    rows = [{"seed": cfg["seed"] + k,
             "agreement": rep.agreement_fraction(),
             "mean_abs_cov_err": float(np.mean(np.abs(rep.cov - rep.exact_cov)))}
            for k, rep in enumerate(reports)]
    write_csv(out / "seeds.csv", rows, ["seed", "agreement", "mean_abs_cov_err"])
    dump_json(out / "report.json", first_report.to_json_dict())
    if plots:
        from .plots import plot_covariance

        plot_covariance(first_report.to_json_dict(), out / "covariance.png")
    target = normalized_state(spec, grid) if grid.n <= 24 else None
    circuit_infid = None if target is None else infidelity(circ, target)
    return {"mean_agreement": float(np.mean([r["agreement"] for r in rows])),
            "noisy": model is not None,
            "circuit_infidelity": circuit_infid}


def cmd_compile(cfg, out: Path, plots: bool):
    circ = _load_checkpoint(cfg["checkpoint"])
    native = compile_native(circ)
    before = count_two_qubit(native)
    if cfg["prune"]:
        native = prune(native, cfg["theta_min"])
    text = export_qasm(native, include_measure=cfg["measure"])
    with open(out / "circuit.qasm", "w") as fh:
        fh.write(text)
    return {"two_qubit_gates": count_two_qubit(native),
            "two_qubit_before_prune": before,
            "pruned": native.pruned_count,
            "source_m": native.source_m}


def cmd_compare_baseline(cfg, out: Path, plots: bool):
    rows = []
    for family in cfg["targets"]:
        tdoc = {"family": family, "d": cfg["d"], "s0": cfg["s0"], "gamma": 0.0,
                "sigma": cfg["sigma"], "covariance_family": "tridiagonal",
                "mu": None, "lambda": 1.0}
        spec = build_target(tdoc)
        grid = GridSpec(d=cfg["d"], n_x=cfg["n_x"])
        f_norm = normalized_state(spec, grid)
        norm_f = float(np.linalg.norm(values_on_grid(spec, grid)))
        for layers in cfg["layers_list"]:
            schedule = _schedule_from(cfg["schedule"], spec, grid)
            trace = run_iqsp(spec, grid, layers, schedule, chi_max=cfg["tci"]["chi_max"],
                             tci_tol=cfg["tci"]["tol"], seed=cfg["seed"],
                             jitter=cfg["jitter"], keep_checkpoints=False)
            circ = build_comb_ansatz(grid, layers).with_theta(trace.theta)
            state = run(circ, DenseBackend())
            native = prune(compile_native(circ))
            rows.append({
                "family": family, "layers": layers,
                "two_qubit_gates": len(circ.gates),
                "native_rzz": count_two_qubit(native),
                "eps_max": eps_max(f_norm, norm_f, state),
                "final_infidelity": trace.final_infidelity,
            })
    write_csv(out / "baseline.csv", rows,
              ["family", "layers", "two_qubit_gates", "native_rzz", "eps_max",
               "final_infidelity"])
    if plots:
        from .plots import plot_baseline

        plot_baseline(rows, out / "baseline.png")
    return {"rows": rows}


HANDLERS = {
    "tci-build": cmd_tci_build,
    "iqsp-run": cmd_iqsp_run,
    "cci-run": cmd_cci_run,
    "grad-scan": cmd_grad_scan,
    "noise-finetune": cmd_noise_finetune,
    "sample-stats": cmd_sample_stats,
    "compile": cmd_compile,
    "compare-baseline": cmd_compare_baseline,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="combprep",
        description="Tensor-network compression and shallow-circuit training "
                    "of multivariate functions on quantum registers.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in HANDLERS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="bound on internal parallelism (default: all cores, "
                            "or COMBPREP_THREADS)")
        p.add_argument("--backend", choices=("dense", "mps"), default=None,
                       help="override the backend kind where applicable")
        p.add_argument("--no-plots", action="store_true")
    args = parser.parse_args(argv)

    try:
        raw = load_config(args.config)
        cfg = validate(raw, SCHEMAS[args.command])
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.backend is not None and "backend" in cfg:
            cfg["backend"]["kind"] = args.backend
        set_default_threads(args.threads)
        if args.threads is not None:
            try:  # the JIT kernels parallelize internally; bound them too
                import numba

                numba.set_num_threads(max(1, args.threads))
            except ImportError:
                pass
        sha = config_hash(cfg)
        out = Path(args.out) if args.out else Path("runs") / f"{args.command}-{sha[:8]}"
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.time()
        results = HANDLERS[args.command](cfg, out, not args.no_plots)
        payload = {"command": args.command, "config": cfg, "config_sha256": sha,
                   "results": results}
        doc = dict(payload)
        doc["timestamp"] = {"unix": time.time(), "wall_seconds": time.time() - t0}
        dump_json(out / "result.json", doc)
        print(f"[combprep] {args.command}: ok -> {out}")
        return EXIT_OK
    except ConfigError as exc:
        _report_error(args, "config_error", exc)
        return EXIT_CONFIG
    except CapacityError as exc:
        _report_error(args, "capacity_error", exc)
        return EXIT_CAPACITY
    except ConvergenceError as exc:
        _report_error(args, "convergence_error", exc)
        return EXIT_CONVERGENCE
    except Exception as exc:  # noqa: BLE001 - error record must always be written
        _report_error(args, "error", exc)
        return EXIT_ERROR


def _report_error(args, kind: str, exc: Exception):
    record = {"error": kind, "message": str(exc), "command": args.command}
    print(json.dumps(record), file=sys.stderr)
    if args.out:
        try:
            dump_json(Path(args.out) / "error.json", record)
        except OSError:
            pass


if __name__ == "__main__":
    sys.exit(main())
