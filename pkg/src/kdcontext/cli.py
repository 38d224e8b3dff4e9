"""Command-line driver.

Every subcommand reads a JSON config (``--config``), optionally a master
seed (``--seed``), and writes a JSON report to ``--out`` (stdout when
omitted). Exit codes: 0 success, 2 precondition error, 3 insufficient data.

Config keys shared by most subcommands:
  basis    "mub_qubit", "fourier:<d>", or {"d", "a_vectors", "b_vectors"}
           with complex entries written as [re, im]
  rho      density matrix (complex entries as [re, im]); or
  state    pure state vector, used when rho is absent
  epsilon  coupling angle
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .certify import certify
from .errors import InsufficientSamples, KDError
from .experiment import AliceConfig, BobPolicy, PublicRecord, SecretLedger, alice_postselect, bob_analyze, run_experiment
from .geometry import (
    PurePositiveSet,
    SeparatingWitness,
    analyze_exotic,
    find_witness,
    negativity_floor,
    pure_positive_search,
)
from .hvm import HiddenVariableModel, build_hvm, verify_correctness, verify_noncontextuality
from .kd import basis_from_json, complex_from_json, complex_to_json, fourier_pair, kd_distribution, kd_to_json, mub_qubit, projector
from .protocols import (
    PROTOCOL_VARIABLES,
    exact_distributions,
    marginalization_check,
    outcome_table,
    protocol_cells,
    simulate_counts,
)
from .rng import RNG_NAME, derive_rng, derive_seed


def _basis(cfg):
    spec = cfg.get("basis", "mub_qubit")
    if spec == "mub_qubit":
        return mub_qubit()
    if isinstance(spec, str) and spec.startswith("fourier:"):
        return fourier_pair(int(spec.split(":", 1)[1]))
    if isinstance(spec, dict):
        return basis_from_json(spec)
    raise ValueError(f"unrecognized basis {spec!r}")


def _rho(cfg):
    if "rho" in cfg:
        return complex_from_json(cfg["rho"])
    if "state" in cfg:
        psi = complex_from_json(cfg["state"])
        return projector(psi / np.linalg.norm(psi))
    raise KeyError("config needs 'rho' or 'state'")


def _generators(cfg, basis, seed):
    if "generators" in cfg:
        states = complex_from_json(cfg["generators"])
        return PurePositiveSet(basis, states, ["config"] * len(states))
    return pure_positive_search(basis, int(cfg.get("budget", 64)), rng_seed=seed)


def _emit(obj, out):
    text = json.dumps(obj, indent=2, default=_default)
    if out is None:
        print(text)
    else:
        with open(out, "w") as fh:
            fh.write(text + "\n")


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"cannot serialize {type(o).__name__}")


def cmd_kd_compute(cfg, args):
    kd = kd_distribution(_rho(cfg), _basis(cfg))
    return {**kd_to_json(kd), "N": kd.nonpositivity}


def cmd_protocols_exact(cfg, args):
    basis = _basis(cfg)
    dists = exact_distributions(_rho(cfg), basis, int(cfg.get("j", 0)), int(cfg.get("k", 0)), float(cfg["epsilon"]))
    rep = marginalization_check(dists)
    return {**dists.to_json(), "marginalization_max_deviation": rep.max_deviation}


def cmd_protocols_sample(cfg, args):
    """Shot counts per cell; with ``--log`` also one JSON line per shot."""
    basis = _basis(cfg)
    rho, eps, shots = _rho(cfg), float(cfg["epsilon"]), int(cfg["shots"])
    cells = [tuple(c) for c in cfg["cells"]] if "cells" in cfg else None
    counts = simulate_counts(rho, basis, eps, shots, args.seed, cells)
    if args.log:
        all_cells = protocol_cells(basis.d)
        with open(args.log, "w") as fh:
            for cell, cnt in sorted(counts.counts.items()):
                ci = all_cells.index(cell)
                seed_cell = derive_seed(args.seed, ci)
                dists = exact_distributions(rho, basis, max(cell[1], 0), max(cell[2], 0), eps)
                labels = outcome_table(dists, cell[0])[0]
                names = PROTOCOL_VARIABLES[cell[0]]
                # expand counts into a shuffled shot sequence for the log
                seq = np.repeat(np.arange(len(cnt)), cnt)
                derive_rng(args.seed, 1 << 20, ci).shuffle(seq)
                for i, o in enumerate(seq):
                    entry = {"round": i, "protocol": cell[0], "j": None if cell[1] < 0 else cell[1],
                             "k": None if cell[2] < 0 else cell[2], "x": None, "y": None, "z": None,
                             "seed_cell": seed_cell}
                    entry.update(zip(names, labels[o]))
                    fh.write(json.dumps(entry) + "\n")
    return {**counts.to_json(), "seed": args.seed, "rng": RNG_NAME}


def cmd_hvm_build(cfg, args):
    return build_hvm(_rho(cfg), _basis(cfg), float(cfg["epsilon"]), float(cfg.get("kd_positive_tol", 1e-10))).to_json()


def cmd_hvm_verify(cfg, args):
    basis, rho, eps = _basis(cfg), _rho(cfg), float(cfg["epsilon"])
    model = HiddenVariableModel.from_json(cfg["model"]) if "model" in cfg else build_hvm(rho, basis, eps)
    corr = verify_correctness(model, rho, basis, eps)
    nc = verify_noncontextuality(model)
    return {"correctness": corr.to_json(), "noncontextuality": nc.to_json(), "passed": corr.passed and nc.passed}


def cmd_certify(cfg, args):
    return certify(_rho(cfg), _basis(cfg), float(cfg["epsilon"])).to_json()


def cmd_geometry_search(cfg, args):
    return pure_positive_search(_basis(cfg), int(cfg.get("budget", 64)), rng_seed=args.seed).to_json()


def cmd_geometry_witness(cfg, args):
    basis = _basis(cfg)
    gens = _generators(cfg, basis, args.seed)
    rho = _rho(cfg)
    analysis = analyze_exotic(rho, basis, gens, floor_restarts=int(cfg.get("restarts", 32)), rng_seed=args.seed)
    out = analysis.to_json()
    if analysis.witness is None and not analysis.hull.feasible:
        out["witness"] = find_witness(rho, gens, float(cfg.get("gap_tol", 1e-9))).to_json()
    return out


def cmd_geometry_floor(cfg, args):
    basis = _basis(cfg)
    if "witness" in cfg:
        w = SeparatingWitness.from_json(cfg["witness"])
    else:
        w = find_witness(_rho(cfg), _generators(cfg, basis, args.seed))
    est = negativity_floor(w, basis, int(cfg.get("restarts", 32)), args.seed)
    return {"witness": w.to_json(), "floor": est.to_json()}


def _alice(cfg):
    basis = _basis(cfg)
    states = np.array([complex_from_json(s) for s in cfg["states"]])
    states = states / np.linalg.norm(states, axis=1, keepdims=True)
    return AliceConfig(states, int(cfg["rounds"]), basis, float(cfg["epsilon"]), int(cfg.get("permutation_seed", 0)))


def cmd_experiment_run(cfg, args):
    alice = _alice(cfg)
    policy = BobPolicy.from_descriptor(cfg["policy"]) if "policy" in cfg else None
    record, ledger = run_experiment(alice, policy, args.seed, jobs=args.jobs)
    record_path = args.record or "record.jsonl"
    with open(record_path, "w") as fh:
        record.write_jsonl(fh)
    if args.ledger:
        with open(args.ledger, "w") as fh:
            json.dump(ledger.to_json(), fh)
    return {"deliveries": len(record), "record": record_path, "ledger": args.ledger,
            "rho_star": complex_to_json(alice.rho_star), "seed": args.seed, "rng": RNG_NAME}


def _load_record(args):
    if not args.record:
        raise ValueError("--record is required")
    with open(args.record) as fh:
        return PublicRecord.read_jsonl(fh)


def cmd_experiment_analyze(cfg, args):
    record = _load_record(args)
    rep = bob_analyze(record, _basis(cfg), float(cfg["epsilon"]), confidence=float(cfg.get("confidence", 0.99)),
                      min_samples=int(cfg.get("min_samples", 1000)), search_budget=int(cfg.get("budget", 64)),
                      floor_restarts=int(cfg.get("restarts", 32)), rng_seed=args.seed)
    return rep.to_json()


def cmd_experiment_postselect(cfg, args):
    record = _load_record(args)
    if not args.ledger:
        raise ValueError("--ledger is required")
    with open(args.ledger) as fh:
        ledger = SecretLedger.from_json(json.load(fh))
    rep = alice_postselect(record, ledger, _basis(cfg), float(cfg["epsilon"]),
                           confidence=float(cfg.get("confidence", 0.99)), min_samples=int(cfg.get("min_samples", 1000)))
    return rep.to_json()


COMMANDS = {
    ("kd", "compute"): cmd_kd_compute,
    ("protocols", "exact"): cmd_protocols_exact,
    ("protocols", "sample"): cmd_protocols_sample,
    ("hvm", "build"): cmd_hvm_build,
    ("hvm", "verify"): cmd_hvm_verify,
    ("certify", None): cmd_certify,
    ("geometry", "search"): cmd_geometry_search,
    ("geometry", "witness"): cmd_geometry_witness,
    ("geometry", "floor"): cmd_geometry_floor,
    ("experiment", "run"): cmd_experiment_run,
    ("experiment", "analyze"): cmd_experiment_analyze,
    ("experiment", "postselect"): cmd_experiment_postselect,
}


def _common(p):
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--seed", type=int, default=0, help="master seed (uint64)")
    p.add_argument("--out", help="JSON report path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kdcontext", description="KD quasiprobability and contextuality toolkit")
    groups = parser.add_subparsers(dest="group", required=True)
    subs = {}
    for group, action in COMMANDS:
        if action is None:
            p = groups.add_parser(group)
            p.set_defaults(action=None)
            _common(p)
            continue
        if group not in subs:
            subs[group] = groups.add_parser(group).add_subparsers(dest="action", required=True)
        p = subs[group].add_parser(action)
        _common(p)
        if group == "protocols" and action == "sample":
            p.add_argument("--log", help="write one JSON line per shot")
        if group == "experiment":
            p.add_argument("--record", help="public record (JSON lines)")
            p.add_argument("--ledger", help="Alice's secret ledger (JSON)")
            p.add_argument("--jobs", type=int, default=1, help="threads for outcome sampling")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not 0 <= args.seed < 2**64:
        print("error: --seed must be a uint64", file=sys.stderr)
        return 2
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
        report = COMMANDS[(args.group, args.action)](cfg, args)
    except InsufficientSamples as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return 3
    except (KDError, KeyError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    _emit(report, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
