"""Command-line entry points: simulation, estimation, support/signal recovery,
probe suites, and experiment scans.

Dataset container format: magic "MRA1", little-endian u32 L, u64 n, f64 sigma,
then n*L row-major f64 observations in standard-parametrization order.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import struct
import sys

import numpy as np

from . import beltway, experiments, gensig, probes
from .mra import Dataset, MraConfig, RestrictedClass, em_restricted_mle, simulate
from .ring import Signal

MAGIC = b"MRA1"


def write_container(path, data: Dataset):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQd", data.L, data.n, data.config.sigma))
        fh.write(np.ascontiguousarray(data.observations, dtype="<f8").tobytes())


def read_container(path, dihedral: bool = False) -> Dataset:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError("not a dataset container (bad magic)")
        L, n, sigma = struct.unpack("<IQd", fh.read(4 + 8 + 8))
        obs = np.frombuffer(fh.read(n * L * 8), dtype="<f8").reshape(n, L)
    return Dataset(obs.astype(float), MraConfig(int(L), float(sigma), dihedral))


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _dump_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_jsonable)
    if path is None or path == "-":
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _jsonable(x):
    if isinstance(x, (set, frozenset)):
        return sorted(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.integer, np.floating, np.bool_)):
        return x.item()
    raise TypeError("cannot serialize %r" % type(x))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def cmd_simulate(args):
    theta0 = Signal.from_json_dict(_load_json(args.signal))
    cfg = MraConfig(theta0.L, args.sigma, args.group == "dihedral")
    rng = np.random.default_rng(args.seed)
    data = simulate(theta0, cfg, args.n, rng)
    write_container(args.out, data)
    return 0


def _restricted_class_from_json(d: dict) -> RestrictedClass:
    return RestrictedClass(
        kind=d.get("kind", "none"),
        support=frozenset(d["support"]) if d.get("support") is not None else None,
        m=d.get("m"),
        M=d.get("M"),
    )


def cmd_estimate(args):
    data = read_container(args.data, dihedral=args.group == "dihedral")
    rclass = _restricted_class_from_json(_load_json(args.restriction))
    if args.init:
        init = Signal.from_json_dict(_load_json(args.init))
    else:
        rng = np.random.default_rng(args.seed)
        init = Signal(rng.normal(size=data.L))
    theta_hat, diag = em_restricted_mle(data, data.config, rclass, init,
                                        max_iters=args.max_iters, tol=args.tol)
    _dump_json(theta_hat.to_json_dict(), args.out_signal)
    if args.out_diagnostics:
        _dump_json(diag, args.out_diagnostics)
    return 0


def cmd_beltway_solve(args):
    profile = beltway.DifferenceProfile.from_json_dict(_load_json(args.profile))
    supports = beltway.solve_beltway(profile, args.s)
    _dump_json({"L": profile.L, "s": args.s,
                "supports": [list(sup) for sup in supports]}, args.out)
    return 0


def cmd_pr_recover(args):
    P = np.zeros(args.L)
    with open(args.spectrum) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.lower().startswith("index"):
                continue
            i, v = line.split(",")
            P[int(i)] = float(v)
    spec = gensig.DiluteClassSpec(L=args.L, s=args.s, m=args.m, M=args.M, eps=args.eps)
    cands = beltway.recover_from_power_spectrum(P, spec, tol=args.tol)
    _dump_json({"candidates": [c.to_json_dict() for c in cands]}, args.out)
    return 0


def _probe_report(kind: str, cfg: dict) -> dict:
    seed = int(cfg.get("seed", 0))
    rng = np.random.default_rng(seed)
    if kind == "dilute-lb":
        spec = gensig.DiluteClassSpec(L=cfg["L"], s=cfg["s"], m=cfg["m"],
                                      M=cfg["M"], eps=cfg["eps"])
        theta0 = (Signal.from_json_dict(cfg["signal"]) if "signal" in cfg
                  else gensig.gen_collision_free(spec, rng))
        report = probes.dilute_lower_bound_check(
            theta0, spec, int(cfg.get("trials", 1000)), rng,
            h_norm=cfg.get("h_norm"))
        report["signal"] = theta0.to_json_dict()
    elif kind == "adversarial":
        if "signal" in cfg:
            theta0 = Signal.from_json_dict(cfg["signal"])
        else:
            theta0 = Signal(rng.normal(size=cfg["L"]))
        h = probes.adversarial_direction(theta0, float(cfg.get("delta", 1e-3)))
        from .spectral import second_moment_difference_expansion
        lin, _ = second_moment_difference_expansion(theta0, h)
        report = {
            "h": h.to_json_dict(),
            "h_mean": h.mean(),
            "h_norm": h.norm(),
            "linear_term_frobenius": float(np.linalg.norm(lin)),
        }
    elif kind == "uup":
        lam = probes.uup_sample(cfg["L"], cfg["a"], rng)
        if lam.size() == 0:
            report = {"set_size": 0, "c1_hat": None, "c2_hat": None}
        else:
            c1, c2 = probes.uup_check(lam, int(cfg["s"]), int(cfg.get("trials", 10000)), rng)
            report = {"set_size": lam.size(), "c1_hat": c1, "c2_hat": c2,
                      "frequencies": sorted(lam.frequencies)}
    elif kind == "lambda":
        theta = (Signal.from_json_dict(cfg["signal"]) if "signal" in cfg
                 else gensig.gen_symm_bernoulli_gaussian(
                     cfg["L"], cfg["s"], float(cfg.get("zeta", 1.0)), rng))
        lam = probes.lambda_construct(theta, int(cfg["s"]), cfg["a"],
                                      int(cfg.get("max_tries", 50)), rng,
                                      tau=float(cfg.get("tau", 1.0)))
        report = {"frequencies": sorted(lam.frequencies), "rounds": lam.rounds,
                  "c1_hat": lam.c1_hat, "c2_hat": lam.c2_hat,
                  "spectral_floor": lam.spectral_floor}
    elif kind == "moderate-lb":
        theta0 = Signal.from_json_dict(cfg["signal"])
        lam = probes.lambda_construct(theta0, int(cfg["s"]), cfg["a"],
                                      int(cfg.get("max_tries", 50)), rng,
                                      tau=float(cfg.get("tau", 1.0)))
        report = probes.moderate_curvature_check(
            theta0, lam, int(cfg.get("trials", 200)),
            float(cfg.get("h_norm", 1e-3)), rng)
    elif kind == "sandwich":
        theta = Signal.from_json_dict(cfg["theta"])
        phi = Signal.from_json_dict(cfg["phi"])
        report = probes.moment_sandwich_probe(
            theta, phi, cfg.get("sigma_grid", [2, 4, 8]),
            int(cfg.get("n_mc", 100000)), rng)
    else:
        raise ValueError("unknown probe %r" % (kind,))
    report["probe"] = kind
    report["seed"] = seed
    report["config_hash"] = config_hash(cfg)
    return report


def cmd_probe(args):
    cfg = _load_json(args.config)
    report = _probe_report(args.kind, cfg)
    _dump_json(report, args.out)
    return 0


def cmd_scan(args, scenario_family):
    cfg = experiments.ExperimentConfig.from_json_dict(_load_json(args.config))
    if scenario_family == "rate" and cfg.scenario not in ("dilute-rate", "fullsupport-rate"):
        raise SystemExit("config scenario %r is not a rate scan" % cfg.scenario)
    if scenario_family == "sparsity" and cfg.scenario != "sparsity-scan":
        raise SystemExit("config scenario %r is not a sparsity scan" % cfg.scenario)
    if scenario_family == "kl" and cfg.scenario != "kl-curvature-scan":
        raise SystemExit("config scenario %r is not a kl scan" % cfg.scenario)
    result = experiments.run_experiment(cfg)
    if args.out_csv:
        result.to_csv(args.out_csv)
    if args.out_json:
        result.to_json(args.out_json)
    else:
        _dump_json(result.summary_dict(), None)
    if result.fits.get("passes") is False:
        return 2
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="mralab",
                                description="alignment-model simulation and probes")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="draw a dataset and write a container")
    sp.add_argument("--signal", required=True, help="signal JSON file")
    sp.add_argument("--sigma", type=float, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--group", choices=["cyclic", "dihedral"], default="cyclic")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("estimate", help="restricted MLE via EM from a container")
    sp.add_argument("--data", required=True)
    sp.add_argument("--restriction", required=True, help="restricted-class JSON file")
    sp.add_argument("--init", help="initial signal JSON file")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--group", choices=["cyclic", "dihedral"], default="cyclic")
    sp.add_argument("--max-iters", type=int, default=200)
    sp.add_argument("--tol", type=float, default=1e-7)
    sp.add_argument("--out-signal", default="-")
    sp.add_argument("--out-diagnostics")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("beltway-solve", help="supports from a difference profile")
    sp.add_argument("--profile", required=True, help="difference profile JSON file")
    sp.add_argument("--s", type=int, required=True)
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_beltway_solve)

    sp = sub.add_parser("pr-recover", help="signals from a power spectrum CSV")
    sp.add_argument("--spectrum", required=True, help="CSV of index,value rows")
    sp.add_argument("--L", type=int, required=True)
    sp.add_argument("--s", type=int, required=True)
    sp.add_argument("--m", type=float, required=True)
    sp.add_argument("--M", type=float, required=True)
    sp.add_argument("--eps", type=float, default=1.0)
    sp.add_argument("--tol", type=float, default=1e-5)
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_pr_recover)

    sp = sub.add_parser("probe", help="run a verification probe")
    sp.add_argument("kind", choices=["dilute-lb", "adversarial", "uup", "lambda",
                                     "moderate-lb", "sandwich"])
    sp.add_argument("--config", required=True, help="probe config JSON file")
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_probe)

    for name, family in (("rate-scan", "rate"), ("sparsity-scan", "sparsity"),
                         ("kl-scan", "kl")):
        sp = sub.add_parser(name, help="experiment scan (%s)" % name)
        sp.add_argument("--config", required=True, help="experiment config JSON file")
        sp.add_argument("--out-csv")
        sp.add_argument("--out-json")
        sp.set_defaults(func=lambda a, fam=family: cmd_scan(a, fam))

    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
