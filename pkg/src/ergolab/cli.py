"""Command-line front end.

Exit status: 0 when every criterion passes, 2 when a criterion fails,
1 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import os
import sys
import time


from . import config as cfgmod
from . import empirical, verify
from .kernels import BandwidthSchedule, KernelError, make_kernel
from .models import ModelError
from .paths import (PathGrid, SimulationError, dump_path, simulate_batch, simulate_planar_bm,
                    time_change_isotropic)

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def _simulate(cfg, model):
    states = simulate_batch(model, cfg["dt"], cfg["t"], cfg["seed"], cfg["replicates"],
                            init=cfg["init"])
    rep = verify.ExperimentReport("simulate", cfg["seed"], {})
    n = states.shape[1] - 1
    horizon = n * cfg["dt"]
    rep.summary = {"n_steps": n, "final_mean": states[:, -1].mean(axis=0).tolist(),
                   "time_mean": states[:, :-1].mean(axis=(0, 1)).tolist()}
    rep.samples = [empirical.FunctionalSample("G", float(v), horizon, 0.0, k) for v, k in
                   zip(empirical.time_averages(lambda x: x[:, 0], states, cfg["dt"]),
                       verify._replicate_keys(cfg["seed"], range(cfg["replicates"])))]
    rep.paths = [PathGrid(model.dim, float(cfg["dt"]), float(cfg["t"]), states[r].copy(),
                          cfg["seed"], str(cfg["init"]), r) for r in range(cfg["replicates"])]
    return rep


def _kernel(cfg, model):
    return make_kernel(model.dim, cfg["kernel_order"])


def _fn(cfg, model, key="g"):
    return cfgmod.lookup_function(model, cfg[key], cfg["support_half_width"])


def run(subcommand: str, cfg: dict) -> verify.ExperimentReport:
    """Execute one experiment from a resolved config."""
    model = cfgmod.build_model(cfg["model"])
    seed = cfg["seed"]
    if subcommand == "simulate":
        return _simulate(cfg, model)
    if subcommand == "clt":
        g2 = _fn(cfg, model, "g2") if cfg["g2"] else None
        return verify.mc_clt(model, _fn(cfg, model), cfg["t"], cfg["dt"], cfg["replicates"], seed,
                             g2=g2, ks_max=cfg["ks_max"], var_rtol=cfg["var_rtol"],
                             dynkin_rtol=cfg["dynkin_rtol"], cov_atol=cfg["cov_atol"])
    if subcommand == "clt-smoothed":
        sch = None
        if cfg["h"] is None:
            s = cfg["schedule"]
            sch = BandwidthSchedule(s["variant"], model.dim, float(s["beta"]), s["eta"])
        return verify.mc_clt_smoothed(model, _fn(cfg, model), _kernel(cfg, model), sch, cfg["t"],
                                      cfg["dt"], cfg["replicates"], seed, h=cfg["h"],
                                      ks_max=cfg["ks_max"], ks_two_max=cfg["ks_two_max"],
                                      var_rtol=cfg["var_rtol"])
    if subcommand == "bernstein":
        g = _fn(cfg, model)
        if cfg["g_is_poisson"]:
            return verify.bernstein_check(model, None, cfg["t"], cfg["dt"], cfg["replicates"],
                                          cfg["thresholds"], seed, poisson=g)
        return verify.bernstein_check(model, g, cfg["t"], cfg["dt"], cfg["replicates"],
                                      cfg["thresholds"], seed)
    if subcommand == "zeta":
        y = cfg["y"] if cfg["y"] is not None else [0.0] * model.dim
        return verify.zeta_scaling(model, cfg["t_grid"], cfg["delta_grid"], cfg["dt"],
                                   cfg["replicates"], y, seed, cfg["max_ratio"])
    if subcommand == "occupation":
        return verify.occupation_scaling_planar(cfg["t_grid"], cfg["r_grid"], cfg["dt"],
                                                cfg["replicates"], cfg["box"], seed,
                                                cfg["max_ratio"], cfg["trend_floor"])
    if subcommand == "timechange":
        base = simulate_planar_bm(cfg["dt"], cfg["t"], seed, replicate=cfg["replicate"])
        record = time_change_isotropic("exp", base)
        return verify.time_changed_occupation(record, cfg["box"], cfg["r"], cfg["grid_step"],
                                              cfg["rtol"], seed)
    if subcommand == "bias-audit":
        return verify.smoothing_bias_audit(model, _fn(cfg, model), _kernel(cfg, model),
                                           cfg["h_grid"], cfg["t"], cfg["dt"], cfg["replicates"],
                                           seed, max_ratio=cfg["max_ratio"])
    raise cfgmod.ConfigError(f"unknown subcommand {subcommand!r}")


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 is reserved for criteria failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ergolab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in cfgmod.SUBCOMMANDS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("-c", "--config", help="YAML config file")
        sp.add_argument("--seed", type=int, help="base seed (default 0)")
        sp.add_argument("-o", "--out", help=f"output directory (overrides ${cfgmod.OUTPUT_ENV})")
        sp.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. --set t=20 --set model.sigma=2")
        sp.add_argument("--show-config", action="store_true",
                        help="print the resolved config and exit")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        file_cfg = cfgmod.load_file(args.config) if args.config else {}
        overrides = list(args.set)
        if args.seed is not None:
            overrides.append(("seed", args.seed))
        cfg = cfgmod.resolve(args.subcommand, file_cfg, overrides)
        if args.show_config:
            import yaml
            print(yaml.safe_dump(cfg, sort_keys=True), end="")
            return EXIT_PASS
        out = cfgmod.output_dir(cfg, args.out)
        clock = time.perf_counter()
        report = run(args.subcommand, cfg)
    except (cfgmod.ConfigError, verify.PreconditionError, ModelError, KernelError,
            SimulationError, OverflowError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    # echo the resolved config; the output location is not part of the experiment
    report.config["run"] = {k: v for k, v in cfg.items() if k != "output_dir"}
    report.config["run"]["subcommand"] = args.subcommand
    json_path, csv_path = report.write(out)
    for path in getattr(report, "paths", []):
        with open(os.path.join(out, f"simulate_{cfg['seed']}_r{path.replicate}.bin"), "wb") as fh:
            dump_path(path, fh)
    elapsed = time.perf_counter() - clock
    for name, ok in report.criteria.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    for name, on in report.flags.items():
        if on:
            print(f"FLAG  {name}")
    print(f"seed={report.seed}  wrote {json_path} and {csv_path}  ({elapsed:.1f} s)")
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
