"""Command-line pipeline driver.

Subcommands mirror the pipeline stages; every stage reads its upstream
artifacts from the output directory, so deleting one artifact and rerunning
its stage reproduces it byte for byte.

Exit codes: 0 success, 2 configuration error, 3 numerical error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from quantcal import basis as basis_mod
from quantcal import design as design_mod
from quantcal import pipeline as pl
from quantcal import simulator as sim_mod
from quantcal.gp import ConditioningError
from quantcal.mcmc import PosteriorDraws
from quantcal.quantiles import QuantileEnsemble, load_quantiles_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _load_config(args) -> pl.PipelineConfig:
    base = pl.PipelineConfig.desk_defaults() if args.preset == "desk" else pl.PipelineConfig()
    if args.config is not None:
        with open(args.config) as fh:
            raw = yaml.safe_load(fh) or {}
        if not isinstance(raw, dict):
            raise pl.ConfigError("config file must hold a mapping")
        merged = base.to_dict()
        merged.update(raw)
        base = pl.PipelineConfig.from_dict(merged)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["outdir"] = args.out
    return dataclasses.replace(base, **overrides) if overrides else base


def _outdir(cfg: pl.PipelineConfig) -> Path:
    out = Path(cfg.outdir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_quantiles(cfg: pl.PipelineConfig, outdir: Path) -> QuantileEnsemble:
    design = design_mod.load_design(outdir / "design.csv", cfg.space())
    aug = design_mod.augment_with_quantiles(design, cfg.alphas)
    qe = load_quantiles_csv(outdir / "quantiles.csv")
    return QuantileEnsemble(qe.eta, qe.alphas, qe.m, aug)


def _cmd_run_all(cfg, args):
    manifest = pl.cmd_run_all(cfg)
    print(json.dumps({"stages": list(manifest["stages"])}))


def _cmd_design(cfg, args):
    pl.stage_design(cfg, _outdir(cfg))


def _cmd_simulate(cfg, args):
    outdir = _outdir(cfg)
    design = design_mod.load_design(outdir / "design.csv", cfg.space())
    pl.stage_ensemble(cfg, outdir, design)


def _cmd_quantiles(cfg, args):
    outdir = _outdir(cfg)
    design = design_mod.load_design(outdir / "design.csv", cfg.space())
    ens = sim_mod.load_ensemble_npz(outdir / "ensemble.npz")
    pl.stage_quantiles(cfg, outdir, ens, design)


def _cmd_fit(cfg, args):
    outdir = _outdir(cfg)
    qe = _load_quantiles(cfg, outdir)
    basis, disc = pl.stage_basis(cfg, outdir, qe)
    pl.stage_fit(cfg, outdir, qe, basis, disc)


def _cmd_calibrate(cfg, args):
    outdir = _outdir(cfg)
    qe = _load_quantiles(cfg, outdir)
    basis, disc = basis_mod.load_basis_json(outdir / "basis.json")
    obs = pl._load_observations(cfg)
    pl.stage_calibrate(cfg, outdir, qe, basis, disc, obs)


def _cmd_predict(cfg, args):
    outdir = _outdir(cfg)
    qe = _load_quantiles(cfg, outdir)
    basis, disc = basis_mod.load_basis_json(outdir / "basis.json")
    draws = PosteriorDraws.from_csv(
        outdir / "calibration_draws.csv",
        p_inputs=len(cfg.space_names) + 1, p_eta=cfg.p_eta, p_delta=disc.p_delta,
    )
    pl.stage_predict(cfg, outdir, draws, qe, basis, disc)


def _cmd_holdout(cfg, args):
    indices = []
    if args.holdout_indices:
        indices = [int(tok) for tok in args.holdout_indices.split(",") if tok.strip() != ""]
    report = pl.cmd_holdout(cfg, indices)
    print(json.dumps({"mean_coverage": report["mean_coverage"],
                      "holdout_indices": report["holdout_indices"]}))


def _cmd_synthetic_truth(cfg, args):
    report = pl.cmd_synthetic_truth(cfg, flat_likelihood=args.flat_likelihood)
    brief = {name: {"covered": p["covered"], "width": round(p["width"], 4)}
             for name, p in report["parameters"].items()}
    print(json.dumps(brief))


COMMANDS = {
    "run-all": _cmd_run_all,
    "design": _cmd_design,
    "simulate": _cmd_simulate,
    "quantiles": _cmd_quantiles,
    "fit": _cmd_fit,
    "calibrate": _cmd_calibrate,
    "predict": _cmd_predict,
    "holdout": _cmd_holdout,
    "synthetic-truth": _cmd_synthetic_truth,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quantcal",
        description="Calibrate a stochastic epidemic simulator with quantile-augmented GP emulation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="YAML pipeline configuration")
        p.add_argument("--preset", choices=["paper-scale", "desk"], default="paper-scale",
                       help="defaults used for keys the config omits")
        p.add_argument("--seed", type=int, default=None, help="override the base seed")
        p.add_argument("--out", default=None, help="override the output directory")
        if name == "holdout":
            p.add_argument("--holdout-indices", default="",
                           help="comma-separated design indices to hold out")
        if name == "synthetic-truth":
            p.add_argument("--flat-likelihood", action="store_true",
                           help="disable the likelihood (prior-recovery control)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    stage = args.command
    try:
        cfg = _load_config(args)
        COMMANDS[stage](cfg, args)
        return EXIT_OK
    except (ConditioningError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"[{stage}] numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"[{stage}] i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (pl.ConfigError, ValueError, yaml.YAMLError) as exc:
        print(f"[{stage}] config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
