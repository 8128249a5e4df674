"""Command-line interface.

Subcommands: ``prior-sample``, ``fit``, ``simulate``, ``birds`` and ``check``.
Settings resolve as flags, then a JSON ``--config`` file, then built-in
defaults. Exit status is 0 on success, 1 for invalid input or configuration
and 2 when a computation fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import birds as birds_mod
from . import checks
from .distributions import RngStream
from .errors import ConfigError, CovPriorError
from .likelihood import Dataset
from .priors import KINDS, POSTERIOR_INFERENCE, PRIOR_STUDY, canonical_kind, default_spec, prior_sample_marginals
from .samplers.fit import ChainConfig, nuts_fit, rho_label
from .simulation import DimGrid, ScenarioGrid, bias_summary, default_grid, resolve_jobs, run_grid, study_prior, write_results_csv

log = logging.getLogger("covprior")

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2

CHAIN_KEYS = ("chains", "warmup", "samples", "target_accept", "max_tree_depth")

DEFAULTS = {
    "common": {"seed": 0, "out": "covprior_out", "verbose": False},
    "chain": {"chains": 3, "warmup": 1000, "samples": 1000, "target_accept": 0.8, "max_tree_depth": 10},
    "prior-sample": {"priors": ",".join(KINDS), "d": 2, "n": 1000, "mode": PRIOR_STUDY},
    "fit": {"priors": ",".join(KINDS), "data": None, "header": False},
    "simulate": {"priors": ",".join(KINDS), "d": None, "n": None, "sigma": None, "rho": None,
                 "replicates": None, "full": False, "jobs": None},
    "birds": {"priors": ",".join(KINDS + ("iwsc",)), "counts": None, "synth": False, "mode": "pairwise",
              "responses": "total,mean"},
    "check": {"full": False},
}


@dataclass
class RunConfig:
    """Fully resolved settings for one invocation."""

    command: str
    seed: int
    out: str
    options: dict = field(default_factory=dict)
    chain: ChainConfig | None = None

    def to_dict(self):
        d = {"command": self.command, "seed": self.seed, "out": self.out, **self.options}
        if self.chain is not None:
            d["chain"] = asdict(self.chain)
        return d

    def comment(self):
        return "covprior " + json.dumps(self.to_dict(), sort_keys=True)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _csv_list(text, conv=str):
    return [conv(x.strip()) for x in str(text).split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="covprior", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def common(sp, chain=True):
        sp.add_argument("--config", help="JSON file of settings (flags take precedence)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--verbose", action="store_true", default=None)
        if chain:
            sp.add_argument("--chains", type=int)
            sp.add_argument("--warmup", type=int)
            sp.add_argument("--samples", type=int)
            sp.add_argument("--target-accept", dest="target_accept", type=float)
            sp.add_argument("--max-tree-depth", dest="max_tree_depth", type=int)

    sp = sub.add_parser("prior-sample", help="direct prior draws of (sigma, rho)")
    common(sp, chain=False)
    sp.add_argument("--prior", "--priors", dest="priors")
    sp.add_argument("--d", type=int)
    sp.add_argument("--n", type=int, help="number of draws per prior")
    sp.add_argument("--mode", choices=(PRIOR_STUDY, POSTERIOR_INFERENCE))

    sp = sub.add_parser("fit", help="fit one dataset under one or more priors")
    common(sp)
    sp.add_argument("--prior", "--priors", dest="priors")
    sp.add_argument("--data", help="CSV of observations, one row each")
    sp.add_argument("--header", action="store_true", default=None)

    sp = sub.add_parser("simulate", help="run the scenario grid")
    common(sp)
    sp.add_argument("--prior", "--priors", dest="priors")
    sp.add_argument("--d", type=int)
    sp.add_argument("--n", help="comma-separated sample sizes")
    sp.add_argument("--sigma", help="comma-separated standard deviations")
    sp.add_argument("--rho", help="comma-separated correlations")
    sp.add_argument("--replicates", type=int)
    sp.add_argument("--full", action="store_true", default=None, help="add the 10-d scenarios")
    sp.add_argument("--jobs", type=int)

    sp = sub.add_parser("birds", help="posterior correlations for bird counts")
    common(sp)
    sp.add_argument("--prior", "--priors", dest="priors")
    sp.add_argument("--counts", help="count CSV: year, species..., optional surveys")
    sp.add_argument("--synth", action="store_true", default=None, help="use the reference synthetic table")
    sp.add_argument("--mode", choices=("pairwise", "joint", "both"))
    sp.add_argument("--responses")

    sp = sub.add_parser("check", help="gradient, push-forward and conjugacy self-checks")
    common(sp, chain=False)
    sp.add_argument("--full", action="store_true", default=None, help="acceptance-size checks")
    return p


def resolve(argv) -> RunConfig:
    args = vars(build_parser().parse_args(argv))
    cmd = args.pop("command")
    config_path = args.pop("config")
    file_cfg = {}
    if config_path:
        try:
            with open(config_path) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
    allowed = set(args)
    unknown = set(file_cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys for {cmd}: {sorted(unknown)}")
    defaults = {**DEFAULTS["common"], **DEFAULTS[cmd]}
    if cmd not in ("prior-sample", "check"):
        defaults.update(DEFAULTS["chain"])
    merged = {}
    for key in allowed:
        if args[key] is not None:
            merged[key] = args[key]
        elif key in file_cfg:
            merged[key] = file_cfg[key]
        else:
            merged[key] = defaults.get(key)
    seed = int(merged.pop("seed"))
    out = str(merged.pop("out"))
    chain = None
    if cmd not in ("prior-sample", "check"):
        chain = ChainConfig(
            num_chains=int(merged.pop("chains")),
            warmup_iters=int(merged.pop("warmup")),
            sample_iters=int(merged.pop("samples")),
            seed=seed,
            target_accept=float(merged.pop("target_accept")),
            max_tree_depth=int(merged.pop("max_tree_depth")),
        )
    cfg = RunConfig(cmd, seed, out, merged, chain)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    o = cfg.options
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if "priors" in o:
        conv = study_prior if cfg.command in ("simulate", "birds") else canonical_kind
        o["priors"] = ",".join(conv(p) for p in _csv_list(o["priors"]))
        if not o["priors"]:
            raise ConfigError("no priors given")
    if cfg.command == "prior-sample":
        if int(o["d"]) < 2 or int(o["n"]) < 1:
            raise ConfigError("prior-sample needs d >= 2 and n >= 1")
    if cfg.command == "fit" and not o.get("data"):
        raise ConfigError("fit needs --data")
    if cfg.command == "birds" and not (o.get("synth") or o.get("counts")):
        raise ConfigError("birds needs --counts or --synth")
    if cfg.command == "simulate":
        o["jobs"] = resolve_jobs(o.get("jobs"))
        for key, conv in (("n", int), ("sigma", float), ("rho", float)):
            if o.get(key) is not None:
                o[key] = _number_list(o[key], conv)


def _number_list(value, conv):
    items = value if isinstance(value, (list, tuple)) else _csv_list(value)
    try:
        return [conv(x) for x in items]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"expected comma-separated numbers, got {value!r}") from exc


class OutputDir:
    """Creates files only inside one directory, each starting with a config comment."""

    def __init__(self, path, comment):
        self.root = os.path.realpath(path)
        self.comment = comment
        os.makedirs(self.root, exist_ok=True)

    def path(self, name):
        p = os.path.realpath(os.path.join(self.root, name))
        if os.path.commonpath([p, self.root]) != self.root:
            raise ConfigError(f"refusing to write outside {self.root}: {name}")
        return p

    def open(self, name):
        fh = open(self.path(name), "w", newline="")
        fh.write(f"# {self.comment}\n")
        return fh


def cmd_prior_sample(cfg: RunConfig, out: OutputDir):
    o = cfg.options
    d, n = int(o["d"]), int(o["n"])
    pairs = list(zip(*np.triu_indices(d, k=1)))
    with out.open("prior_samples.csv") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["prior", "draw"] + [f"sigma{i + 1}" for i in range(d)] + [rho_label(i, j) for i, j in pairs])
        for k, kind in enumerate(_csv_list(o["priors"])):
            spec = default_spec(kind, d, o["mode"])
            s, R = prior_sample_marginals(spec, RngStream(cfg.seed).split(6).split(k), n)
            for t in range(n):
                rho = [R[t, i, j] for i, j in pairs]
                w.writerow([kind, t] + [f"{x:.10g}" for x in s[t]] + [f"{x:.10g}" for x in rho])
    return EXIT_OK


def load_data(path, header=False) -> Dataset:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read data {path}: {exc}") from exc
    return Dataset.from_csv(text, header=header)


def cmd_fit(cfg: RunConfig, out: OutputDir):
    o = cfg.options
    data = load_data(o["data"], bool(o["header"]))
    specs = [default_spec(kind, data.d, POSTERIOR_INFERENCE) for kind in _csv_list(o["priors"])]
    for k, spec in enumerate(specs):
        log.info("fitting %s", spec.kind)
        report = nuts_fit(spec, data, cfg.chain, RngStream(cfg.seed).split(7).split(k))
        with out.open(f"fit_{spec.kind}.json") as fh:
            fh.write(report.to_json() + "\n")
        with out.open(f"draws_{spec.kind}.csv") as fh:
            fh.write(report.draws.to_csv())
    return EXIT_OK


def build_grid(o) -> ScenarioGrid:
    priors = tuple(_csv_list(o["priors"]))
    full = bool(o["full"])
    overrides = any(o[k] is not None for k in ("d", "n", "sigma", "rho", "replicates"))
    if not overrides:
        return default_grid(full=full, priors=priors)
    base = default_grid(full=True, priors=priors).dims
    dims = [int(o["d"])] if o["d"] is not None else sorted(base) if full else [2]
    grid = {}
    for d in dims:
        g = base.get(d, base[2])
        grid[d] = DimGrid(
            tuple(o["n"]) if o["n"] is not None else g.n,
            tuple(o["sigma"]) if o["sigma"] is not None else g.sigma,
            tuple(o["rho"]) if o["rho"] is not None else g.rho,
            int(o["replicates"]) if o["replicates"] is not None else g.replicates,
        )
    return ScenarioGrid(grid, priors)


def cmd_simulate(cfg: RunConfig, out: OutputDir):
    o = cfg.options
    grid = build_grid(o)

    def progress(r):
        log.info("d=%s n=%s sigma=%s rho=%s rep=%s %s %s", r.d, r.n, r.sigma, r.rho, r.replicate, r.prior,
                 r.error or f"{r.runtime_s:.1f}s")

    results = run_grid(grid, cfg.chain, jobs=o["jobs"], progress=progress)
    with out.open("simulation_results.csv") as fh:
        write_results_csv(results, fh)
    failed = [r for r in results if r.error]
    ok = [r for r in results if not r.error]
    if ok:
        with out.open("bias_summary.csv") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["d", "n", "sigma", "rho", "prior", "replicates", "rho_bias", "sigma_bias", "cov_bias"])
            for b in bias_summary(ok):
                w.writerow([b.d, b.n, b.sigma, b.rho, b.prior, b.replicates,
                            f"{b.rho_bias:.10g}", f"{b.sigma_bias:.10g}", f"{b.cov_bias:.10g}"])
    if failed:
        with out.open("failed_cells.csv") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["d", "n", "sigma", "rho", "replicate", "prior", "error"])
            for r in failed:
                w.writerow([r.d, r.n, r.sigma, r.rho, r.replicate, r.prior, r.error])
        print(f"{len(failed)} of {len(results)} cells failed; see failed_cells.csv", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_birds(cfg: RunConfig, out: OutputDir):
    o = cfg.options
    if o.get("counts"):
        try:
            with open(o["counts"]) as fh:
                table = birds_mod.load_counts(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read counts {o['counts']}: {exc}") from exc
    else:
        # the fixed-seed reference table, independent of --seed
        table = birds_mod.synth_counts()
        with out.open("bird_counts.csv") as fh:
            fh.write(table.to_csv())
    modes = ("pairwise", "joint") if o["mode"] == "both" else (o["mode"],)
    responses = tuple(_csv_list(o["responses"]))
    if not set(responses) <= {"total", "mean"}:
        raise ConfigError("responses must be drawn from total,mean")
    results = []
    for mode in modes:
        results += birds_mod.correlation_study(table, _csv_list(o["priors"]), mode, cfg.chain, responses)
    with out.open("bird_correlations.csv") as fh:
        birds_mod.write_study_csv(results, fh)
    failed = [r for r in results if r.error]
    if failed:
        print(f"{len(failed)} pair fits failed", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_check(cfg: RunConfig, out: OutputDir):
    lines = []

    def progress(r):
        lines.append(r.line())
        print(r.line(), flush=True)

    results = checks.run_checks(cfg.seed, quick=not cfg.options["full"], progress=progress)
    with out.open("check_report.txt") as fh:
        fh.write("\n".join(lines) + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


COMMANDS = {
    "prior-sample": cmd_prior_sample,
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "birds": cmd_birds,
    "check": cmd_check,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = resolve(argv)
        out = OutputDir(cfg.out, cfg.comment())
    except (CovPriorError, ValueError) as exc:
        print(f"covprior: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if cfg.options.get("verbose") else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return COMMANDS[cfg.command](cfg, out)
    except (ConfigError, ValueError) as exc:
        # bad input discovered while loading it (unreadable or malformed files)
        print(f"covprior: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - any failure during computation maps to exit 2
        print(f"covprior: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
