"""Command-line entry point: ``treebroadcast SUBCOMMAND --config PATH [flags]``.

Exit status is 0 on success, 1 when a certificate cannot be produced or does
not verify, and 2 for configuration errors (no output file is written).
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from datetime import datetime, timezone

import numpy as np

from . import certify as cz
from .broadcast import RNG_ID
from .channels import bsc, erasure_noise, mix_noise, power_noise, qsym
from .config import ExperimentConfig, parse_list, read_config
from .discrepancy import discrepancy_mc, discrepancy_of_atoms
from .errors import ConfigError, TreeBroadcastError
from .exact import antichain_atoms, level_atoms, max_tv, reconstruction_error
from .inference import (CSV_COLUMNS, census_separation, instance_hash, reconstruction_error_mc,
                        tv_mc)
from .trees import (TreeFamily, good_antichain_sequence, local_sums, min_antichain_sum,
                    validate_antichain)

EXACT_COLUMNS = ("depth", "atoms", "D", "tv_max", "reconstruction_error")
SWEEP_COLUMNS = ("delta", "regime", "param", "depth", "atoms", "D", "tv_max", "below_threshold")
ANTICHAIN_COLUMNS = ("depth", "lambda", "cutset_sum", "max_local_sum", "size", "members")

COMMANDS = {
    "certify": ("write a certificate for the configured channel and tree",
                "Output: certificate file with sections [channel] [tree] [regime] [norm] "
                "[constants] [threshold] [decay-log]."),
    "verify": ("re-check a certificate file from its own data", "Output: one line per check."),
    "exact": ("exact discrepancy and total variation per depth",
              "CSV columns: " + ",".join(EXACT_COLUMNS)),
    "simulate": ("Monte Carlo estimates at one depth", "CSV columns: " + ",".join(CSV_COLUMNS)),
    "sweep": ("exact grid over channel, noise parameter and depth",
              "CSV columns: " + ",".join(SWEEP_COLUMNS)),
    "antichain": ("minimal cutset sums and good antichains",
                  "CSV columns: " + ",".join(ANTICHAIN_COLUMNS)),
}


def _header(cfg: ExperimentConfig, command: str, timestamp: bool) -> list[str]:
    lines = [f"treebroadcast {command}", f"config_sha256={cfg.digest}", f"rng={RNG_ID}",
             f"seed={cfg.seed} streams={cfg.streams}"]
    if timestamp:
        lines.append(f"created={datetime.now(timezone.utc).isoformat(timespec='seconds')}")
    return lines


def _csv_text(header: list[str], columns, rows) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(columns)
    out.writerows(rows)
    return buf.getvalue()


def _g(x: float) -> str:
    return format(float(x), ".17g")


def _require(cfg: ExperimentConfig, *what):
    for name in what:
        if getattr(cfg, name) is None:
            raise ConfigError(f"this subcommand needs a [{name}] section")


def _arity(cfg: ExperimentConfig):
    sec = cfg.section("tree")
    return int(sec["arity"]) if sec.get("kind", "bary") == "bary" else None


def run_certify(cfg: ExperimentConfig, header) -> tuple[str, int]:
    _require(cfg, "channel", "tree")
    sec = cfg.section("certify")
    regime = sec.get("regime", cfg.section("noise").get("regime", "extra-steps"))
    if regime not in cz.REGIMES:
        raise ConfigError(f"[certify] regime must be one of {cz.REGIMES}")
    nu = parse_list(sec["nu"]) if "nu" in sec else None
    if regime == "mix" and nu is None:
        nu = np.full(cfg.channel.q, 1 / cfg.channel.q)
    arity = _arity(cfg)
    if arity is not None:
        cert = cz.certify_bary(cfg.channel, arity, regime, nu)
        depth = int(sec.get("verify_depth", "3"))
        if depth > 0:
            cert = cz.verify_decay(cert, depth, cfg.budget)
    else:
        lam2 = cfg.channel.lambda2 ** 2
        if "g" in sec:
            g = float(sec["g"])
        else:
            g = (1 / lam2 if lam2 > 0 else 1e6) - float(sec.get("margin", "0.25"))
        spec = sec.get("antichains", "dp")
        if spec == "dp":
            antichains = [min_antichain_sum(cfg.tree, g)[1]]
        else:
            antichains = [validate_antichain(cfg.tree, parse_list(part, int))
                          for part in spec.split(";") if part.strip()]
        cert = cz.certify_finite_tree(cfg.channel, cfg.tree, antichains, regime, g, nu,
                                      cfg.budget)
    return cz.dumps(cert, tuple(header)), 0


def _norm_growth(cfg):
    arity = _arity(cfg)
    return float(arity) if arity is not None else float(max(cfg.tree.max_degree, 1))


def run_exact(cfg: ExperimentConfig, header) -> tuple[str, int]:
    _require(cfg, "channel", "tree")
    norm = cz.reporting_norm(cfg.channel, _norm_growth(cfg))
    depths = parse_list(cfg.section("exact").get("depths", ""), int) or \
        list(range(cfg.tree.height + 1))
    arity = _arity(cfg)
    rows = []
    if arity is not None:
        levels = level_atoms(cfg.channel, cfg.noise, arity, max(depths), cfg.budget)
        picked = [(d, levels[d]) for d in depths]
    else:
        picked = []
        for d in depths:
            tree = cfg.tree.truncate(d)
            s = validate_antichain(tree, tree.level(d))
            picked.append((d, antichain_atoms(tree, cfg.channel, cfg.noise, s, cfg.budget)[0]))
    for d, atoms in picked:
        rows.append([d, len(atoms), _g(discrepancy_of_atoms(atoms, norm)), _g(max_tv(atoms)),
                     _g(reconstruction_error(atoms, cfg.channel.v))])
    return _csv_text(header, EXACT_COLUMNS, rows), 0


def run_simulate(cfg: ExperimentConfig, header) -> tuple[str, int]:
    _require(cfg, "channel", "tree")
    sec = cfg.section("simulate")
    depth = int(sec.get("depth", cfg.tree.height))
    n = int(sec.get("n_samples", "10000"))
    pair = parse_list(sec.get("pair", "0,1"), int)
    mom = cfg.extra.get("median_of_means", False)
    estimators = parse_list(sec.get("estimators", "tv"), str)
    tree = cfg.tree.truncate(depth)
    s = validate_antichain(tree, tree.level(depth))
    rows = []
    for name in estimators:
        if name == "tv":
            est = tv_mc(tree, cfg.channel, cfg.noise, s, pair[0], pair[1], n, cfg.seed,
                        cfg.streams, mom)
            rows.append(est.row())
        elif name == "reconstruction":
            rows.append(reconstruction_error_mc(tree, cfg.channel, cfg.noise, s, n, cfg.seed,
                                                cfg.streams, mom).row())
        elif name == "discrepancy":
            norm = cz.reporting_norm(cfg.channel, _norm_growth(cfg))
            rows.append(discrepancy_mc(tree, cfg.channel, cfg.noise, s, norm, n, cfg.seed,
                                       cfg.streams, mom).row())
        elif name == "census":
            res = census_separation(tree, cfg.channel, cfg.noise, n, cfg.seed, depth, cfg.streams)
            inst = instance_hash(tree, cfg.channel, cfg.noise, s)
            for (i, j), z in sorted(res.z.items()):
                rows.append([f"census_z[{i},{j}]", inst, str(n), _g(z), "nan", str(cfg.seed),
                             str(cfg.streams)])
    return _csv_text(header, CSV_COLUMNS, rows), 0


def _sweep_noise(channel, regime, param, nu):
    if regime == "extra-steps":
        return power_noise(channel, int(param))
    if regime == "mix":
        return mix_noise(np.full(channel.q, 1 / channel.q) if nu is None else nu, param)
    if regime == "erasure":
        return erasure_noise(channel.q, param)
    raise ConfigError(f"[sweep] regime must be one of {cz.REGIMES}")


def run_sweep(cfg: ExperimentConfig, header) -> tuple[str, int]:
    sec = cfg.section("sweep")
    family = sec.get("family", "bsc")
    q = int(sec.get("q", "2"))
    deltas = parse_list(sec.get("deltas", "0.3"))
    regime = sec.get("regime", "extra-steps")
    params = parse_list(sec.get("params", "0"))
    depths = parse_list(sec.get("depths", "0,1,2,3"), int)
    arity = int(sec.get("arity", "2"))
    nu = parse_list(sec["nu"]) if "nu" in sec else None
    if family not in ("bsc", "qsym"):
        raise ConfigError("[sweep] family must be bsc or qsym")
    rows = []
    for delta in deltas:
        channel = bsc(delta) if family == "bsc" else qsym(q, delta)
        norm = cz.reporting_norm(channel, arity)
        below = arity * channel.lambda2 ** 2 < 1 - cz.FEASIBILITY_TOL
        for param in params:
            noise = _sweep_noise(channel, regime, param, nu)
            levels = level_atoms(channel, noise, arity, max(depths), cfg.budget)
            for d in depths:
                a = levels[d]
                rows.append([_g(delta), regime, _g(param), d, len(a),
                             _g(discrepancy_of_atoms(a, norm)), _g(max_tv(a)), int(below)])
    return _csv_text(header, SWEEP_COLUMNS, rows), 0


def run_antichain(cfg: ExperimentConfig, header) -> tuple[str, int]:
    _require(cfg, "tree")
    sec = cfg.section("antichain")
    rows = []
    depths = parse_list(sec.get("depths", ""), int) or [cfg.tree.height]
    for lam in parse_list(sec.get("lambdas", "")):
        for d in depths:
            tree = cfg.tree.truncate(d)
            total, s = min_antichain_sum(tree, lam)
            local = max(local_sums(tree, s, lam).values())
            rows.append([d, _g(lam), _g(total), _g(local), len(s),
                         " ".join(str(x) for x in sorted(s.members))])
    if "g" in sec:
        g = float(sec["g"])
        arity = _arity(cfg)
        family = TreeFamily.bary(arity) if arity is not None else TreeFamily.finite(cfg.tree)
        targets = parse_list(sec.get("eps", "0.5"))
        for ga in good_antichain_sequence(family, g, targets, int(sec.get("depth_cap", "30"))):
            rows.append([ga.depth, _g(g), _g(ga.total), _g(ga.max_local), len(ga.antichain),
                         " ".join(str(x) for x in sorted(ga.antichain.members))])
    return _csv_text(header, ANTICHAIN_COLUMNS, rows), 0


RUNNERS = {"certify": run_certify, "exact": run_exact, "simulate": run_simulate,
           "sweep": run_sweep, "antichain": run_antichain}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment config file")
    common.add_argument("--seed", type=int, metavar="U64", help="override [run] seed")
    common.add_argument("--streams", type=int, metavar="N", help="override [run] streams")
    common.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
    common.add_argument("--no-timestamp", action="store_true",
                        help="omit the timestamp header line")
    common.add_argument("--budget", type=int, metavar="ATOMS", help="exact-engine atom budget")
    parser = argparse.ArgumentParser(prog="treebroadcast", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (summary, columns) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=summary, description=summary,
                           epilog=columns)
        if name == "verify":
            p.add_argument("certificate", help="certificate file to check")
    return parser


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _verify(args) -> int:
    budget = args.budget or cz.DEFAULT_BUDGET
    try:
        report = cz.verify_file(args.certificate, budget)
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: unreadable certificate: {exc}", file=sys.stderr)
        return 2
    lines = [f"ok   {name}" if ok else f"FAIL {name}: {detail}" for name, ok, detail in report.checks]
    lines.append("certificate verified" if report.ok else "certificate FAILED verification")
    _emit("\n".join(lines) + "\n", args.out)
    return 0 if report.ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        return _verify(args)
    try:
        if not args.config:
            raise ConfigError("--config is required")
        cfg = read_config(args.config)
        for key in ("seed", "streams", "budget", "out"):
            value = getattr(args, key)
            if value is not None:
                setattr(cfg, key, value)
        if cfg.streams < 1 or cfg.budget < 1 or not 0 <= cfg.seed < 1 << 64:
            raise ConfigError("seed, streams and budget must be in range")
        header = _header(cfg, args.command, not args.no_timestamp)
        text, code = RUNNERS[args.command](cfg, header)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TreeBroadcastError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    _emit(text, cfg.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
