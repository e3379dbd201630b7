"""Experiment configuration: flat ``key = value`` lines grouped in ``[sections]``.

Everything is parsed and validated before any computation starts. Unknown
sections or keys raise :class:`ConfigError`.

Example::

    [channel]
    preset = bsc(0.3)

    [tree]
    kind = bary
    arity = 2
    depth = 4

    [noise]
    regime = mix
    eps = 0.5
    nu = 0.5, 0.5
"""

from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, field

import numpy as np

from .channels import (Channel, NoiseChannel, bsc, build_channel, custom_noise, erasure_noise,
                       identity_noise, mix_noise, power_noise, qsym)
from .errors import ConfigError, TreeBroadcastError
from .trees import Tree, TreeSpec, build_tree, read_parent_file

SCHEMA = {
    "channel": {"preset", "matrix"},
    "tree": {"kind", "arity", "depth", "levels", "parents", "parent_file"},
    "noise": {"regime", "k", "eps", "nu", "matrix"},
    "run": {"seed", "streams", "budget", "out"},
    "certify": {"regime", "nu", "g", "verify_depth", "antichains", "margin"},
    "exact": {"depths"},
    "simulate": {"estimators", "n_samples", "depth", "pair", "median_of_means"},
    "sweep": {"family", "q", "deltas", "params", "depths", "arity", "regime", "nu"},
    "antichain": {"lambdas", "depths", "g", "eps", "depth_cap"},
}
ESTIMATORS = ("tv", "reconstruction", "discrepancy", "census")
_PRESET = re.compile(r"^\s*(bsc|qsym)\s*\(([^)]*)\)\s*$")


def parse_matrix(text: str) -> np.ndarray:
    """Rows separated by ``;``, entries by ``,`` or whitespace."""
    try:
        rows = [[float(x) for x in re.split(r"[,\s]+", row.strip()) if x]
                for row in text.split(";") if row.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad matrix {text!r}: {exc}") from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise ConfigError(f"matrix rows differ in length: {text!r}")
    return np.array(rows)


def parse_list(text: str, kind=float) -> list:
    try:
        return [kind(x) for x in re.split(r"[,\s]+", text.strip()) if x]
    except ValueError as exc:
        raise ConfigError(f"bad list {text!r}: {exc}") from None


def parse_channel(section) -> Channel:
    if ("preset" in section) == ("matrix" in section):
        raise ConfigError("[channel] needs exactly one of preset, matrix")
    try:
        if "matrix" in section:
            return build_channel(parse_matrix(section["matrix"]))
        m = _PRESET.match(section["preset"])
        if not m:
            raise ConfigError(f"unknown channel preset {section['preset']!r}")
        args = parse_list(m.group(2))
        if m.group(1) == "bsc" and len(args) == 1:
            return bsc(args[0])
        if m.group(1) == "qsym" and len(args) == 2:
            return qsym(int(args[0]), args[1])
        raise ConfigError(f"wrong number of preset arguments in {section['preset']!r}")
    except ConfigError:
        raise
    except (TreeBroadcastError, ValueError) as exc:
        raise ConfigError(f"[channel]: {exc}") from None


def parse_tree(section) -> Tree:
    kind = section.get("kind", "bary")
    try:
        if kind == "bary":
            return build_tree(TreeSpec("bary", arity=int(section["arity"]),
                                       depth=int(section["depth"])))
        if kind == "spherical":
            return build_tree(TreeSpec("spherical", levels=tuple(parse_list(section["levels"], int))))
        if kind == "explicit":
            if "parent_file" in section:
                return read_parent_file(section["parent_file"])
            parents = [-1 if x in ("-", "-1") else int(x)
                       for x in re.split(r"[,\s]+", section["parents"].strip()) if x]
            return build_tree(TreeSpec("explicit", parents=tuple(parents)))
    except KeyError as exc:
        raise ConfigError(f"[tree] kind={kind} needs key {exc.args[0]}") from None
    except (TreeBroadcastError, ValueError, OSError) as exc:
        raise ConfigError(f"[tree]: {exc}") from None
    raise ConfigError(f"unknown tree kind {kind!r}")


def parse_noise(section, channel: Channel) -> NoiseChannel:
    regime = section.get("regime", "none")
    try:
        if regime == "none":
            return identity_noise(channel.q)
        if regime == "extra-steps":
            return power_noise(channel, int(section["k"]))
        if regime == "mix":
            nu = parse_list(section["nu"]) if "nu" in section else np.full(channel.q, 1 / channel.q)
            return mix_noise(nu, float(section["eps"]))
        if regime == "erasure":
            return erasure_noise(channel.q, float(section["eps"]))
        if regime == "custom":
            return custom_noise(parse_matrix(section["matrix"]))
    except KeyError as exc:
        raise ConfigError(f"[noise] regime={regime} needs key {exc.args[0]}") from None
    except (TreeBroadcastError, ValueError) as exc:
        raise ConfigError(f"[noise]: {exc}") from None
    raise ConfigError(f"unknown noise regime {regime!r}")


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass
class ExperimentConfig:
    sections: dict
    digest: str
    channel: Channel | None = None
    tree: Tree | None = None
    noise: NoiseChannel | None = None
    seed: int = 0
    streams: int = 1
    budget: int = 1_000_000
    out: str | None = None
    extra: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return self.sections.get(name, {})


def _number(section: str, key: str, text: str, kind):
    try:
        return kind(text)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: bad value {text!r}") from None


def load_config(text: str) -> ExperimentConfig:
    """Parse and validate a configuration document."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    sections = {}
    for name in cp.sections():
        if name not in SCHEMA:
            raise ConfigError(f"unknown section [{name}]")
        unknown = set(cp[name]) - SCHEMA[name]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
        sections[name] = dict(cp[name])
    cfg = ExperimentConfig(sections, hashlib.sha256(text.encode()).hexdigest()[:16])
    if "channel" in sections:
        cfg.channel = parse_channel(sections["channel"])
    if "tree" in sections:
        cfg.tree = parse_tree(sections["tree"])
    if cfg.channel is not None:
        cfg.noise = parse_noise(sections.get("noise", {}), cfg.channel)
    run = sections.get("run", {})
    cfg.seed = _number("run", "seed", run.get("seed", "0"), int)
    cfg.streams = _number("run", "streams", run.get("streams", "1"), int)
    cfg.budget = _number("run", "budget", run.get("budget", "1000000"), int)
    cfg.out = run.get("out")
    sim = sections.get("simulate", {})
    estimators = parse_list(sim.get("estimators", "tv"), str)
    bad = set(estimators) - set(ESTIMATORS)
    if bad:
        raise ConfigError(f"unknown estimator(s): {', '.join(sorted(bad))}")
    if "median_of_means" in sim:
        cfg.extra["median_of_means"] = _bool(sim["median_of_means"])
    for name, sec in sections.items():
        for key, value in sec.items():
            if key in {"depth", "verify_depth", "n_samples", "arity", "q", "depth_cap"}:
                _number(name, key, value, int)
            elif key in {"g", "margin"}:
                _number(name, key, value, float)
            elif key in {"depths", "pair"}:
                parse_list(value, int)
            elif key in {"lambdas", "deltas", "params"} or (name == "antichain" and key == "eps"):
                parse_list(value, float)
    if cfg.seed < 0 or cfg.seed >= 1 << 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if cfg.streams < 1:
        raise ConfigError("streams must be positive")
    return cfg


def read_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return load_config(text)
