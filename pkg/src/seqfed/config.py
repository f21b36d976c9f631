"""Flat key=value configuration files for the simulation CLI.

Format: one `key = value` pair per line, `#` starts a comment, blank lines
ignored.  List values are comma separated.  Unknown keys are rejected with
the offending name so typos fail loudly instead of silently running a
default grid.
"""
from __future__ import annotations

from .errors import ConfigError
from .experiment import ExperimentConfig
from .simdata import SimDesign

_BOOL_WORDS = {
    "true": True,
    "false": False,
    "yes": True,
    "no": False,
    "1": True,
    "0": False,
}

KNOWN_KEYS = (
    "beta_setup",
    "proportions",
    "covariates",
    "sites",
    "pool_size",
    "d1",
    "d2",
    "samplers",
    "replications",
    "alpha",
    "seed",
    "n0",
    "parallelism",
    "budget",
    "max_failure_fraction",
    "trace",
    "out",
)


def parse_mapping(text: str, source: str = "<config>") -> dict:
    mapping: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in mapping:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        mapping[key] = value
    return mapping


def _to_int(mapping: dict, key: str):
    try:
        return int(mapping[key])
    except ValueError:
        raise ConfigError(f"key {key!r}: expected an integer, got {mapping[key]!r}") from None


def _to_float(mapping: dict, key: str):
    try:
        return float(mapping[key])
    except ValueError:
        raise ConfigError(f"key {key!r}: expected a number, got {mapping[key]!r}") from None


def _to_float_list(mapping: dict, key: str) -> tuple:
    parts = [p.strip() for p in mapping[key].split(",") if p.strip()]
    if not parts:
        raise ConfigError(f"key {key!r}: expected a comma-separated list of numbers")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"key {key!r}: expected numbers, got {mapping[key]!r}") from None


def _to_bool(mapping: dict, key: str):
    word = mapping[key].lower()
    if word not in _BOOL_WORDS:
        raise ConfigError(f"key {key!r}: expected true/false, got {mapping[key]!r}")
    return _BOOL_WORDS[word]


_SAMPLER_ALIASES = {"aopt": "a_optimal", "a-optimal": "a_optimal"}


def build_config(mapping: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Turn a parsed key=value mapping (plus CLI overrides) into a run config."""
    merged = dict(mapping)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = str(value)
    mapping = merged

    design_kwargs: dict = {}
    if "beta_setup" in mapping:
        design_kwargs["beta_setup"] = mapping["beta_setup"]
    if "proportions" in mapping:
        design_kwargs["proportions"] = mapping["proportions"]
    if "covariates" in mapping:
        design_kwargs["covariates"] = mapping["covariates"]
    if "sites" in mapping:
        design_kwargs["n_sites"] = _to_int(mapping, "sites")
    if "pool_size" in mapping:
        design_kwargs["pool_size"] = _to_int(mapping, "pool_size")
    try:
        design = SimDesign(**design_kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    config_kwargs: dict = {"design": design}
    if "d1" in mapping:
        config_kwargs["d1_grid"] = _to_float_list(mapping, "d1")
    if "d2" in mapping:
        config_kwargs["d2_grid"] = _to_float_list(mapping, "d2")
    if "samplers" in mapping:
        names = []
        for part in mapping["samplers"].split(","):
            name = part.strip().lower()
            if not name:
                continue
            name = _SAMPLER_ALIASES.get(name, name)
            if name not in ("random", "a_optimal"):
                raise ConfigError(
                    f"key 'samplers': unknown sampler {part.strip()!r} "
                    "(choices: random, a_optimal)"
                )
            names.append(name)
        if not names:
            raise ConfigError("key 'samplers': expected at least one sampler name")
        config_kwargs["samplers"] = tuple(names)
    if "replications" in mapping:
        config_kwargs["replications"] = _to_int(mapping, "replications")
    if "alpha" in mapping:
        config_kwargs["alpha"] = _to_float(mapping, "alpha")
    if "seed" in mapping:
        config_kwargs["master_seed"] = _to_int(mapping, "seed")
    if "n0" in mapping:
        config_kwargs["n0"] = _to_int(mapping, "n0")
    if "parallelism" in mapping:
        word = mapping["parallelism"].strip().lower()
        config_kwargs["parallelism"] = "auto" if word == "auto" else _to_int(mapping, "parallelism")
    if "budget" in mapping:
        config_kwargs["budget_weights"] = _to_float_list(mapping, "budget")
    if "max_failure_fraction" in mapping:
        config_kwargs["max_failure_fraction"] = _to_float(mapping, "max_failure_fraction")
    if "trace" in mapping:
        config_kwargs["record_trace"] = _to_bool(mapping, "trace")
    if "out" in mapping:
        config_kwargs["output_dir"] = mapping["out"]

    try:
        return ExperimentConfig(**config_kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str, overrides: dict | None = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return build_config(parse_mapping(text, source=path), overrides)
