"""Run configuration: JSON schema, defaults, validation, flag overrides.

A config file is a nested JSON object; every key is validated against the
schema below and errors name the full dotted path. The fully resolved
config (defaults applied) is what manifests embed, and re-running from it
reproduces the original run in deterministic mode.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass

from .coord import CoordConfig
from .engine import PREFETCHER_KINDS, SimConfig
from .evalq import RewardScheme
from .memhier import CacheConfig, DramConfig, MemHierConfig
from .rl import DEFAULT_ACTION_DELTAS, LearnParams, QVStoreGeometry, RlConfig
from .trace import SYNTH_KINDS, SyntheticSpec

SEED_ENV_VAR = "CRLSIM_SEED"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key path."""


def _num(kind):
    return {"type": kind}


def _choice(*values):
    return {"type": str, "choices": values}


# leaf spec: {"type": ..., optional "choices"}; nested dicts are sections
_SCHEMA = {
    "sim": {
        "n_cores": _num(int),
        "warmup_events": _num(int),
        "sim_events": _num(int),
        "prefetcher": _choice(*PREFETCHER_KINDS),
        "seed": _num(int),
        "execution": _choice("deterministic", "threaded"),
        "issue_on_l2_hit": _num(bool),
    },
    "cache": {
        "line_bytes": _num(int),
        "prefetch_target": _choice("llc", "l2"),
        "l1": {"size_bytes": _num(int), "associativity": _num(int), "latency_cycles": _num(int)},
        "l2": {"size_bytes": _num(int), "associativity": _num(int), "latency_cycles": _num(int)},
        "llc": {"size_bytes": _num(int), "associativity": _num(int), "latency_cycles": _num(int)},
    },
    "dram": {
        "service_latency": _num(int),
        "min_gap": _num(int),
    },
    "rl": {
        "alpha": _num(float),
        "gamma": _num(float),
        "epsilon": _num(float),
        "action_table": {"type": list},
        "quantized": _num(bool),
    },
    "qvstore": {
        "n_vaults": _num(int),
        "planes_per_vault": _num(int),
        "feature_dim": _num(int),
        "action_dim": _num(int),
        "q_width_bits": _num(int),
    },
    "eq": {"capacity": _num(int)},
    "reward": {
        "r_at": _num(float),
        "r_al": _num(float),
        "r_in": _num(float),
        "r_np_low": _num(float),
        "r_np_high": _num(float),
        "pressure_threshold": _num(float),
    },
    "coord": {
        "enabled": _num(bool),
        "gst_capacity": _num(int),
        "window_cycles": _num(int),
        "batch_size": _num(int),
        "filter": _num(bool),
    },
    "trace": {
        "file": _num(str),
        "synthetic": {
            "kind": _choice(*SYNTH_KINDS),
            "length": _num(int),
            "stride_bytes": _num(int),
            "region_base": _num(int),
            "shared_fraction": _num(float),
            "seed": _num(int),
        },
    },
    "output": {
        "dir": _num(str),
        "format": _choice("csv", "json"),
        "run_name": _num(str),
    },
}

DEFAULTS = {
    "sim": {
        "n_cores": 1,
        "warmup_events": 50_000,
        "sim_events": 200_000,
        "prefetcher": "none",
        "seed": None,  # resolved from CRLSIM_SEED, else 0
        "execution": "deterministic",
        "issue_on_l2_hit": False,
    },
    "cache": {
        "line_bytes": 64,
        "prefetch_target": "llc",
        "l1": {"size_bytes": 32 * 1024, "associativity": 8, "latency_cycles": 4},
        "l2": {"size_bytes": 256 * 1024, "associativity": 8, "latency_cycles": 14},
        "llc": {"size_bytes": 2 * 1024 * 1024, "associativity": 16, "latency_cycles": 40},
    },
    "dram": {"service_latency": 200, "min_gap": 10},
    "rl": {
        "alpha": 0.1,
        "gamma": 0.5,
        "epsilon": 0.1,
        "action_table": list(DEFAULT_ACTION_DELTAS),
        "quantized": False,
    },
    "qvstore": {
        "n_vaults": 2,
        "planes_per_vault": 3,
        "feature_dim": 128,
        "action_dim": 16,
        "q_width_bits": 16,
    },
    "eq": {"capacity": 256},
    "reward": {
        "r_at": 20.0,
        "r_al": 12.0,
        "r_in": -14.0,
        "r_np_low": -2.0,
        "r_np_high": -4.0,
        "pressure_threshold": 0.75,
    },
    "coord": {
        "enabled": True,
        "gst_capacity": 1024,
        "window_cycles": 500,
        "batch_size": 8,
        "filter": True,
    },
    "trace": {},
    "output": {"dir": "out", "format": "csv", "run_name": "run"},
}


def _coerce(value, leaf, path):
    want = leaf["type"]
    if want is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{path}: expected a boolean, got {value!r}")
    if want is int:
        if isinstance(value, bool):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        if isinstance(value, int):
            return value
        if isinstance(value, str):
            try:
                return int(value, 0)  # allows 0x hex strings
            except ValueError:
                pass
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    if want is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if want is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        choices = leaf.get("choices")
        if choices and value not in choices:
            raise ConfigError(f"{path}: must be one of {', '.join(choices)}; got {value!r}")
        return value
    if want is list:
        if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{path}: expected a list of integers, got {value!r}")
        return list(value)
    raise AssertionError(f"unhandled schema type at {path}")


def _merge(schema, defaults, user, path=""):
    out = {}
    for key, value in user.items():
        here = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown config key: {here}")
        sub = schema[key]
        if "type" in sub:
            out[key] = _coerce(value, sub, here)
        else:
            if not isinstance(value, dict):
                raise ConfigError(f"{here}: expected a section object")
            out[key] = _merge(sub, defaults.get(key, {}), value, here)
    # fill defaults for anything the user left out
    for key, dval in defaults.items():
        if key in out:
            continue
        if isinstance(dval, dict) and "type" not in schema.get(key, {}):
            out[key] = _merge(schema[key], dval, {}, f"{path}.{key}" if path else key)
        else:
            out[key] = copy.deepcopy(dval)
    return out


def resolve_config(raw: dict) -> dict:
    """Validate a raw config dict and fill in every default."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    resolved = _merge(_SCHEMA, DEFAULTS, raw)
    if resolved["sim"]["seed"] is None:
        env = os.environ.get(SEED_ENV_VAR)
        try:
            resolved["sim"]["seed"] = int(env) if env else 0
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from None
    trace = resolved.get("trace", {})
    if "file" in trace and "synthetic" in trace:
        raise ConfigError("trace: give either trace.file or trace.synthetic, not both")
    return resolved


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return resolve_config(raw)


def parse_override(text: str) -> tuple[list[str], object]:
    """Parse one `a.b.c=value` flag override; values use JSON syntax with a
    bare-string fallback."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key.path=value")
    key, _, raw_value = text.partition("=")
    key = key.strip()
    if not key:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = json.loads(raw_value)
    except json.JSONDecodeError:
        value = raw_value.strip()
    return key.split("."), value


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    out = copy.deepcopy(raw)
    for text in overrides:
        path, value = parse_override(text)
        node = out
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {text!r}: {part} is not a section")
        node[path[-1]] = value
    return out


@dataclass(frozen=True)
class RunSetup:
    sim: SimConfig
    trace_file: str | None
    synthetic: SyntheticSpec | None
    out_dir: str
    out_format: str
    run_name: str
    resolved: dict


def _cache_cfg(section: dict, line_bytes: int) -> CacheConfig:
    return CacheConfig(
        size_bytes=section["size_bytes"],
        associativity=section["associativity"],
        latency_cycles=section["latency_cycles"],
        line_bytes=line_bytes,
    )


def setup_from_dict(resolved: dict) -> RunSetup:
    """Build the runnable objects from a resolved config dict."""
    try:
        cache = resolved["cache"]
        lb = cache["line_bytes"]
        memhier = MemHierConfig(
            l1=_cache_cfg(cache["l1"], lb),
            l2=_cache_cfg(cache["l2"], lb),
            llc=_cache_cfg(cache["llc"], lb),
            dram=DramConfig(
                service_latency_cycles=resolved["dram"]["service_latency"],
                min_gap_cycles=resolved["dram"]["min_gap"],
            ),
            prefetch_target=cache["prefetch_target"],
        )
        rl_cfg = RlConfig(
            params=LearnParams(
                alpha=resolved["rl"]["alpha"],
                gamma=resolved["rl"]["gamma"],
                epsilon=resolved["rl"]["epsilon"],
                rng_seed=resolved["sim"]["seed"],
            ),
            geometry=QVStoreGeometry(
                n_vaults=resolved["qvstore"]["n_vaults"],
                planes_per_vault=resolved["qvstore"]["planes_per_vault"],
                feature_dim=resolved["qvstore"]["feature_dim"],
                action_dim=resolved["qvstore"]["action_dim"],
                q_width_bits=resolved["qvstore"]["q_width_bits"],
            ),
            action_deltas=tuple(resolved["rl"]["action_table"]),
            quantized=resolved["rl"]["quantized"],
        )
        if len(rl_cfg.action_deltas) != rl_cfg.geometry.action_dim:
            raise ConfigError(
                "rl.action_table: length "
                f"{len(rl_cfg.action_deltas)} does not match qvstore.action_dim "
                f"{rl_cfg.geometry.action_dim}")
        reward = RewardScheme(
            r_at=resolved["reward"]["r_at"],
            r_al=resolved["reward"]["r_al"],
            r_in=resolved["reward"]["r_in"],
            r_np_low=resolved["reward"]["r_np_low"],
            r_np_high=resolved["reward"]["r_np_high"],
            pressure_threshold=resolved["reward"]["pressure_threshold"],
        )
        coord = CoordConfig(
            enabled=resolved["coord"]["enabled"],
            gst_capacity=resolved["coord"]["gst_capacity"],
            window_cycles=resolved["coord"]["window_cycles"],
            batch_size=resolved["coord"]["batch_size"],
            filter_prefetches=resolved["coord"]["filter"],
        )
        sim = SimConfig(
            n_cores=resolved["sim"]["n_cores"],
            warmup_events=resolved["sim"]["warmup_events"],
            sim_events=resolved["sim"]["sim_events"],
            prefetcher=resolved["sim"]["prefetcher"],
            seed=resolved["sim"]["seed"],
            memhier=memhier,
            rl=rl_cfg,
            eq_capacity=resolved["eq"]["capacity"],
            reward=reward,
            coord=coord,
            issue_on_l2_hit=resolved["sim"]["issue_on_l2_hit"],
            execution=resolved["sim"]["execution"],
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    trace = resolved.get("trace", {})
    trace_file = trace.get("file")
    synthetic = None
    if "synthetic" in trace:
        syn = dict(trace["synthetic"])
        if "kind" not in syn or "length" not in syn:
            raise ConfigError("trace.synthetic requires at least kind and length")
        try:
            synthetic = SyntheticSpec(
                kind=syn["kind"],
                length=syn["length"],
                stride_bytes=syn.get("stride_bytes", 64),
                region_base=syn.get("region_base", 0x10_0000),
                shared_fraction=syn.get("shared_fraction", 0.0),
                seed=syn.get("seed", resolved["sim"]["seed"]),
            )
            synthetic.validate()
        except ValueError as exc:
            raise ConfigError(f"trace.synthetic: {exc}") from None

    return RunSetup(
        sim=sim,
        trace_file=trace_file,
        synthetic=synthetic,
        out_dir=resolved["output"]["dir"],
        out_format=resolved["output"]["format"],
        run_name=resolved["output"]["run_name"],
        resolved=resolved,
    )
