"""Flat key=value configuration files.

The format is a plain text file of `key = value` lines with `#` comments.
Readers are strict: duplicate keys are an error, and consumers must drain
every key they accept so that a typo fails loudly instead of silently using
a default.  Emission is sorted and repr-formatted, which makes the emitted
text canonical: equal configurations produce byte-equal files.
"""

from __future__ import annotations

import hashlib
import math

from .attenuation import AttenuationSpec, exponential, indicator, power_law, tabulated, truncated_power_law


def parse_config(text: str) -> dict:
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        if key in cfg:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        cfg[key] = val
    return cfg


def read_config(path) -> dict:
    with open(path) as fh:
        return parse_config(fh.read())


def emit_config(cfg: dict) -> str:
    lines = []
    for key in sorted(cfg):
        val = cfg[key]
        if isinstance(val, bool):
            val = "true" if val else "false"
        elif isinstance(val, float):
            val = repr(val)
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(emit_config(cfg).encode()).hexdigest()


def take(cfg: dict, key: str, default=None, required: bool = False) -> str:
    """Remove and return a key; consumers drain what they understand."""
    if key in cfg:
        return cfg.pop(key)
    if required:
        raise ValueError(f"missing required key {key!r}")
    return default


def take_float(cfg: dict, key: str, default=None, required: bool = False):
    raw = take(cfg, key, None, required)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"key {key!r}: expected a number, got {raw!r}") from None


def take_int(cfg: dict, key: str, default=None, required: bool = False):
    raw = take(cfg, key, None, required)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"key {key!r}: expected an integer, got {raw!r}") from None


def take_bool(cfg: dict, key: str, default=None, required: bool = False):
    raw = take(cfg, key, None, required)
    if raw is None:
        return default
    low = raw.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"key {key!r}: expected true/false, got {raw!r}")


def take_floats(cfg: dict, key: str, default=None, required: bool = False):
    raw = take(cfg, key, None, required)
    if raw is None:
        return default
    try:
        return tuple(float(tok) for tok in raw.split(",") if tok.strip())
    except ValueError:
        raise ValueError(f"key {key!r}: expected comma-separated numbers, got {raw!r}") from None


def ensure_drained(cfg: dict, context: str = "configuration") -> None:
    if cfg:
        extra = ", ".join(sorted(cfg))
        raise ValueError(f"unknown keys in {context}: {extra}")


def kernel_from_config(cfg: dict, prefix: str = "kernel.") -> AttenuationSpec:
    """Build a kernel from prefixed keys, rejecting keys the kind cannot use."""
    sub = {k[len(prefix):]: cfg.pop(k) for k in list(cfg) if k.startswith(prefix)}
    kind = take(sub, "kind", required=True)
    if kind == "indicator":
        spec = indicator(radius=take_float(sub, "radius", 1.0),
                         height=take_float(sub, "height", 1.0))
    elif kind == "exponential":
        spec = exponential(scale=take_float(sub, "scale", 1.0),
                           height=take_float(sub, "height", 1.0),
                           cutoff=take_float(sub, "cutoff", math.inf))
    elif kind == "power-law":
        spec = power_law(scale=take_float(sub, "scale", 1.0),
                         exponent=take_float(sub, "exponent", required=True),
                         height=take_float(sub, "height", 1.0),
                         capped=take_bool(sub, "capped", True))
    elif kind == "truncated-power-law":
        spec = truncated_power_law(scale=take_float(sub, "scale", 1.0),
                                   exponent=take_float(sub, "exponent", required=True),
                                   cutoff=take_float(sub, "cutoff", required=True),
                                   height=take_float(sub, "height", 1.0),
                                   capped=take_bool(sub, "capped", True))
    elif kind == "tabulated":
        spec = tabulated(take_floats(sub, "radii", required=True),
                         take_floats(sub, "values", required=True))
    else:
        raise ValueError(f"unknown kernel kind {kind!r}")
    ensure_drained(sub, f"{prefix}* for kind {kind!r}")
    return spec


def kernel_to_config(spec: AttenuationSpec, prefix: str = "kernel.") -> dict:
    """Inverse of kernel_from_config; floats in repr so round trips are exact."""
    out = {prefix + "kind": spec.kind}
    if spec.kind == "indicator":
        out[prefix + "radius"] = repr(spec.radius)
        out[prefix + "height"] = repr(spec.height)
    elif spec.kind == "exponential":
        out[prefix + "scale"] = repr(spec.scale)
        out[prefix + "height"] = repr(spec.height)
        if math.isfinite(spec.cutoff):
            out[prefix + "cutoff"] = repr(spec.cutoff)
    elif spec.kind in ("power-law", "truncated-power-law"):
        out[prefix + "scale"] = repr(spec.scale)
        out[prefix + "exponent"] = repr(spec.exponent)
        out[prefix + "height"] = repr(spec.height)
        out[prefix + "capped"] = "true" if spec.capped else "false"
        if spec.kind == "truncated-power-law":
            out[prefix + "cutoff"] = repr(spec.cutoff)
    else:
        out[prefix + "radii"] = ",".join(repr(r) for r in spec.table_r)
        out[prefix + "values"] = ",".join(repr(v) for v in spec.table_v)
    return out
