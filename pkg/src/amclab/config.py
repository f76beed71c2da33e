"""Flat ``key = value`` configuration files with sections and one include directive.

Example::

    include = base.cfg

    [channel]
    profile = uma
    speed_range = 40:100

Keys are flattened to ``section.key``. Later sources override earlier ones:
defaults < included file < including file < command-line overrides.
"""

from __future__ import annotations

import hashlib
import os

from amclab.linkmap import NR_CQI_256QAM

ENV_PREFIX = "AMCLAB_"

DEFAULTS = {
    "channel.profile": "uma",
    "channel.fc": "2.4e9",
    "channel.df": "15e3",
    "channel.K": "48",
    "channel.tti": "0.5e-3",
    "channel.pbs_dbm": "40",
    "channel.noise_dbm": "-84",
    "channel.snr_range": "10:30",
    "channel.n_sinusoids": "64",
    "timing.L": "16",
    "timing.T_m": "2",
    "timing.T_d": "2",
    "link.table": " ".join(f"{q}/{r}" for q, r in NR_CQI_256QAM),
    "link.bler_base_db": "-7.0",
    "link.bler_step_db": "2.1",
    "link.bler_slope": "2.0",
    "link.bler_midpoints": "",
    "link.bler_slopes": "",
    "link.beta": "1.0",
    "link.target_bler": "0.1",
    "link.re_per_tti": "336",
    "link.calibration": "throughput",
    "model.kind": "transformer",
    "model.patch_size": "4",
    "model.n_attention": "4",
    "model.d_model": "64",
    "model.n_layers": "2",
    "model.n_heads": "4",
    "model.backbone": "tiny-transformer",
    "model.freeze_policy": "ln-only",
    "model.se_reduction": "2",
    "model.hidden_size": "128",
    "model.num_layers": "4",
    "train.batch_size": "64",
    "train.epochs": "50",
    "train.lr": "0.001",
    "train.beta1": "0.9",
    "train.beta2": "0.999",
    "train.noise_snr_range": "15:25",
    "train.seed": "0",
    "train.n_train": "8000",
    "train.n_val": "1000",
    "train.speed_range": "40:100",
    "eval.velocities": "40 50 60 70 80 90 100",
    "eval.pairs_per_velocity": "1000",
    "eval.traces_per_velocity": "200",
    "eval.trace_ttis": "232",
    "eval.noise_snrs": "10 15 20 25 30",
    "eval.seeds": "0 1 2",
    "eval.baselines": "np",
    "eval.few_shot_fraction": "0.1",
    "eval.data_fractions": "0.2 0.4 0.6 0.8 1.0",
    "eval.test_profile": "umi",
    "run.jobs": "0",
    "run.out_dir": "runs",
}


class ConfigError(ValueError):
    pass


def parse_text(text, base_dir=".", _depth=0):
    """Parse config text into a flat dict, resolving a single ``include``."""
    values = {}
    included = {}
    section = ""
    include_seen = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "include" and not section:
            if include_seen:
                raise ConfigError(f"line {lineno}: only one include directive is allowed")
            if _depth > 0:
                raise ConfigError(f"line {lineno}: included files may not include further files")
            include_seen = True
            path = os.path.join(base_dir, value)
            with open(path) as fh:
                included = parse_text(fh.read(), os.path.dirname(path), _depth + 1)
            continue
        full = f"{section}.{key}" if section else key
        values[full] = value
    return {**included, **values}


def load(path=None, overrides=None, defaults=DEFAULTS):
    """Resolve the layered config; unknown keys raise :class:`ConfigError`."""
    merged = dict(defaults)
    layers = []
    if path:
        with open(path) as fh:
            layers.append(parse_text(fh.read(), os.path.dirname(os.path.abspath(path))))
    layers.append(dict(overrides or {}))
    for layer in layers:
        unknown = sorted(set(layer) - set(defaults))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        merged.update({k: str(v) for k, v in layer.items()})
    return merged


def digest(cfg):
    """Short stable hash of a resolved config."""
    text = "\n".join(f"{k}={cfg[k]}" for k in sorted(cfg))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def env_path(name, default=None):
    """Path overrides from the environment, e.g. ``AMCLAB_OUT_DIR``."""
    return os.environ.get(ENV_PREFIX + name.upper(), default)


def get_float(cfg, key):
    return float(cfg[key])


def get_int(cfg, key):
    return int(float(cfg[key]))


def get_range(cfg, key):
    lo, hi = cfg[key].split(":")
    return float(lo), float(hi)


def get_floats(cfg, key):
    return [float(v) for v in cfg[key].replace(",", " ").split()]


def get_ints(cfg, key):
    return [int(v) for v in cfg[key].replace(",", " ").split()]
