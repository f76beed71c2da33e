"""Training, evaluation and the experiment grid behind every report.

Each grid cell (one seed, one condition) is an independent job; cells run
through a joblib work queue and their rows are merged in submission order,
so reports do not depend on the number of workers.
"""

from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed

from amclab import config as cfgmod
from amclab.channel import ChannelConfig, generate_traces, sample_dataset
from amclab.engine import TimingConfig, run_link, summarize
from amclab.linkmap import BlerModel, CqiTable, LinkConfig
from amclab.predictors import (
    FREEZE_POLICIES,
    NoPredictor,
    RecurrentPredictor,
    SinrTransformerPredictor,
    measurement_noise,
    nmse,
    to_nmse_db,
)

log = logging.getLogger(__name__)

EXPERIMENT_KINDS = (
    "velocity-sweep",
    "noise-robustness",
    "few-shot",
    "generalization",
    "ablation-modules",
    "ablation-data-scale",
    "ablation-finetune",
    "cost-report",
)

ABLATIONS = {
    "full": {},
    "w/o SA": {"n_attention": 0},
    "w/o patching": {"patch_size": 1},
    "w/o backbone": {"backbone": "identity"},
}

RECURRENT_CELLS = ("rnn", "lstm", "gru")


# --------------------------------------------------------------------------
# builders from a resolved config


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    epochs: int = 50
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    noise_snr_range: tuple = (15.0, 25.0)
    seed: int = 0
    n_train: int = 8000
    n_val: int = 1000
    speed_range: tuple = (40.0, 100.0)

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0 or self.n_train < 1 or self.n_val < 0:
            raise ValueError("batch_size and n_train must be positive, epochs and n_val >= 0")
        lo, hi = self.noise_snr_range
        if lo > hi:
            raise ValueError(f"noise SNR range inverted: {self.noise_snr_range}")

    def estimator_params(self):
        return {
            "epochs": self.epochs, "batch_size": self.batch_size, "lr": self.lr,
            "betas": tuple(self.betas), "noise_snr_range": tuple(self.noise_snr_range),
        }


def build_channel(cfg, profile=None):
    return ChannelConfig(
        fc=cfgmod.get_float(cfg, "channel.fc"),
        df=cfgmod.get_float(cfg, "channel.df"),
        K=cfgmod.get_int(cfg, "channel.K"),
        tti=cfgmod.get_float(cfg, "channel.tti"),
        pbs_dbm=cfgmod.get_float(cfg, "channel.pbs_dbm"),
        noise_dbm=cfgmod.get_float(cfg, "channel.noise_dbm"),
        profile=profile or cfg["channel.profile"],
        large_scale=cfgmod.get_range(cfg, "channel.snr_range"),
        n_sinusoids=cfgmod.get_int(cfg, "channel.n_sinusoids"),
    )


def build_timing(cfg):
    return TimingConfig(
        T_m=cfgmod.get_int(cfg, "timing.T_m"),
        T_d=cfgmod.get_int(cfg, "timing.T_d"),
        L=cfgmod.get_int(cfg, "timing.L"),
    )


def build_link(cfg):
    pairs = [tuple(int(v) for v in item.split("/")) for item in cfg["link.table"].split()]
    if cfg["link.bler_midpoints"].strip():
        mids = cfgmod.get_floats(cfg, "link.bler_midpoints")
        slopes = cfgmod.get_floats(cfg, "link.bler_slopes") or [cfgmod.get_float(cfg, "link.bler_slope")] * 15
        model = BlerModel(tuple(mids), tuple(slopes))
    else:
        model = BlerModel.default(
            cfgmod.get_float(cfg, "link.bler_base_db"),
            cfgmod.get_float(cfg, "link.bler_step_db"),
            cfgmod.get_float(cfg, "link.bler_slope"),
        )
    betas = cfgmod.get_floats(cfg, "link.beta")
    return LinkConfig(
        table=CqiTable.from_pairs(pairs),
        bler_model=model,
        beta=betas[0] if len(betas) == 1 else tuple(betas),
        target_bler=cfgmod.get_float(cfg, "link.target_bler"),
        re_per_tti=cfgmod.get_float(cfg, "link.re_per_tti"),
        tti=cfgmod.get_float(cfg, "channel.tti"),
        calibration=cfg["link.calibration"],
    )


def build_train_config(cfg, seed=None):
    return TrainConfig(
        batch_size=cfgmod.get_int(cfg, "train.batch_size"),
        epochs=cfgmod.get_int(cfg, "train.epochs"),
        lr=cfgmod.get_float(cfg, "train.lr"),
        betas=(cfgmod.get_float(cfg, "train.beta1"), cfgmod.get_float(cfg, "train.beta2")),
        noise_snr_range=cfgmod.get_range(cfg, "train.noise_snr_range"),
        seed=cfgmod.get_int(cfg, "train.seed") if seed is None else seed,
        n_train=cfgmod.get_int(cfg, "train.n_train"),
        n_val=cfgmod.get_int(cfg, "train.n_val"),
        speed_range=cfgmod.get_range(cfg, "train.speed_range"),
    )


def build_predictor(cfg, kind=None, seed=0, **overrides):
    """Unfitted estimator of ``kind`` (np, transformer, rnn, lstm, gru) from config."""
    kind = kind or cfg["model.kind"]
    train = build_train_config(cfg, seed).estimator_params()
    if kind == "np":
        return NoPredictor()
    if kind == "transformer":
        params = dict(
            patch_size=cfgmod.get_int(cfg, "model.patch_size"),
            n_attention=cfgmod.get_int(cfg, "model.n_attention"),
            d_model=cfgmod.get_int(cfg, "model.d_model"),
            n_layers=cfgmod.get_int(cfg, "model.n_layers"),
            n_heads=cfgmod.get_int(cfg, "model.n_heads"),
            backbone=cfg["model.backbone"],
            freeze_policy=cfg["model.freeze_policy"],
            se_reduction=cfgmod.get_int(cfg, "model.se_reduction"),
            random_state=seed, **train,
        )
        params.update(overrides)
        return SinrTransformerPredictor(**params)
    if kind in RECURRENT_CELLS:
        params = dict(
            cell=kind, hidden_size=cfgmod.get_int(cfg, "model.hidden_size"),
            num_layers=cfgmod.get_int(cfg, "model.num_layers"), random_state=seed, **train,
        )
        params.update(overrides)
        return RecurrentPredictor(**params)
    raise ValueError(f"unknown model kind {kind!r}")


# --------------------------------------------------------------------------
# data, training and evaluation


def _data_seed(seed, purpose, index=0):
    # distinct, stable integer seeds per (run seed, purpose, index)
    return int(np.random.SeedSequence([seed, purpose, index]).generate_state(1, dtype=np.uint64)[0])


TRAIN_DATA, VAL_DATA, TEST_PAIRS, TEST_TRACES, SUBSAMPLE, NOISE = range(6)


def make_training_data(channel, timing, train_cfg, seed=None):
    seed = train_cfg.seed if seed is None else seed
    common = dict(L=timing.L, T_m=timing.T_m, T_d=timing.T_d, speed_range=train_cfg.speed_range)
    train_set = sample_dataset(channel, train_cfg.n_train, _data_seed(seed, TRAIN_DATA), **common)
    val_set = sample_dataset(channel, train_cfg.n_val, _data_seed(seed, VAL_DATA), **common)
    return train_set, val_set


@dataclass
class TestSets:
    """Held-out pairs and link traces keyed by velocity (km/h)."""

    pairs: dict
    traces: dict

    @property
    def velocities(self):
        return sorted(self.pairs)


def make_test_sets(channel, timing, velocities, n_pairs, n_traces, trace_ttis, seed):
    pairs, traces = {}, {}
    for i, v in enumerate(velocities):
        pairs[v] = sample_dataset(
            channel, n_pairs, _data_seed(seed, TEST_PAIRS, i),
            L=timing.L, T_m=timing.T_m, T_d=timing.T_d, speed_range=(v, v),
        )
        traces[v] = generate_traces(
            replace(channel, velocity_kmh=v), trace_ttis, n_traces, _data_seed(seed, TEST_TRACES, i)
        )
    return TestSets(pairs, traces)


def train(predictor, train_set, val_set=None, train_cfg=None):
    """Fit ``predictor`` on dB histories; returns it with ``loss_curve_`` populated."""
    if train_cfg is not None:
        predictor.set_params(**{
            k: v for k, v in train_cfg.estimator_params().items() if k in predictor.get_params()
        })
    if val_set is not None and len(val_set) == 0:
        val_set = None
    X_val = val_set.history_db if val_set is not None else None
    y_val = val_set.target_db if val_set is not None else None
    return predictor.fit(train_set.history_db, train_set.target_db, X_val, y_val)


@dataclass
class VelocityResult:
    velocity_kmh: float
    nmse: float  # linear, mean per-sample
    bler: float
    throughput_bps: float
    expected_throughput_bps: float
    no_tx_fraction: float

    @property
    def nmse_db(self):
        return to_nmse_db(self.nmse)


def _noisy_history(ds, snr_db, seed):
    hist = ds.history_db
    if snr_db is None:
        return hist
    return measurement_noise(hist, np.full(len(hist), snr_db), np.random.default_rng(seed))


def evaluate_nmse(predictor, tests, velocities=None, noise_snr_db=None, seed=0):
    """Linear NMSE on the held-out pairs of each velocity, without the link simulation."""
    velocities = tests.velocities if velocities is None else list(velocities)
    out = []
    for i, v in enumerate(velocities):
        ds = tests.pairs[v]
        pred = predictor.predict(_noisy_history(ds, noise_snr_db, _data_seed(seed, NOISE, i)))
        out.append(nmse(pred, ds.target_db))
    return out


def evaluate(predictor, tests, timing, link, velocities=None, noise_snr_db=None, seed=0):
    """NMSE on held-out pairs and link metrics on held-out traces, per velocity."""
    velocities = tests.velocities if velocities is None else list(velocities)
    absent = [v for v in velocities if v not in tests.pairs or v not in tests.traces]
    if absent:
        raise FileNotFoundError(f"missing test sets for velocities: {absent}")
    errors = evaluate_nmse(predictor, tests, velocities, noise_snr_db, seed)
    out = []
    for v, err in zip(velocities, errors):
        logs = [
            run_link(tr, predictor, timing, link, seed=_data_seed(seed, NOISE, 1000 + j), noise_snr_db=noise_snr_db)
            for j, tr in enumerate(tests.traces[v])
        ]
        s = summarize(logs, group_keys=())
        out.append(VelocityResult(
            v, err, s.mean_bler, s.throughput_bps, s.expected_throughput_bps,
            s.no_transmission_fraction,
        ))
    return out


def pooled(results):
    """Average per-velocity results (equal weight per velocity)."""
    return {
        "nmse": float(np.mean([r.nmse for r in results])),
        "nmse_db": to_nmse_db(float(np.mean([r.nmse for r in results]))),
        "bler": float(np.mean([r.bler for r in results])),
        "throughput_mbps": float(np.mean([r.throughput_bps for r in results])) / 1e6,
        "expected_throughput_mbps": float(np.mean([r.expected_throughput_bps for r in results])) / 1e6,
    }


# --------------------------------------------------------------------------
# reports


@dataclass
class ExperimentReport:
    """Rows of (condition, seed, metrics) for one experiment plus its config digest."""

    name: str
    key_columns: list
    metric_columns: list
    rows: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    config_digest: str = ""
    notes: list = field(default_factory=list)

    @property
    def columns(self):
        return ["experiment", "config_digest", "seed"] + self.key_columns + self.metric_columns

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            full = {"experiment": self.name, "config_digest": self.config_digest, **row}
            w.writerow([_fmt(full.get(c, "")) for c in self.columns])
        return buf.getvalue()

    def aggregate(self):
        """Mean, min and max over seeds for each condition, in first-seen order."""
        groups = {}
        for row in self.rows:
            key = tuple(row[c] for c in self.key_columns)
            groups.setdefault(key, []).append(row)
        out = []
        for key, rows in groups.items():
            agg = dict(zip(self.key_columns, key))
            for m in self.metric_columns:
                vals = np.array([r[m] for r in rows], dtype=float)
                agg[m] = (float(np.mean(vals)), float(np.min(vals)), float(np.max(vals)))
            agg["n_seeds"] = len(rows)
            out.append(agg)
        return out

    def to_text(self):
        header = self.key_columns + self.metric_columns
        body = []
        for agg in self.aggregate():
            cells = [_fmt(agg[c]) for c in self.key_columns]
            for m in self.metric_columns:
                mean, lo, hi = agg[m]
                cells.append(_fmt(mean) if lo == hi else f"{_fmt(mean)} [{_fmt(lo)}, {_fmt(hi)}]")
            body.append(cells)
        title = f"{self.name}  (config {self.config_digest}, seeds {' '.join(map(str, self.seeds))})"
        lines = [title] + render_table(header, body)
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines) + "\n"


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        if not np.isfinite(value):
            return "nan"
        return f"{value:.4f}" if abs(value) < 1e5 else f"{value:.4e}"
    return str(value)


def render_table(header, rows):
    widths = [max(len(str(h)), *(len(r[i]) for r in rows)) if rows else len(str(h)) for i, h in enumerate(header)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*header), fmt.format(*("-" * w for w in widths))]
    lines += [fmt.format(*r) for r in rows]
    return [line.rstrip() for line in lines]


def read_report_csv(text):
    """Parse a report CSV back into (columns, rows as dicts of strings)."""
    reader = csv.DictReader(io.StringIO(text))
    return reader.fieldnames, list(reader)


def add_nmse_increase(report, reference):
    """Relative NMSE change vs the ``reference`` condition of the same seed, on both scales.

    ``reference`` maps key-column names to the reference values; the linear
    column compares NMSE ratios, the dB column compares NMSE expressed in dB.
    """
    cond_cols = [c for c in report.key_columns if c not in reference]
    refs = {}
    for row in report.rows:
        if all(row[k] == v for k, v in reference.items()):
            refs[(row["seed"],) + tuple(row[c] for c in cond_cols)] = row
    for row in report.rows:
        ref = refs.get((row["seed"],) + tuple(row[c] for c in cond_cols))
        if ref is None:
            row["nmse_increase_linear_pct"] = float("nan")
            row["nmse_increase_db_pct"] = float("nan")
            continue
        row["nmse_increase_linear_pct"] = 100.0 * (row["nmse"] - ref["nmse"]) / ref["nmse"]
        row["nmse_increase_db_pct"] = 100.0 * (row["nmse_db"] - ref["nmse_db"]) / abs(ref["nmse_db"])
    report.metric_columns += ["nmse_increase_linear_pct", "nmse_increase_db_pct"]
    report.notes.append(
        "NMSE increase is given on the linear scale and on the dB scale; the source table does not say which"
    )
    return report


# --------------------------------------------------------------------------
# grid cells


@dataclass(frozen=True)
class Setting:
    """Everything a grid cell needs, resolved once from the config."""

    cfg: dict
    channel: ChannelConfig
    timing: TimingConfig
    link: LinkConfig
    velocities: tuple
    n_pairs: int
    n_traces: int
    trace_ttis: int

    @classmethod
    def from_config(cls, cfg):
        return cls(
            cfg=dict(cfg), channel=build_channel(cfg), timing=build_timing(cfg), link=build_link(cfg),
            velocities=tuple(cfgmod.get_floats(cfg, "eval.velocities")),
            n_pairs=cfgmod.get_int(cfg, "eval.pairs_per_velocity"),
            n_traces=cfgmod.get_int(cfg, "eval.traces_per_velocity"),
            trace_ttis=cfgmod.get_int(cfg, "eval.trace_ttis"),
        )

    def tests(self, seed, channel=None, velocities=None):
        return make_test_sets(
            channel or self.channel, self.timing, velocities or self.velocities,
            self.n_pairs, self.n_traces, self.trace_ttis, seed,
        )

    def fit(self, seed, kind=None, fraction=1.0, channel=None, **overrides):
        train_cfg = build_train_config(self.cfg, seed)
        train_set, val_set = make_training_data(channel or self.channel, self.timing, train_cfg, seed)
        if fraction < 1.0:
            n = max(1, int(round(fraction * len(train_set))))
            idx = np.sort(np.random.default_rng(_data_seed(seed, SUBSAMPLE)).permutation(len(train_set))[:n])
            train_set = train_set.subset(idx)
        model = build_predictor(self.cfg, kind, seed, **overrides)
        return train(model, train_set, val_set)


def _metric_row(r):
    return {
        "nmse": r.nmse, "nmse_db": r.nmse_db, "bler": r.bler,
        "throughput_mbps": r.throughput_bps / 1e6,
        "expected_throughput_mbps": r.expected_throughput_bps / 1e6,
    }


LINK_METRICS = ["nmse", "nmse_db", "bler", "throughput_mbps", "expected_throughput_mbps"]


def _cell_velocity_sweep(setting, seed, predictors, fraction=1.0):
    tests = setting.tests(seed)
    rows = []
    for name in predictors:
        try:
            model = NoPredictor() if name == "np" else setting.fit(seed, name, fraction=fraction)
        except FloatingPointError as err:
            if name not in RECURRENT_CELLS:
                raise
            # diverged baselines are reported as missing rather than aborting the grid
            log.warning("predictor=%s seed=%d diverged: %s", name, seed, err)
            for v in setting.velocities:
                rows.append({"seed": seed, "velocity_kmh": v, "predictor": name,
                             **{m: float("nan") for m in LINK_METRICS}})
            continue
        for r in evaluate(model, tests, setting.timing, setting.link, seed=seed):
            rows.append({"seed": seed, "velocity_kmh": r.velocity_kmh, "predictor": name, **_metric_row(r)})
    return rows


def _cell_noise(setting, seed, snrs):
    tests = setting.tests(seed)
    models = {"np": NoPredictor(), "transformer": setting.fit(seed, "transformer")}
    rows = []
    for snr in snrs:
        for name, model in models.items():
            res = evaluate(model, tests, setting.timing, setting.link, noise_snr_db=snr, seed=seed)
            rows.append({"seed": seed, "test_snr_db": snr, "predictor": name, **pooled(res)})
    return rows


def _cell_generalization(setting, seed, test_profile):
    model = setting.fit(seed, "transformer")
    rows = []
    for profile in (setting.channel.profile.name, test_profile):
        channel = replace(setting.channel, profile=profile)
        tests = setting.tests(seed, channel=channel)
        for name, m in (("np", NoPredictor()), ("transformer", model)):
            for r in evaluate(m, tests, setting.timing, setting.link, seed=seed):
                rows.append({
                    "seed": seed, "test_profile": profile, "velocity_kmh": r.velocity_kmh,
                    "predictor": name, **_metric_row(r),
                })
    return rows


def _cell_pooled(setting, seed, key, value, fraction=1.0, **overrides):
    model = setting.fit(seed, "transformer", fraction=fraction, **overrides)
    res = evaluate(model, setting.tests(seed), setting.timing, setting.link, seed=seed)
    row = {"seed": seed, key: value, **pooled(res)}
    counts = model.parameter_counts()
    row["trainable_params"] = counts["trainable"]
    return [row]


def cost_rows(cfg):
    """Total and trainable parameter counts per model variant (no training)."""
    timing = build_timing(cfg)
    K = cfgmod.get_int(cfg, "channel.K")
    rows = []
    for policy in FREEZE_POLICIES:
        model = build_predictor(cfg, "transformer", freeze_policy=policy).initialize(timing.L, K)
        net = model.network_
        rows.append({
            "model": "transformer", "freeze_policy": policy,
            "total_params": net.num_parameters(),
            "trainable_params": net.num_parameters(trainable_only=True),
            "backbone_embedding_params": net.backbone.num_parameters() + net.embedding.num_parameters(),
            "backbone_trainable_params": net.backbone.num_parameters(trainable_only=True),
        })
    for cell in RECURRENT_CELLS:
        net = build_predictor(cfg, cell).initialize(timing.L, K).network_
        rows.append({
            "model": cell, "freeze_policy": "-", "total_params": net.num_parameters(),
            "trainable_params": net.num_parameters(trainable_only=True),
            "backbone_embedding_params": 0, "backbone_trainable_params": 0,
        })
    for row in rows:
        row["trainable_fraction"] = row["trainable_params"] / row["total_params"]
    return rows


def _resolve_jobs(jobs):
    if jobs is None or jobs <= 0:
        return os.cpu_count() or 1
    return jobs


def run_cells(cells, jobs=1):
    """Execute ``(fn, args)`` cells through the work queue; results keep submission order."""
    jobs = _resolve_jobs(jobs)
    if jobs == 1 or len(cells) <= 1:
        results = [fn(*args) for fn, args in cells]
    else:
        results = Parallel(n_jobs=min(jobs, len(cells)))(delayed(fn)(*args) for fn, args in cells)
    return [row for rows in results for row in rows]


def run_experiment(kind, cfg, jobs=None, seeds=None):
    """Execute the grid for ``kind`` under the resolved config ``cfg``."""
    if kind not in EXPERIMENT_KINDS:
        raise ValueError(f"unknown experiment kind {kind!r}; expected one of {EXPERIMENT_KINDS}")
    digest = cfgmod.digest(cfg)
    seeds = list(cfgmod.get_ints(cfg, "eval.seeds") if seeds is None else seeds)
    if jobs is None:
        jobs = cfgmod.get_int(cfg, "run.jobs")

    if kind == "cost-report":
        rows = cost_rows(cfg)
        metrics = ["total_params", "trainable_params", "backbone_embedding_params",
                   "backbone_trainable_params", "trainable_fraction"]
        report = ExperimentReport(kind, ["model", "freeze_policy"], metrics, [], [], digest)
        report.rows = [{"seed": "-", **r} for r in rows]
        report.seeds = ["-"]
        return report

    setting = Setting.from_config(cfg)
    if kind == "velocity-sweep":
        predictors = ["np", "transformer"] + [b for b in cfg["eval.baselines"].split() if b != "np"]
        cells = [(_cell_velocity_sweep, (setting, s, predictors)) for s in seeds]
        keys, metrics = ["velocity_kmh", "predictor"], list(LINK_METRICS)
    elif kind == "few-shot":
        frac = cfgmod.get_float(cfg, "eval.few_shot_fraction")
        cells = [(_cell_velocity_sweep, (setting, s, ["np", "transformer"], frac)) for s in seeds]
        keys, metrics = ["velocity_kmh", "predictor"], list(LINK_METRICS)
    elif kind == "noise-robustness":
        snrs = cfgmod.get_floats(cfg, "eval.noise_snrs")
        cells = [(_cell_noise, (setting, s, snrs)) for s in seeds]
        keys, metrics = ["test_snr_db", "predictor"], list(LINK_METRICS)
    elif kind == "generalization":
        cells = [(_cell_generalization, (setting, s, cfg["eval.test_profile"])) for s in seeds]
        keys, metrics = ["test_profile", "velocity_kmh", "predictor"], list(LINK_METRICS)
    elif kind == "ablation-modules":
        cells = [
            (_with_kwargs, (_cell_pooled, (setting, s, "variant", name), overrides))
            for s in seeds for name, overrides in ABLATIONS.items()
        ]
        keys, metrics = ["variant"], LINK_METRICS + ["trainable_params"]
    elif kind == "ablation-data-scale":
        fracs = cfgmod.get_floats(cfg, "eval.data_fractions")
        cells = [
            (_with_kwargs, (_cell_pooled, (setting, s, "data_fraction", f), {"fraction": f}))
            for s in seeds for f in fracs
        ]
        keys, metrics = ["data_fraction"], LINK_METRICS + ["trainable_params"]
    else:  # ablation-finetune
        cells = [
            (_with_kwargs, (_cell_pooled, (setting, s, "freeze_policy", p), {"freeze_policy": p}))
            for s in seeds for p in FREEZE_POLICIES
        ]
        keys, metrics = ["freeze_policy"], LINK_METRICS + ["trainable_params"]

    log.info("experiment=%s cells=%d jobs=%d config_digest=%s", kind, len(cells), _resolve_jobs(jobs), digest)
    rows = run_cells(cells, jobs)
    report = ExperimentReport(kind, keys, metrics, rows, seeds, digest)
    if kind == "ablation-modules":
        add_nmse_increase(report, {"variant": "full"})
    elif kind == "ablation-data-scale":
        add_nmse_increase(report, {"data_fraction": max(r["data_fraction"] for r in rows)})
    elif kind == "ablation-finetune":
        add_nmse_increase(report, {"freeze_policy": "ln-only"})
    elif kind == "generalization":
        add_nmse_increase(report, {"test_profile": setting.channel.profile.name})
    return report


def _with_kwargs(fn, args, kwargs):
    return fn(*args, **kwargs)
