"""Closed AMC loop over a SINR trace with periodic measurement and delayed CQI feedback."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from amclab.linkmap import bler as bler_curve
from amclab.linkmap import from_db, to_db


@dataclass(frozen=True)
class TimingConfig:
    T_m: int = 2
    T_d: int = 2
    L: int = 16

    def __post_init__(self):
        if self.T_m < 1 or self.T_d < 0 or self.L < 1:
            raise ValueError(f"invalid timing T_m={self.T_m}, T_d={self.T_d}, L={self.L}")

    @property
    def warmup(self):
        """TTIs before the first report takes effect."""
        return (self.L - 1) * self.T_m + self.T_d


@dataclass(frozen=True)
class LinkRecord:
    tti: int
    cqi: int
    Q: int
    R: float
    s_eff_db_true: float
    bler: float
    block_error: bool
    bits_delivered: float


@dataclass
class LinkLog:
    """Column store of per-TTI outcomes for one run (iterates as :class:`LinkRecord`)."""

    tti: np.ndarray
    cqi: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    s_eff_db_true: np.ndarray
    bler: np.ndarray  # nan where cqi == 0
    block_error: np.ndarray
    bits: np.ndarray
    expected_bits: np.ndarray
    reported_db: np.ndarray = field(repr=False, default=None)  # (reports, K) predicted SINR
    true_db: np.ndarray = field(repr=False, default=None)  # (reports, K) SINR at target TTI
    tti_seconds: float = 0.5e-3
    velocity_kmh: float = float("nan")

    def __len__(self):
        return len(self.tti)

    def __iter__(self):
        for i in range(len(self)):
            yield LinkRecord(
                int(self.tti[i]), int(self.cqi[i]), int(self.Q[i]), float(self.R[i]),
                float(self.s_eff_db_true[i]), float(self.bler[i]), bool(self.block_error[i]),
                float(self.bits[i]),
            )

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tti", "cqi", "Q", "R", "s_eff_db_true", "bler", "block_error", "bits"])
        for r in self:
            w.writerow([
                r.tti, r.cqi, r.Q, f"{r.R:.6f}", f"{r.s_eff_db_true:.6f}",
                "" if np.isnan(r.bler) else f"{r.bler:.6e}", int(r.block_error),
                f"{r.bits_delivered:.1f}",
            ])
        return buf.getvalue()


class GeniePredictor:
    """Test oracle: reports the true SINR at the TTI the report takes effect."""

    needs_future = True

    def predict_future(self, trace_db, target_rows):
        return trace_db[target_rows]


def _report_schedule(T, timing):
    L, T_m, T_d = timing.L, timing.T_m, timing.T_d
    if T < timing.warmup + 1:
        raise ValueError(
            f"trace has {T} TTIs; need > {timing.warmup} for L={L}, T_m={T_m}, T_d={T_d}"
        )
    n = np.arange(L - 1, (T - 1 - T_d) // T_m + 1)
    return n


def add_measurement_noise(history_db, snr_db, rng):
    """AWGN on dB-scale measurements; noise power = per-sample variance / linear SNR."""
    snr_db = np.broadcast_to(np.asarray(snr_db, float), history_db.shape[:1])
    var = history_db.reshape(len(history_db), -1).var(axis=1)
    sd = np.sqrt(var / 10.0 ** (snr_db / 10.0))
    return history_db + sd[:, None, None] * rng.standard_normal(history_db.shape)


def run_link(trace, predictor, timing, linkcfg, seed, noise_snr_db=None):
    """Run the AMC loop over ``trace`` and return a :class:`LinkLog`.

    Measurement ``n`` happens at TTI ``n*T_m``; its report predicts TTI
    ``n*T_m + T_d`` and stays in force until the next report lands. TTIs
    before the first report takes effect are not recorded.
    """
    values = trace.values
    T = values.shape[0]
    n = _report_schedule(T, timing)
    L, T_m, T_d = timing.L, timing.T_m, timing.T_d
    trace_db = to_db(values)
    rows = (n[:, None] - (L - 1) + np.arange(L)[None, :]) * T_m
    target_rows = n * T_m + T_d

    if getattr(predictor, "needs_future", False):
        pred_db = predictor.predict_future(trace_db, target_rows)
    else:
        hist = trace_db[rows]
        if noise_snr_db is not None:
            noise_rng = np.random.default_rng([seed, 1])
            hist = add_measurement_noise(hist, noise_snr_db, noise_rng)
        pred_db = np.asarray(predictor.predict(hist))
    reported_cqi = np.asarray(linkcfg.select_cqi(from_db(pred_db)))

    # zero-order hold: report k is in force on [target_k, target_{k+1})
    tti = np.arange(target_rows[0], T)
    which = np.searchsorted(target_rows, tti, side="right") - 1
    cqi = reported_cqi[which]
    table = linkcfg.table
    Q = table.Q[cqi]
    R = table.R[cqi]
    s_true = linkcfg.effective_sinr_db(values[tti], cqi)
    tx = cqi > 0
    b = np.full(len(tti), np.nan)
    if tx.any():
        b[tx] = bler_curve(cqi[tx], s_true[tx], linkcfg.bler_model)
    u = np.random.default_rng([seed, 0]).random(len(tti))
    err = tx & (u < np.nan_to_num(b))
    tb_bits = Q * R * linkcfg.re_per_tti
    bits = np.where(tx & ~err, tb_bits, 0.0)
    expected = np.where(tx, (1.0 - np.nan_to_num(b)) * tb_bits, 0.0)
    return LinkLog(
        tti=tti, cqi=cqi, Q=Q, R=R, s_eff_db_true=s_true, bler=b, block_error=err,
        bits=bits, expected_bits=expected, reported_db=pred_db, true_db=trace_db[target_rows],
        tti_seconds=linkcfg.tti, velocity_kmh=trace.velocity_kmh,
    )


@dataclass
class LinkSummary:
    mean_bler: float  # mean model BLER over transmitted blocks
    block_error_rate: float  # realized error fraction over transmitted blocks
    throughput_bps: float  # delivered bits / elapsed time
    expected_throughput_bps: float  # mean of (1 - BLER) * Q * R * RE / TTI
    no_transmission_fraction: float
    n_records: int
    n_blocks: int
    groups: dict = field(default_factory=dict)

    def as_row(self):
        return {
            "bler": self.mean_bler,
            "block_error_rate": self.block_error_rate,
            "throughput_mbps": self.throughput_bps / 1e6,
            "expected_throughput_mbps": self.expected_throughput_bps / 1e6,
            "no_tx_fraction": self.no_transmission_fraction,
            "records": self.n_records,
            "blocks": self.n_blocks,
        }


def _summarize_logs(logs):
    n = sum(len(g) for g in logs)
    if n == 0:
        raise ValueError("cannot summarize an empty record set")
    cqi = np.concatenate([g.cqi for g in logs])
    tx = cqi > 0
    b = np.concatenate([g.bler for g in logs])
    err = np.concatenate([g.block_error for g in logs])
    bits = sum(float(g.bits.sum()) for g in logs)
    expected = sum(float(g.expected_bits.sum()) for g in logs)
    elapsed = sum(len(g) * g.tti_seconds for g in logs)
    n_blocks = int(tx.sum())
    return LinkSummary(
        mean_bler=float(b[tx].mean()) if n_blocks else float("nan"),
        block_error_rate=float(err[tx].mean()) if n_blocks else float("nan"),
        throughput_bps=bits / elapsed,
        expected_throughput_bps=expected / elapsed,
        no_transmission_fraction=float(1.0 - tx.mean()),
        n_records=n,
        n_blocks=n_blocks,
    )


def summarize(logs, group_keys=("velocity_kmh",)):
    """Pool one or more :class:`LinkLog` runs; optional breakdown by log attributes."""
    if isinstance(logs, LinkLog):
        logs = [logs]
    logs = list(logs)
    summary = _summarize_logs(logs)
    for key in group_keys or ():
        buckets = {}
        for g in logs:
            buckets.setdefault(getattr(g, key), []).append(g)
        summary.groups[key] = {k: _summarize_logs(v) for k, v in sorted(buckets.items())}
    return summary


def in_loop_nmse(logs):
    """Mean per-report NMSE (dB values) between reported and true SINR."""
    if isinstance(logs, LinkLog):
        logs = [logs]
    pred = np.concatenate([g.reported_db for g in logs])
    true = np.concatenate([g.true_db for g in logs])
    return float(np.mean(((pred - true) ** 2).sum(-1) / (true**2).sum(-1)))
