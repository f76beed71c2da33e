"""Link-quality mappings: EESM, CQI quantization, MCS lookup, BLER curves, throughput."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

# 4-bit CQI table with 256QAM (3GPP TS 38.214): (Q, code rate x 1024)
NR_CQI_256QAM = (
    (2, 78), (2, 193), (2, 449), (4, 378), (4, 490), (4, 616), (6, 466), (6, 567),
    (6, 666), (6, 772), (6, 873), (8, 711), (8, 797), (8, 885), (8, 948),
)
# 4-bit CQI table up to 64QAM (3GPP TS 38.214)
NR_CQI_64QAM = (
    (2, 78), (2, 120), (2, 193), (2, 308), (2, 449), (2, 602), (4, 378), (4, 490),
    (4, 616), (6, 466), (6, 567), (6, 666), (6, 772), (6, 873), (6, 948),
)
MODULATION_NAMES = {2: "QPSK", 4: "16QAM", 6: "64QAM", 8: "256QAM"}
N_CQI = 15


@dataclass(frozen=True)
class McsEntry:
    cqi: int
    Q: int
    R: float

    @property
    def spectral_efficiency(self):
        return self.Q * self.R

    @property
    def transmits(self):
        return self.Q > 0


NO_TRANSMISSION = McsEntry(0, 0, 0.0)


@dataclass(frozen=True)
class CqiTable:
    entries: tuple  # McsEntry for cqi 1..15

    def __post_init__(self):
        if len(self.entries) != N_CQI:
            raise ValueError(f"CQI table needs {N_CQI} entries, got {len(self.entries)}")
        for i, e in enumerate(self.entries, start=1):
            if e.cqi != i:
                raise ValueError(f"entry {i} carries cqi={e.cqi}")
            if e.Q not in MODULATION_NAMES:
                raise ValueError(f"cqi {i}: modulation order {e.Q} not in {sorted(MODULATION_NAMES)}")
            if not 0.0 < e.R <= 1.0:
                raise ValueError(f"cqi {i}: code rate {e.R} outside (0, 1]")
        se = self.spectral_efficiencies
        if np.any(np.diff(se) <= 0):
            raise ValueError("spectral efficiency must strictly increase with CQI index")

    @classmethod
    def from_pairs(cls, pairs):
        """Build from ``(Q, rate_x1024)`` pairs ordered by CQI index 1..15."""
        return cls(tuple(McsEntry(i, int(q), r / 1024.0) for i, (q, r) in enumerate(pairs, 1)))

    @classmethod
    def nr_256qam(cls):
        return cls.from_pairs(NR_CQI_256QAM)

    @property
    def Q(self):
        return np.array([0] + [e.Q for e in self.entries])

    @property
    def R(self):
        return np.array([0.0] + [e.R for e in self.entries])

    @property
    def spectral_efficiencies(self):
        return np.array([e.spectral_efficiency for e in self.entries])


@dataclass(frozen=True)
class BlerModel:
    """Logistic SINR->BLER waterfall per CQI: midpoint (dB, BLER 0.5) and slope (1/dB)."""

    midpoints: tuple
    slopes: tuple

    def __post_init__(self):
        m = np.asarray(self.midpoints, float)
        k = np.asarray(self.slopes, float)
        if m.shape != (N_CQI,) or k.shape != (N_CQI,):
            raise ValueError(f"BLER model needs {N_CQI} midpoints and slopes")
        if np.any(np.diff(m) <= 0):
            raise ValueError("BLER midpoints must strictly increase with CQI")
        if np.any(k <= 0):
            raise ValueError("BLER slopes must be positive")

    @classmethod
    def default(cls, base_db=-7.0, step_db=2.1, slope=2.0):
        c = np.arange(N_CQI)
        return cls(tuple(base_db + step_db * c), tuple(np.full(N_CQI, slope)))

    @property
    def m(self):
        return np.asarray(self.midpoints, float)

    @property
    def k(self):
        return np.asarray(self.slopes, float)


@dataclass(frozen=True)
class CqiThresholds:
    values: tuple  # minimum effective SINR in dB for cqi 1..15

    def __post_init__(self):
        v = np.asarray(self.values, float)
        if v.shape != (N_CQI,):
            raise ValueError(f"need {N_CQI} thresholds, got {v.shape}")
        if np.any(np.diff(v) <= 0):
            raise ValueError(f"CQI thresholds are not strictly increasing: {np.round(v, 3)}")

    def __getitem__(self, cqi):
        if not 1 <= cqi <= N_CQI:
            raise IndexError(f"cqi {cqi} outside 1..{N_CQI}")
        return self.values[cqi - 1]

    @property
    def array(self):
        return np.asarray(self.values, float)


def to_db(x):
    return 10.0 * np.log10(x)


def from_db(x):
    return 10.0 ** (np.asarray(x, float) / 10.0)


def eesm(sinrs, beta=1.0):
    """Exponential effective SINR of linear per-subcarrier SINRs (last axis).

    Evaluated as ``-beta * (logsumexp(-s/beta) - log K)`` so large ratios
    neither overflow nor underflow.
    """
    s = np.asarray(sinrs, dtype=float)
    if s.size == 0 or s.shape[-1] == 0:
        raise ValueError("eesm needs at least one SINR value")
    beta = np.asarray(beta, dtype=float)
    if np.any(beta <= 0):
        raise ValueError(f"beta must be positive, got {beta}")
    if np.any(s <= 0) or not np.all(np.isfinite(s)):
        raise ValueError("SINR values must be positive and finite")
    b = beta[..., None] if beta.ndim else beta
    k = s.shape[-1]
    return -beta * (logsumexp(-s / b, axis=-1) - np.log(k))


def eesm_db(sinrs, beta=1.0):
    return to_db(eesm(sinrs, beta))


def sinr_to_cqi(s_eff_db, thresholds):
    """Largest CQI whose threshold is <= ``s_eff_db`` (0 below the table)."""
    thr = thresholds.array if isinstance(thresholds, CqiThresholds) else np.asarray(thresholds)
    out = np.searchsorted(thr, np.asarray(s_eff_db, float), side="right")
    return int(out) if np.ndim(out) == 0 else out


def cqi_to_mcs(cqi, table):
    if not 0 <= cqi <= N_CQI:
        raise ValueError(f"cqi {cqi} outside 0..{N_CQI}")
    if cqi == 0:
        return NO_TRANSMISSION
    return table.entries[cqi - 1]


def bler(cqi, s_eff_db, model):
    """Logistic BLER of CQI ``cqi`` at effective SINR ``s_eff_db`` (vectorized)."""
    c = np.asarray(cqi)
    if np.any((c < 1) | (c > N_CQI)):
        raise ValueError(f"bler defined for cqi 1..{N_CQI}, got {cqi}")
    m = model.m[c - 1]
    k = model.k[c - 1]
    x = k * (np.asarray(s_eff_db, float) - m)
    # 1 / (1 + exp(x)) without overflow
    out = np.exp(-np.logaddexp(0.0, x))
    out = np.clip(out, 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def throughput(bler_value, Q, R, re_per_tti, tti_seconds):
    """Expected bits per second of one transport block per TTI."""
    return (1.0 - np.asarray(bler_value)) * Q * R * re_per_tti / tti_seconds


def constrained_best_cqi(s_eff_db, table, model, target):
    """CQI maximizing Q*R*(1-BLER) among those with BLER <= target (0 if none).

    Direct scan over every table entry; ties go to the higher index.
    """
    s = np.atleast_1d(np.asarray(s_eff_db, float))
    c = np.arange(1, N_CQI + 1)
    b = bler(c[None, :], s[:, None], model)
    tput = table.spectral_efficiencies[None, :] * (1.0 - b)
    tput = np.where(b <= target, tput, -np.inf)
    best = N_CQI - np.argmax(tput[:, ::-1], axis=1)
    best = np.where(np.isfinite(tput.max(axis=1)), best, 0)
    return int(best[0]) if np.ndim(s_eff_db) == 0 else best


def calibrate_thresholds(model, target_bler, table=None):
    """Per-CQI minimum effective SINR for the BLER target.

    Without ``table`` each threshold is where that CQI's own curve crosses
    the target: ``m_c + ln((1 - target) / target) / k_c``. With ``table``
    each threshold is the lowest SINR at which the throughput-maximizing
    feasible CQI reaches ``c``. This can sit slightly above the
    feasibility point when the spectral efficiency step to ``c`` is too
    small to pay for the extra BLER.
    """
    if not 0.0 < target_bler < 1.0:
        raise ValueError(f"target BLER must be in (0, 1), got {target_bler}")
    feasible = model.m + np.log((1.0 - target_bler) / target_bler) / model.k
    if table is None:
        values = feasible
    else:
        values = np.empty(N_CQI)
        for i in range(N_CQI):
            lo, hi = feasible[i], feasible[i] + 60.0
            if constrained_best_cqi(hi, table, model, target_bler) < i + 1:
                raise ValueError(f"cqi {i + 1} never becomes throughput-optimal")
            if constrained_best_cqi(lo, table, model, target_bler) >= i + 1:
                values[i] = lo
                continue
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if constrained_best_cqi(mid, table, model, target_bler) >= i + 1:
                    hi = mid
                else:
                    lo = mid
                if hi - lo < 1e-12:
                    break
            values[i] = hi
    if np.any(np.diff(values) <= 0):
        raise ValueError(f"calibrated thresholds are not strictly increasing: {np.round(values, 3)}")
    return CqiThresholds(tuple(float(v) for v in values))


@dataclass
class LinkConfig:
    """Everything the AMC loop needs to turn SINR into MCS, BLER and bits."""

    table: CqiTable = field(default_factory=CqiTable.nr_256qam)
    bler_model: BlerModel = field(default_factory=BlerModel.default)
    beta: object = 1.0  # scalar, or 15 per-CQI values
    target_bler: float = 0.1
    re_per_tti: float = 48 * 7
    tti: float = 0.5e-3
    calibration: str = "throughput"  # or "feasibility"
    _thresholds: CqiThresholds = field(default=None, repr=False)

    def __post_init__(self):
        b = np.asarray(self.beta, float)
        if b.ndim not in (0, 1) or (b.ndim == 1 and b.shape != (N_CQI,)):
            raise ValueError(f"beta must be a scalar or {N_CQI} per-CQI values")
        if np.any(b <= 0):
            raise ValueError("beta must be positive")
        if self.calibration not in ("throughput", "feasibility"):
            raise ValueError(f"unknown calibration {self.calibration!r}")

    @property
    def thresholds(self):
        if self._thresholds is None:
            table = self.table if self.calibration == "throughput" else None
            self._thresholds = calibrate_thresholds(self.bler_model, self.target_bler, table)
        return self._thresholds

    @property
    def per_cqi_beta(self):
        return np.broadcast_to(np.asarray(self.beta, float), (N_CQI,))

    @property
    def uniform_beta(self):
        return np.ndim(self.beta) == 0 or np.all(self.per_cqi_beta == self.per_cqi_beta[0])

    def select_cqi(self, sinrs):
        """CQI for linear per-subcarrier SINR rows (..., K)."""
        if self.uniform_beta:
            return sinr_to_cqi(eesm_db(sinrs, float(self.per_cqi_beta[0])), self.thresholds)
        s = np.asarray(sinrs, float)
        betas = self.per_cqi_beta
        eff = np.stack([eesm_db(s, b) for b in betas], axis=-1)
        ok = eff >= self.thresholds.array
        # largest feasible index; CQI c is judged with its own beta
        idx = np.where(ok.any(axis=-1), N_CQI - np.argmax(ok[..., ::-1], axis=-1), 0)
        return int(idx) if np.ndim(idx) == 0 else idx

    def effective_sinr_db(self, sinrs, cqi):
        """Effective SINR (dB) of ``sinrs`` rows using the beta of the given CQI."""
        c = np.maximum(np.asarray(cqi), 1)
        beta = self.per_cqi_beta[c - 1]
        return eesm_db(sinrs, beta)
