"""Per-subcarrier SINR traces over a time- and frequency-selective fading channel.

Each tap of a power-delay profile carries an independent unit-power
Rayleigh process built from a sum of sinusoids with Jakes (uniform
angle-of-arrival) Doppler spread. Subcarrier gains follow from the tapped
delay line evaluated at the subcarrier frequencies.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field, replace

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

PROFILES = {
    "uma": {
        "delays_s": (0.0, 100e-9, 200e-9, 400e-9, 800e-9, 1600e-9),
        "powers_db": (0.0, -2.0, -4.0, -8.0, -12.0, -16.0),
    },
    "umi": {
        "delays_s": (0.0, 50e-9, 100e-9, 200e-9, 400e-9, 800e-9),
        "powers_db": (0.0, -2.0, -4.0, -8.0, -12.0, -16.0),
    },
    "flat": {"delays_s": (0.0,), "powers_db": (0.0,)},
}

PROFILE_ALIASES = {"uma-like": "uma", "umi-like": "umi"}


@dataclass(frozen=True)
class PowerDelayProfile:
    name: str
    delays_s: tuple
    powers_db: tuple

    def __post_init__(self):
        if len(self.delays_s) == 0:
            raise ValueError(f"power-delay profile {self.name!r} has no taps")
        if len(self.delays_s) != len(self.powers_db):
            raise ValueError("tap delays and tap powers differ in length")

    @property
    def linear_powers(self):
        p = 10.0 ** (np.asarray(self.powers_db, dtype=float) / 10.0)
        return p / p.sum()

    @classmethod
    def named(cls, name):
        key = PROFILE_ALIASES.get(name.lower(), name.lower())
        if key not in PROFILES:
            raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
        return cls(key, **PROFILES[key])


@dataclass(frozen=True)
class ChannelConfig:
    fc: float = 2.4e9
    df: float = 15e3
    K: int = 48
    tti: float = 0.5e-3
    pbs_dbm: float = 40.0
    noise_dbm: float = -84.0
    velocity_kmh: float = 60.0
    profile: PowerDelayProfile = field(default_factory=lambda: PowerDelayProfile.named("uma"))
    large_scale: tuple = (10.0, 30.0)
    seed: int = 0
    n_sinusoids: int = 64

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.velocity_kmh < 0:
            raise ValueError(f"velocity must be >= 0, got {self.velocity_kmh}")
        if self.n_sinusoids < 32:
            raise ValueError(f"need >= 32 sinusoids per tap, got {self.n_sinusoids}")
        lo, hi = self.large_scale
        if lo > hi:
            raise ValueError(f"large-scale SNR range inverted: {self.large_scale}")
        if isinstance(self.profile, str):
            object.__setattr__(self, "profile", PowerDelayProfile.named(self.profile))

    @property
    def bandwidth(self):
        return self.df * self.K

    @property
    def subcarrier_freqs(self):
        return (np.arange(self.K) - (self.K - 1) / 2.0) * self.df


@dataclass
class SinrTrace:
    values: np.ndarray  # (T, K) linear SINR
    tti: float
    velocity_kmh: float
    seed: int
    profile_name: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise ValueError(f"trace values must be (T>=1, K), got {self.values.shape}")
        if not np.all(np.isfinite(self.values)) or np.any(self.values <= 0):
            raise ValueError("trace SINR values must be positive and finite")

    @property
    def T(self):
        return self.values.shape[0]

    @property
    def K(self):
        return self.values.shape[1]

    @property
    def values_db(self):
        return 10.0 * np.log10(self.values)


@dataclass
class SinrDataset:
    """History/target pairs in linear SINR: ``history`` (n, L, K), ``target`` (n, K)."""

    history: np.ndarray
    target: np.ndarray
    velocities: np.ndarray
    L: int
    T_m: int
    T_d: int
    tti: float
    seed: int
    profile_name: str
    speed_range: tuple
    digest: str = ""

    def __len__(self):
        return len(self.history)

    @property
    def K(self):
        return self.history.shape[2] if self.history.ndim == 3 else 0

    @property
    def history_db(self):
        return 10.0 * np.log10(self.history)

    @property
    def target_db(self):
        return 10.0 * np.log10(self.target)

    def subset(self, index):
        return replace(
            self, history=self.history[index], target=self.target[index],
            velocities=self.velocities[index],
        )


def doppler_frequency(velocity_kmh, fc=2.4e9):
    """Maximum Doppler shift in Hz for a user moving at ``velocity_kmh``."""
    if velocity_kmh < 0:
        raise ValueError(f"velocity must be >= 0, got {velocity_kmh}")
    return velocity_kmh / 3.6 * fc / SPEED_OF_LIGHT


def _draw_fading(rng, n_taps, n_sinusoids):
    # stratified arrival angles keep the finite sum close to the Jakes spectrum
    offsets = rng.uniform(0.0, 1.0, (n_taps, n_sinusoids))
    angles = 2.0 * np.pi * (np.arange(n_sinusoids) + offsets) / n_sinusoids
    phases = rng.uniform(0.0, 2.0 * np.pi, (n_taps, n_sinusoids))
    return np.cos(angles), phases


def _tap_processes(cos_angles, phases, fd, times):
    """(..., taps, M) draws -> (..., taps, T) complex unit-power tap gains."""
    m = cos_angles.shape[-1]
    arg = (2.0 * np.pi * fd)[..., None, None, None] * cos_angles[..., None] * times
    arg = arg + phases[..., None]
    return np.exp(1j * arg).sum(axis=-2) / np.sqrt(m)


def _subcarrier_gains(taps, config):
    """Tap gains (..., taps, T) -> subcarrier responses (..., T, K)."""
    prof = config.profile
    steering = np.sqrt(prof.linear_powers)[:, None] * np.exp(
        -2j * np.pi * np.outer(prof.delays_s, config.subcarrier_freqs)
    )
    return np.einsum("...lt,lk->...tk", taps, steering)


def _snr_scale(config, mean_snr_db):
    p_lin = 10.0 ** ((config.pbs_dbm - 30.0) / 10.0)
    n_lin = 10.0 ** ((config.noise_dbm - 30.0) / 10.0)
    g_ls = 10.0 ** (np.asarray(mean_snr_db) / 10.0) * n_lin / p_lin
    return g_ls * p_lin / n_lin


# SINR values are stored as float32; keep them strictly positive there
_SINR_FLOOR = 1e-12


def _trace_from_draws(config, rng, T, velocity_kmh):
    n_taps = len(config.profile.delays_s)
    mean_snr_db = rng.uniform(*config.large_scale)
    cos_a, ph = _draw_fading(rng, n_taps, config.n_sinusoids)
    fd = np.asarray(doppler_frequency(velocity_kmh, config.fc))
    times = np.arange(T) * config.tti
    taps = _tap_processes(cos_a, ph, fd, times)
    gains = _subcarrier_gains(taps, config)
    return np.maximum(_snr_scale(config, mean_snr_db) * np.abs(gains) ** 2, _SINR_FLOOR)


def complex_gains(config, T, rng):
    """Unit-average-power subcarrier responses (T, K) for one realization; used by tests."""
    n_taps = len(config.profile.delays_s)
    cos_a, ph = _draw_fading(rng, n_taps, config.n_sinusoids)
    fd = np.asarray(doppler_frequency(config.velocity_kmh, config.fc))
    taps = _tap_processes(cos_a, ph, fd, np.arange(T) * config.tti)
    return _subcarrier_gains(taps, config)


def generate_trace(config, T):
    """One SINR trace of ``T`` TTIs, fully determined by ``config`` (including its seed)."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    rng = np.random.default_rng(config.seed)
    values = _trace_from_draws(config, rng, T, config.velocity_kmh)
    return SinrTrace(values, config.tti, config.velocity_kmh, config.seed, config.profile.name)


def generate_traces(config, T, count, seed=None):
    """``count`` independent traces at ``config.velocity_kmh`` with per-trace child seeds."""
    seed = config.seed if seed is None else seed
    children = np.random.SeedSequence(seed).generate_state(max(count, 1), dtype=np.uint64)
    return [
        generate_trace(replace(config, seed=int(s)), T) for s in children[:count]
    ]


def span_ttis(L, T_m, T_d):
    """TTIs covered by one history plus its target: (L-1)*T_m + T_d + 1."""
    return (L - 1) * T_m + T_d + 1


def sample_dataset(config, count, seed, L=16, T_m=2, T_d=2, speed_range=(40.0, 100.0)):
    """Independent (history, target) pairs, one short trace per sample.

    Sample ``i`` draws its velocity uniformly from ``speed_range``, then a
    fresh fading realization and mean SNR; history rows are taken every
    ``T_m`` TTIs and the target ``T_d`` TTIs after the last history row.
    """
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    if L < 1 or T_m < 1 or T_d < 0:
        raise ValueError(f"invalid timing L={L}, T_m={T_m}, T_d={T_d}")
    lo, hi = speed_range
    if lo > hi or lo < 0:
        raise ValueError(f"invalid speed range {speed_range}")
    T = span_ttis(L, T_m, T_d)
    rows = np.arange(L) * T_m
    target_row = (L - 1) * T_m + T_d
    n_taps = len(config.profile.delays_s)
    K = config.K
    history = np.empty((count, L, K))
    target = np.empty((count, K))
    velocities = np.empty(count)
    if count:
        seeds = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)
        cos_all = np.empty((count, n_taps, config.n_sinusoids))
        ph_all = np.empty_like(cos_all)
        snr_all = np.empty(count)
        for i, s in enumerate(seeds):
            rng = np.random.default_rng(int(s))
            velocities[i] = rng.uniform(lo, hi)
            snr_all[i] = rng.uniform(*config.large_scale)
            cos_all[i], ph_all[i] = _draw_fading(rng, n_taps, config.n_sinusoids)
        times = np.concatenate([rows, [target_row]]) * config.tti
        fd_all = np.array([doppler_frequency(v, config.fc) for v in velocities])
        chunk = 256
        for start in range(0, count, chunk):
            sl = slice(start, start + chunk)
            taps = _tap_processes(cos_all[sl], ph_all[sl], fd_all[sl], times)
            gains = _subcarrier_gains(taps, config)
            sinr = _snr_scale(config, snr_all[sl])[:, None, None] * np.abs(gains) ** 2
            sinr = np.maximum(sinr, _SINR_FLOOR)
            history[sl] = sinr[:, :L]
            target[sl] = sinr[:, L]
    ds = SinrDataset(
        history=history, target=target, velocities=velocities, L=L, T_m=T_m, T_d=T_d,
        tti=config.tti, seed=seed, profile_name=config.profile.name,
        speed_range=(float(lo), float(hi)),
    )
    return ds


def extract_pairs(trace, L, T_m, T_d, stride=None):
    """Slide the (history, target) window over a long trace; returns arrays in linear SINR."""
    need = span_ttis(L, T_m, T_d)
    if trace.T < need:
        raise ValueError(
            f"trace has {trace.T} TTIs, need at least {need} for L={L}, T_m={T_m}, T_d={T_d}"
        )
    stride = T_m if stride is None else stride
    starts = np.arange(0, trace.T - need + 1, stride)
    idx = starts[:, None] + np.arange(L)[None, :] * T_m
    hist = trace.values[idx]
    tgt = trace.values[starts + (L - 1) * T_m + T_d]
    return hist, tgt


# ---------------------------------------------------------------------------
# AMCT file format
# ---------------------------------------------------------------------------

AMCT_MAGIC = b"AMCT"
AMCT_VERSION = 1
KIND_TRACES = 0
KIND_DATASET = 1
_HEADER = struct.Struct("<BIIIIIIIIIQ")


@dataclass
class AmctHeader:
    kind: int
    count: int
    rows: int
    K: int
    L: int
    T_m: int
    T_d: int
    tti_us: int
    velocity_lo_mm_s: int
    velocity_hi_mm_s: int
    seed: int
    profile_name: str
    digest: str = ""

    @property
    def kind_name(self):
        return "dataset" if self.kind == KIND_DATASET else "traces"


def _mm_s(kmh):
    return int(round(kmh / 3.6 * 1000.0))


def _pack_str(s):
    raw = s.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def _unpack_str(blob, pos):
    (n,) = struct.unpack_from("<H", blob, pos)
    pos += 2
    return blob[pos : pos + n].decode("utf-8"), pos + n


def _encode(header, velocities_kmh, body):
    parts = [
        AMCT_MAGIC,
        struct.pack("<I", AMCT_VERSION),
        _HEADER.pack(
            header.kind, header.count, header.rows, header.K, header.L, header.T_m,
            header.T_d, header.tti_us, header.velocity_lo_mm_s, header.velocity_hi_mm_s,
            header.seed % (1 << 64),
        ),
        _pack_str(header.profile_name),
        _pack_str(header.digest),
        np.asarray([_mm_s(v) for v in velocities_kmh], dtype="<u4").tobytes(),
        np.ascontiguousarray(body, dtype="<f4").tobytes(),
    ]
    return b"".join(parts)


def encode_dataset(ds, digest=""):
    header = AmctHeader(
        KIND_DATASET, len(ds), ds.L + 1, ds.K if len(ds) else ds.history.shape[-1],
        ds.L, ds.T_m, ds.T_d, int(round(ds.tti * 1e6)), _mm_s(ds.speed_range[0]),
        _mm_s(ds.speed_range[1]), ds.seed, ds.profile_name, digest or ds.digest,
    )
    if len(ds):
        body = np.concatenate([ds.history, ds.target[:, None, :]], axis=1)
    else:
        body = np.zeros((0,))
    return _encode(header, ds.velocities, body)


def encode_traces(traces, digest="", timing=(0, 0, 0), seed=None):
    if not traces:
        raise ValueError("no traces to encode")
    T, K = traces[0].values.shape
    if any(t.values.shape != (T, K) for t in traces):
        raise ValueError("all traces in one file must share (T, K)")
    vels = [t.velocity_kmh for t in traces]
    L, T_m, T_d = timing
    header = AmctHeader(
        KIND_TRACES, len(traces), T, K, L, T_m, T_d, int(round(traces[0].tti * 1e6)),
        _mm_s(min(vels)), _mm_s(max(vels)), traces[0].seed if seed is None else seed,
        traces[0].profile_name, digest,
    )
    body = np.stack([t.values for t in traces])
    return _encode(header, vels, body)


def decode_header(blob):
    if blob[:4] != AMCT_MAGIC:
        raise ValueError(f"not an AMCT file (magic {blob[:4]!r})")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != AMCT_VERSION:
        raise ValueError(f"unsupported AMCT version {version}")
    fields = _HEADER.unpack_from(blob, 8)
    pos = 8 + _HEADER.size
    profile, pos = _unpack_str(blob, pos)
    digest, pos = _unpack_str(blob, pos)
    return AmctHeader(*fields, profile_name=profile, digest=digest), pos


def decode(blob):
    """Return ``(header, payload)``: a :class:`SinrDataset` or a list of :class:`SinrTrace`."""
    header, pos = decode_header(blob)
    n = header.count
    vel_mm = np.frombuffer(blob, dtype="<u4", count=n, offset=pos)
    pos += 4 * n
    vel_kmh = vel_mm.astype(float) * 3.6 / 1000.0
    size = n * header.rows * header.K
    body = np.frombuffer(blob, dtype="<f4", count=size, offset=pos)
    if pos + 4 * size != len(blob):
        raise ValueError("AMCT body length does not match header")
    body = body.reshape(n, header.rows, header.K).astype(np.float64)
    tti = header.tti_us * 1e-6
    if header.kind == KIND_DATASET:
        lo = header.velocity_lo_mm_s * 3.6 / 1000.0
        hi = header.velocity_hi_mm_s * 3.6 / 1000.0
        ds = SinrDataset(
            history=body[:, : header.L], target=body[:, header.L], velocities=vel_kmh,
            L=header.L, T_m=header.T_m, T_d=header.T_d, tti=tti, seed=header.seed,
            profile_name=header.profile_name, speed_range=(lo, hi), digest=header.digest,
        )
        return header, ds
    traces = [
        SinrTrace(body[i], tti, float(vel_kmh[i]), header.seed, header.profile_name)
        for i in range(n)
    ]
    return header, traces


def write_file(path, blob):
    with open(path, "wb") as fh:
        fh.write(blob)


def read_file(path):
    with open(path, "rb") as fh:
        return decode(fh.read())


def read_header(path):
    with open(path, "rb") as fh:
        return decode_header(fh.read())[0]


def blob_digest(blob):
    return hashlib.sha256(blob).hexdigest()[:16]
