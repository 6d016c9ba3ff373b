"""Monte-Carlo BER experiments: configuration, frame loops, sweeps and CSV output.

Frame ``f`` of every point draws its bits, channel and noise from
``make_rng(seed, f)``, so all points of a sweep (and all detectors within a
point) see the same underlying realizations.
"""

from __future__ import annotations

import configparser
import csv
import itertools
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel import ChannelProfile, DtChannelTensor, apply_channel, build_dt_tensor, draw_paths, max_doppler_hz, noise_variance
from .chanest import PilotConfig, PilotLayoutError, estimate_dt_channel, estimate_rx_correlation, pilot_frame
from .detect import MODES, ORDERS, SCHEDULES, DetectorConfig, detect_lmmse_dt, detect_mrc
from .modem import FrameParams, dd_to_td, deserialize, qam_map
from .numerics import make_rng

CSV_FIELDS = (
    "mode", "snr_db", "rho_rx", "beta_db", "frames", "bits", "bit_errors",
    "ber", "ci95", "mean_iters", "mean_cm", "dropped",
)
PERFECT = "perfect"
Z95 = 1.959963984540054


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def default_profile(speed_kmh: float = 500.0, f_c: float = 4e9) -> ChannelProfile:
    return ChannelProfile(nu_max=max_doppler_hz(speed_kmh, f_c))


@dataclass(frozen=True)
class SweepPoint:
    snr_db: float
    rho_rx: float
    beta_db: float | None  # None: receiver knows the channel

    @property
    def perfect_csi(self) -> bool:
        return self.beta_db is None


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one CSV needs.

    ``beta_db`` entries of ``None`` mean perfect CSI; numbers switch on the
    embedded pilots with that excess pilot power. ``profile.rho_rx`` is
    overridden by each ``rho_rx`` sweep value.
    """

    frame: FrameParams = field(default_factory=FrameParams)
    profile: ChannelProfile = field(default_factory=default_profile)
    detectors: tuple[DetectorConfig, ...] = (DetectorConfig(mode="MRC"), DetectorConfig(mode="LMMSE"))
    pilot: PilotConfig = field(default_factory=PilotConfig)
    snr_db: tuple[float, ...] = (15.0,)
    rho_rx: tuple[float, ...] = (0.0,)
    beta_db: tuple[float | None, ...] = (None,)
    frames_per_point: int = 1000
    seed: int = 0
    out: str | None = None
    batch_size: int = 64
    threads: int = 1
    corr_normalization: str = "global"

    def __post_init__(self):
        if self.frames_per_point < 1:
            raise ConfigError("frames_per_point must be >= 1")
        if self.batch_size < 1 or self.threads < 1:
            raise ConfigError("batch_size and threads must be >= 1")
        if not self.detectors:
            raise ConfigError("at least one detector mode is required")
        modes = [d.mode for d in self.detectors]
        for m in modes:
            if m not in MODES:
                raise ConfigError(f"unknown mode {m!r}; choose from {MODES}")
        if len(set(modes)) != len(modes):
            raise ConfigError("each mode may appear only once")
        if not (self.snr_db and self.rho_rx and self.beta_db):
            raise ConfigError("sweep lists must not be empty")
        for rho in self.rho_rx:
            if abs(rho) >= 1:
                raise ConfigError(f"|rho_rx| must be < 1, got {rho}")
        if self.corr_normalization not in ("global", "per_term"):
            raise ConfigError(f"unknown correlation normalization {self.corr_normalization!r}")
        try:
            self.profile.check(self.frame)
            if any(b is not None for b in self.beta_db):
                self.pilot.data_rows(self.frame)
        except (ValueError, PilotLayoutError) as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def modes(self) -> tuple[str, ...]:
        return tuple(d.mode for d in self.detectors)

    def points(self) -> list[SweepPoint]:
        """Cartesian sweep, SNR varying fastest."""
        return [SweepPoint(s, r, b) for b, r, s in itertools.product(self.beta_db, self.rho_rx, self.snr_db)]


def wilson_interval(k: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n <= 0:
        return (math.nan, math.nan)
    p = k / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, centre - half), min(1.0, centre + half))


@dataclass
class BerPoint:
    mode: str
    snr_db: float
    rho_rx: float
    beta_db: float | None
    frames: int = 0
    bits: int = 0
    bit_errors: int = 0
    iterations: int = 0
    cm: int = 0
    dropped: int = 0

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits if self.bits else math.nan

    @property
    def interval(self) -> tuple[float, float]:
        return wilson_interval(self.bit_errors, self.bits)

    @property
    def ci95(self) -> float:
        lo, hi = self.interval
        return 0.5 * (hi - lo)

    @property
    def mean_iters(self) -> float:
        return self.iterations / self.frames if self.frames else math.nan

    @property
    def mean_cm(self) -> float:
        return self.cm / self.frames if self.frames else math.nan

    def merge(self, other: "BerPoint") -> None:
        for name in ("frames", "bits", "bit_errors", "iterations", "cm", "dropped"):
            setattr(self, name, getattr(self, name) + getattr(other, name))

    def csv_row(self) -> list[str]:
        return [
            self.mode,
            _fmt(self.snr_db),
            _fmt(self.rho_rx),
            PERFECT if self.beta_db is None else _fmt(self.beta_db),
            str(self.frames),
            str(self.bits),
            str(self.bit_errors),
            f"{self.ber:.6e}",
            f"{self.ci95:.6e}",
            f"{self.mean_iters:.4f}",
            f"{self.mean_cm:.1f}",
            str(self.dropped),
        ]


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{float(v):g}"


# ------------------------------------------------------------ frame loop


def _known_rows(cfg: ExperimentConfig, point: SweepPoint):
    params = cfg.frame
    if point.perfect_csi:
        return params.data_rows(), None, None
    pcfg = replace(cfg.pilot, beta_db=point.beta_db)
    return pcfg.data_rows(params), pilot_frame(pcfg, params), pcfg


def simulate_batch(cfg: ExperimentConfig, point: SweepPoint, frame_ids) -> dict[str, BerPoint]:
    """Run frames ``frame_ids`` of one point through every configured detector."""
    params = cfg.frame
    profile = replace(cfg.profile, rho_rx=point.rho_rx)
    rows, pilots, pcfg = _known_rows(cfg, point)
    nv = noise_variance(point.snr_db)
    n_sym = int(rows.sum()) * params.N
    n_bits = n_sym * params.bits_per_symbol

    sent, ys, tensors = [], [], []
    dropped = 0
    for f in frame_ids:
        rng = make_rng(cfg.seed, int(f))
        bits = rng.integers(0, 2, size=(params.n_T, n_bits), dtype=np.int8)
        x = np.zeros((params.n_T, params.M, params.N), dtype=np.complex128)
        x[:, rows] = qam_map(bits, params.mod_order).reshape(params.n_T, -1, params.N)
        if pilots is not None:
            x += pilots
        paths = draw_paths(profile, params, rng)
        y_dt = deserialize(apply_channel(dd_to_td(x, params), paths, params, point.snr_db, rng), params)
        if pcfg is None:
            tensor = build_dt_tensor(paths, params, profile.delay_taps)
        else:
            est = estimate_dt_channel(y_dt, pcfg, params, nv)
            if est.failed:
                dropped += 1
                continue
            tensor = est.tensor
        sent.append(bits)
        ys.append(y_dt)
        tensors.append(tensor)

    out = {m: BerPoint(m, point.snr_db, point.rho_rx, point.beta_db, dropped=dropped) for m in cfg.modes}
    if not ys:
        return out
    B = len(ys)
    Y = np.stack(ys)
    T = DtChannelTensor.stack(tensors)
    bits = np.stack(sent)
    known = None if pilots is None else np.broadcast_to(pilots, (B, *pilots.shape)).copy()
    for det in cfg.detectors:
        if det.mode == "LMMSE":
            rep = detect_lmmse_dt(Y, T, nv, rows, params.mod_order, known)
        else:
            r_rx = estimate_rx_correlation(T.coeffs, cfg.corr_normalization) if det.mode == "MRCw" else None
            rep = detect_mrc(Y, T, det, rows, params.mod_order, known, r_rx=r_rx)
        acc = out[det.mode]
        acc.frames = B
        acc.bits = int(bits.size)
        acc.bit_errors = int(np.count_nonzero(rep.bits != bits))
        acc.iterations = int(np.sum(rep.iterations))
        acc.cm = int(np.sum(rep.cm_total))
    return out


def run_point(cfg: ExperimentConfig, point: SweepPoint, threads: int | None = None) -> dict[str, BerPoint]:
    """All frames of one sweep point; batches may run on a thread pool.

    Batches are fixed by frame index and merged in that order with integer
    sums, so the result does not depend on ``threads``.
    """
    threads = cfg.threads if threads is None else threads
    ids = np.arange(cfg.frames_per_point)
    batches = [ids[i : i + cfg.batch_size] for i in range(0, len(ids), cfg.batch_size)]
    if threads > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: simulate_batch(cfg, point, b), batches))
    else:
        parts = [simulate_batch(cfg, point, b) for b in batches]
    total = {m: BerPoint(m, point.snr_db, point.rho_rx, point.beta_db) for m in cfg.modes}
    for part in parts:
        for m in cfg.modes:
            total[m].merge(part[m])
    return total


def run_experiment(cfg: ExperimentConfig, out: str | Path | None = None, progress: bool = True) -> list[BerPoint]:
    """Sweep every point, append one CSV row per (point, mode) as it finishes.

    Raises ``OSError`` before any simulation when the output cannot be written.
    """
    out = cfg.out if out is None else out
    fh = None
    if out is not None:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        fh = open(path, "w", newline="", encoding="ascii")
    try:
        writer = csv.writer(fh, lineterminator="\n") if fh else None
        if writer:
            writer.writerow(CSV_FIELDS)
        results = []
        points = cfg.points()
        t0 = time.monotonic()
        for i, point in enumerate(points, 1):
            res = run_point(cfg, point)
            for m in cfg.modes:
                results.append(res[m])
                if writer:
                    writer.writerow(res[m].csv_row())
            if fh:
                fh.flush()
            if progress:
                elapsed = time.monotonic() - t0
                eta = elapsed / i * (len(points) - i)
                bers = " ".join(f"{m}={res[m].ber:.3e}" for m in cfg.modes)
                beta = PERFECT if point.perfect_csi else f"{point.beta_db:g}dB"
                print(f"[{i}/{len(points)}] snr={_fmt(point.snr_db)} rho={point.rho_rx:g} beta={beta} "
                      f"{bers} elapsed={elapsed:.1f}s eta={eta:.1f}s", file=sys.stderr, flush=True)
        return results
    finally:
        if fh:
            fh.close()


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="ascii") as fh:
        return list(csv.DictReader(fh))


def crossing_snr(snr_db, ber, target: float) -> float:
    """SNR where the BER curve first falls to ``target``, log-linear interpolation.

    Returns ``nan`` when the curve never crosses.
    """
    snr = np.asarray(snr_db, dtype=float)
    b = np.asarray(ber, dtype=float)
    for i in range(len(snr) - 1):
        if b[i] >= target > b[i + 1]:
            lo, hi = np.log10(max(b[i], 1e-300)), np.log10(max(b[i + 1], 1e-300))
            frac = (lo - np.log10(target)) / (lo - hi)
            return float(snr[i] + frac * (snr[i + 1] - snr[i]))
    return math.nan


# -------------------------------------------------------------- presets


def _snr_range(lo: float, hi: float, step: float) -> tuple[float, ...]:
    return tuple(float(v) for v in np.arange(lo, hi + step / 2, step))


def _modes(*names: str, **kw) -> tuple[DetectorConfig, ...]:
    return tuple(DetectorConfig(mode=n, **kw) for n in names)


def _frame(M: int, N: int, n: int) -> FrameParams:
    return FrameParams(M=M, N=N, L_G=4, n_T=n, n_R=n)


def presets() -> dict[str, list[tuple[str, ExperimentConfig]]]:
    """Named experiments; each is a list of ``(suffix, config)`` variants, one CSV per variant."""
    fig1 = lambda M, frames: [  # noqa: E731
        (f"{n}x{n}", ExperimentConfig(frame=_frame(M, M, n), detectors=_modes("MRC", "LMMSE"),
                                      snr_db=_snr_range(0, 20, 2.5), frames_per_point=frames))
        for n in (1, 2)
    ]
    fig2 = lambda M, sizes, frames: [  # noqa: E731
        (f"{n}x{n}", ExperimentConfig(frame=_frame(M, M, n), detectors=_modes("MRC", "MRCw", "LMMSE"),
                                      snr_db=(20.0,), rho_rx=(0.0, 0.3, 0.6, 0.9), frames_per_point=frames))
        for n in sizes
    ]

    def fig3(M_csi, M, frames):
        # pilot regions of two antennas need 18 delay rows, so the CSI variant may use a taller frame
        return [
            ("perfect", ExperimentConfig(frame=_frame(M, M, 2),
                                         detectors=_modes("MRC", "MRCw", "LMMSE"),
                                         snr_db=_snr_range(0, 30, 2.5), rho_rx=(0.0, 0.9),
                                         frames_per_point=frames)),
            ("csi", ExperimentConfig(frame=_frame(M_csi, M, 2), detectors=_modes("MRCw", "LMMSE"),
                                     snr_db=_snr_range(0, 30, 2.5), rho_rx=(0.0, 0.9),
                                     beta_db=(None, 20.0, 30.0), frames_per_point=frames)),
        ]

    return {
        "smoke": [("", ExperimentConfig(snr_db=(10.0, 20.0), frames_per_point=64))],
        "fig1-desk": fig1(16, 10_000),
        "fig2-desk": fig2(16, (2,), 20_000),
        "fig3-desk": fig3(32, 16, 5_000),
        "fig1-full": fig1(32, 100_000),
        "fig2-full": fig2(32, (2, 4), 100_000),
        "fig3-full": fig3(32, 32, 100_000),
    }


PRESET_NOTES = {
    "smoke": "2x2, M=N=16, MRC vs LMMSE at 10 and 20 dB, 64 frames (seconds)",
    "fig1-desk": "M=N=16, 1x1 and 2x2, perfect CSI, SNR 0-20 dB, 1e4 frames/point",
    "fig2-desk": "M=N=16, 2x2, SNR 20 dB, rho_rx 0/0.3/0.6/0.9, MRC/MRCw/LMMSE, 2e4 frames/point",
    "fig3-desk": "2x2, rho_rx 0/0.9; perfect CSI at M=N=16 and pilot-based CSI (beta 20/30 dB) at M=32, N=16",
    "fig1-full": "as fig1-desk at M=N=32 with 1e5 frames/point (hours)",
    "fig2-full": "as fig2-desk at M=N=32, 2x2 and 4x4, 1e5 frames/point (hours)",
    "fig3-full": "as fig3-desk at M=N=32, 1e5 frames/point (hours)",
}


# --------------------------------------------------------- config files

# (section, key) -> help text; the CLI prints this table in --help
CONFIG_KEYS: dict[tuple[str, str], str] = {
    ("frame", "M"): "delay bins per block (power of two)",
    ("frame", "N"): "Doppler bins / time blocks (power of two)",
    ("frame", "L_G"): "guard length per block in samples",
    ("frame", "delta_f"): "subcarrier spacing in Hz",
    ("frame", "f_c"): "carrier frequency in Hz",
    ("frame", "n_T"): "transmit antennas",
    ("frame", "n_R"): "receive antennas",
    ("frame", "guard"): "ZP or CP",
    ("frame", "mod_order"): "QAM order: 4, 16 or 64",
    ("channel", "delay_taps"): "comma list of integer delay taps, one path each",
    ("channel", "pdp"): "comma list of tap powers summing to 1 (default uniform)",
    ("channel", "speed_kmh"): "maximum UE speed; sets the maximum Doppler with f_c",
    ("channel", "rho_tx"): "transmit correlation coefficient",
    ("detector", "modes"): "comma list from MRC, MRCw, LMMSE",
    ("detector", "max_iters"): "iteration cap for MRC/MRCw",
    ("detector", "delta"): "damping factor toward hard decisions",
    ("detector", "stop_tol"): "relative residual decrease below which iterations stop",
    ("detector", "schedule"): "symbol or sweep: where the damped decision is applied",
    ("detector", "order"): "tx_outer or row_outer: symbol-vector visit order within a sweep",
    ("detector", "corr_normalization"): "global or per_term receive-correlation estimate",
    ("pilot", "L"): "delay span covered by pilot guards",
    ("pilot", "k_p"): "pilot Doppler index (default N/2)",
    ("pilot", "gamma"): "path detection threshold in noise standard deviations",
    ("sweep", "snr_db"): "comma list of SNRs in dB (inf for noiseless)",
    ("sweep", "rho_rx"): "comma list of receive correlation coefficients",
    ("sweep", "beta_db"): "comma list of excess pilot powers in dB, or 'perfect'",
    ("sweep", "frames_per_point"): "frames simulated at each point",
    ("run", "seed"): "master seed",
    ("run", "out"): "CSV output path",
    ("run", "batch_size"): "frames per detector batch",
    ("run", "threads"): "worker threads for batches",
}


def config_help() -> str:
    lines = ["config file keys (INI sections):"]
    section = None
    for (sec, key), text in CONFIG_KEYS.items():
        if sec != section:
            lines.append(f"  [{sec}]")
            section = sec
        lines.append(f"    {key:<20} {text}")
    return "\n".join(lines)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _betas(text: str) -> tuple[float | None, ...]:
    vals = []
    for v in text.replace(",", " ").split():
        vals.append(None if v.lower() == PERFECT else float(v))
    return tuple(vals)


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Overlay an INI text on ``base`` (defaults when omitted).

    Unknown sections or keys, and malformed values, raise :class:`ConfigError`.
    """
    base = base or ExperimentConfig()
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    known = {}
    for sec in cp.sections():
        for key, val in cp.items(sec):
            if (sec, key) not in CONFIG_KEYS:
                raise ConfigError(f"unknown config key [{sec}] {key}")
            known[(sec, key)] = val.strip()
    get = lambda s, k: known.get((s, k))  # noqa: E731
    try:
        frame_kw = {}
        for k in ("M", "N", "L_G", "n_T", "n_R", "mod_order"):
            if get("frame", k) is not None:
                frame_kw[k] = int(get("frame", k))
        for k in ("delta_f", "f_c"):
            if get("frame", k) is not None:
                frame_kw[k] = float(get("frame", k))
        if get("frame", "guard") is not None:
            frame_kw["guard"] = get("frame", "guard").upper()
        frame = replace(base.frame, **frame_kw)

        prof_kw = {}
        if get("channel", "delay_taps") is not None:
            prof_kw["delay_taps"] = tuple(int(v) for v in _floats(get("channel", "delay_taps")))
            prof_kw["pdp"] = None
        if get("channel", "pdp") is not None:
            prof_kw["pdp"] = _floats(get("channel", "pdp"))
        if get("channel", "speed_kmh") is not None:
            prof_kw["nu_max"] = max_doppler_hz(float(get("channel", "speed_kmh")), frame.f_c)
        if get("channel", "rho_tx") is not None:
            prof_kw["rho_tx"] = float(get("channel", "rho_tx"))
        profile = replace(base.profile, **prof_kw)

        det_kw = {}
        for k, conv in (("max_iters", int), ("delta", float), ("stop_tol", float), ("schedule", str), ("order", str)):
            if get("detector", k) is not None:
                det_kw[k] = conv(get("detector", k))
        if det_kw.get("schedule", SCHEDULES[0]) not in SCHEDULES:
            raise ConfigError(f"schedule must be one of {SCHEDULES}")
        if det_kw.get("order", ORDERS[0]) not in ORDERS:
            raise ConfigError(f"order must be one of {ORDERS}")
        modes = base.modes
        if get("detector", "modes") is not None:
            modes = tuple(v.strip() for v in get("detector", "modes").replace(",", " ").split())
        template = base.detectors[0]
        detectors = tuple(replace(template, mode=m, **det_kw) for m in modes)

        pil_kw = {}
        if get("pilot", "L") is not None:
            pil_kw["L"] = int(get("pilot", "L"))
        if get("pilot", "k_p") is not None:
            pil_kw["k_p"] = int(get("pilot", "k_p"))
        if get("pilot", "gamma") is not None:
            pil_kw["gamma"] = float(get("pilot", "gamma"))
        pilot = replace(base.pilot, **pil_kw)

        top = {}
        if get("sweep", "snr_db") is not None:
            top["snr_db"] = _floats(get("sweep", "snr_db"))
        if get("sweep", "rho_rx") is not None:
            top["rho_rx"] = _floats(get("sweep", "rho_rx"))
        if get("sweep", "beta_db") is not None:
            top["beta_db"] = _betas(get("sweep", "beta_db"))
        for sec, k in (("sweep", "frames_per_point"), ("run", "seed"), ("run", "batch_size"), ("run", "threads")):
            if get(sec, k) is not None:
                top[k] = int(get(sec, k))
        if get("run", "out") is not None:
            top["out"] = get("run", "out")
        if get("detector", "corr_normalization") is not None:
            top["corr_normalization"] = get("detector", "corr_normalization")
        return replace(base, frame=frame, profile=profile, detectors=detectors, pilot=pilot, **top)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, base)
