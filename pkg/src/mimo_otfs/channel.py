"""Spatially correlated doubly-dispersive MIMO channel.

A realization is a :class:`PathSet`: per (rx, tx) sub-channel a list of paths
with complex gain, integer delay tap and real normalized Doppler. The detector
works on the sampled delay-time coefficients

    g[l, q] = sum_i h_i * z**((q - l) * kappa_i) * [l == l_i],   z = exp(2j*pi/(M*N))

collected into a :class:`DtChannelTensor` indexed ``[r, t, l, m, n]`` with
``q = m + n*(M + L_G)``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .modem import FrameParams
from .numerics import cholesky_lower, sample_complex_gaussian

SPEED_OF_LIGHT = 299_792_458.0


def max_doppler_hz(speed_kmh: float, f_c: float) -> float:
    """Maximum Doppler shift ``v/c * f_c`` for a speed in km/h."""
    return speed_kmh / 3.6 / SPEED_OF_LIGHT * f_c


def exp_correlation_matrix(n: int, rho: complex) -> np.ndarray:
    """Exponential correlation matrix: ``R[j, i] = rho**(j-i)`` for ``i <= j``, Hermitian."""
    if abs(rho) >= 1:
        raise ValueError(f"|rho| must be < 1, got {abs(rho)}")
    if n < 1:
        raise ValueError("n must be positive")
    j, i = np.indices((n, n))
    lower = np.asarray(rho, dtype=np.complex128) ** np.maximum(j - i, 0)
    return np.where(j >= i, lower, lower.T.conj())


@dataclass(frozen=True)
class ChannelProfile:
    """Statistics of the channel realizations.

    ``pdp`` defaults to a uniform power delay profile over ``delay_taps``; one
    path per distinct delay.
    """

    delay_taps: tuple[int, ...] = (0, 1, 2, 3, 4)
    pdp: tuple[float, ...] | None = None
    nu_max: float = 0.0
    rho_rx: complex = 0.0
    rho_tx: complex = 0.0

    def __post_init__(self):
        taps = tuple(int(d) for d in self.delay_taps)
        if not taps or len(set(taps)) != len(taps) or min(taps) < 0:
            raise ValueError(f"delay taps must be distinct non-negative integers, got {self.delay_taps}")
        object.__setattr__(self, "delay_taps", taps)
        if self.pdp is None:
            object.__setattr__(self, "pdp", tuple([1.0 / len(taps)] * len(taps)))
        if len(self.pdp) != len(taps):
            raise ValueError("pdp must have one entry per delay tap")
        if any(p < 0 for p in self.pdp) or not np.isclose(sum(self.pdp), 1.0):
            raise ValueError("pdp must be non-negative and sum to 1")
        for rho in (self.rho_rx, self.rho_tx):
            if abs(rho) >= 1:
                raise ValueError(f"|rho| must be < 1, got {rho}")
        if self.nu_max < 0:
            raise ValueError("nu_max must be non-negative")

    @property
    def P(self) -> int:
        return len(self.delay_taps)

    @property
    def max_delay(self) -> int:
        return max(self.delay_taps)

    def kappa_max(self, params: FrameParams) -> float:
        """Maximum normalized Doppler ``nu_max * N * T``."""
        return self.nu_max * params.N * params.T

    def check(self, params: FrameParams) -> None:
        if self.max_delay > params.L_G:
            raise ValueError(f"max delay {self.max_delay} exceeds guard length {params.L_G}")


@dataclass
class PathSet:
    """One channel realization; every array has shape ``(n_R, n_T, P)``."""

    gains: np.ndarray
    delays: np.ndarray
    dopplers: np.ndarray

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=np.complex128)
        self.delays = np.broadcast_to(np.asarray(self.delays, dtype=np.int64), self.gains.shape).copy()
        self.dopplers = np.broadcast_to(np.asarray(self.dopplers, dtype=np.float64), self.gains.shape).copy()
        if self.gains.ndim != 3:
            raise ValueError("gains must have shape (n_R, n_T, P)")
        if not np.all(np.isfinite(self.gains)):
            raise ValueError("gains must be finite")

    @property
    def n_R(self) -> int:
        return self.gains.shape[0]

    @property
    def n_T(self) -> int:
        return self.gains.shape[1]

    def delay_set(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.delays.ravel().tolist())))

    @classmethod
    def single(cls, h: complex, delay: int, doppler: float, n_R: int = 1, n_T: int = 1) -> "PathSet":
        """Same single path on every sub-channel; handy for probes."""
        shape = (n_R, n_T, 1)
        return cls(np.full(shape, h, dtype=np.complex128), np.full(shape, delay), np.full(shape, doppler))


def draw_paths(profile: ChannelProfile, params: FrameParams, rng: np.random.Generator) -> PathSet:
    """Draw one realization with Kronecker receive/transmit correlation.

    Delays and Dopplers are common to all sub-channels; only the gains vary
    across antennas, shaped as ``C_rx @ A_i @ C_tx^H``.
    """
    c_rx = cholesky_lower(exp_correlation_matrix(params.n_R, profile.rho_rx))
    c_tx = cholesky_lower(exp_correlation_matrix(params.n_T, profile.rho_tx))
    P = profile.P
    a = sample_complex_gaussian(rng, (P, params.n_R, params.n_T))
    a *= np.sqrt(np.asarray(profile.pdp))[:, None, None]
    h = c_rx @ a @ c_tx.conj().T  # (P, n_R, n_T)
    theta = rng.uniform(-np.pi, np.pi, size=P)
    kappa = profile.kappa_max(params) * np.cos(theta)
    gains = np.moveaxis(h, 0, -1)
    shape = gains.shape
    delays = np.broadcast_to(np.asarray(profile.delay_taps), shape)
    return PathSet(gains, delays, np.broadcast_to(kappa, shape))


@dataclass
class DtChannelTensor:
    """Delay-time coefficients ``coeffs[..., r, t, l, m, n]`` for delays ``delays[l]``.

    Leading axes let a batch of frames share one container.
    """

    coeffs: np.ndarray
    delays: tuple[int, ...]
    zp: bool = True
    z: complex = field(default=0j)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.coeffs.shape

    @property
    def M(self) -> int:
        return self.coeffs.shape[-2]

    @property
    def N(self) -> int:
        return self.coeffs.shape[-1]

    @classmethod
    def stack(cls, tensors: list["DtChannelTensor"]) -> "DtChannelTensor":
        first = tensors[0]
        if any(t.delays != first.delays or t.zp != first.zp for t in tensors):
            raise ValueError("cannot stack tensors with different delay sets or guard modes")
        return cls(np.stack([t.coeffs for t in tensors]), first.delays, first.zp, first.z)


def sample_positions(params: FrameParams) -> np.ndarray:
    """``q[m, n] = m + n*(M + L_G)`` for the non-guard samples."""
    m = np.arange(params.M)[:, None]
    n = np.arange(params.N)[None, :]
    return m + n * params.block_len


def build_dt_tensor(paths: PathSet, params: FrameParams, delays: tuple[int, ...] | None = None) -> DtChannelTensor:
    """Sample ``g[l, m + n(M+L_G)]`` for every sub-channel and delay in the set."""
    delays = paths.delay_set() if delays is None else tuple(delays)
    MN = params.M * params.N
    q = sample_positions(params)
    coeffs = np.zeros((paths.n_R, paths.n_T, len(delays), params.M, params.N), dtype=np.complex128)
    index = {d: j for j, d in enumerate(delays)}
    for (r, t, i), h in np.ndenumerate(paths.gains):
        ell = int(paths.delays[r, t, i])
        if ell not in index:
            raise ValueError(f"path delay {ell} not in delay set {delays}")
        kappa = paths.dopplers[r, t, i]
        coeffs[r, t, index[ell]] += h * np.exp(2j * np.pi * (q - ell) * kappa / MN)
    return DtChannelTensor(coeffs, delays, params.zp, np.exp(2j * np.pi / MN))


def noise_variance(snr_db: float) -> float:
    """Per-sample noise variance for unit symbol energy; ``inf`` dB means noiseless."""
    if np.isposinf(snr_db):
        return 0.0
    return float(10.0 ** (-snr_db / 10.0))


def apply_channel(
    s: np.ndarray,
    paths: PathSet,
    params: FrameParams,
    snr_db: float = np.inf,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Time-varying convolution of the transmit signals plus AWGN.

    ``s`` has shape ``(n_T, N*(M+L_G))``; returns ``(n_R, N*(M+L_G))``. In ZP mode
    samples before the frame start are zero; in CP mode the frame is read
    cyclically, which together with the CP layout of :func:`modem.serialize`
    makes every block see a cyclic channel.
    """
    s = np.asarray(s, dtype=np.complex128)
    if s.shape != (paths.n_T, params.signal_len):
        raise ValueError(f"expected signal shape {(paths.n_T, params.signal_len)}, got {s.shape}")
    MN = params.M * params.N
    Q = params.signal_len
    q = np.arange(Q)
    out = np.zeros((paths.n_R, Q), dtype=np.complex128)
    shifted = {}
    for (r, t, i), h in np.ndenumerate(paths.gains):
        ell = int(paths.delays[r, t, i])
        key = (t, ell)
        if key not in shifted:
            if params.zp:
                d = np.zeros(Q, dtype=np.complex128)
                d[ell:] = s[t, : Q - ell]
            else:
                d = np.roll(s[t], ell)
            shifted[key] = d
        out[r] += h * np.exp(2j * np.pi * (q - ell) * paths.dopplers[r, t, i] / MN) * shifted[key]
    var = noise_variance(snr_db)
    if var > 0:
        if rng is None:
            raise ValueError("a generator is required when noise is enabled")
        out += sample_complex_gaussian(rng, out.shape, var)
    return out


def shift_rows(x: np.ndarray, delays: tuple[int, ...], zp: bool) -> np.ndarray:
    """``out[..., l, m, :] = x[..., m - delays[l], :]`` (zero or cyclic fill)."""
    M = x.shape[-2]
    out = np.zeros((*x.shape[:-2], len(delays), *x.shape[-2:]), dtype=np.complex128)
    for j, ell in enumerate(delays):
        if zp:
            out[..., j, ell:, :] = x[..., : M - ell, :]
        else:
            out[..., j, :, :] = np.roll(x, ell, axis=-2)
    return out


def dt_apply(tensor: DtChannelTensor, x_dt: np.ndarray) -> np.ndarray:
    """Noise-free DT relation ``y~_m^(r)[n] = sum_{t,l} h~_{m,l}^(r,t)[n] x~_{m-l}^(t)[n]``.

    ``x_dt`` has shape ``(..., n_T, M, N)``; returns ``(..., n_R, M, N)``.
    """
    xs = shift_rows(np.asarray(x_dt), tensor.delays, tensor.zp)
    return np.einsum("...rtlmn,...tlmn->...rmn", tensor.coeffs, xs)


def dd_apply(tensor: DtChannelTensor, x_dd: np.ndarray) -> np.ndarray:
    """Fast noise-free DD relation, evaluated through the DT domain."""
    from .modem import dd_to_dt, dt_to_dd

    return dt_to_dd(dt_apply(tensor, dd_to_dt(x_dd)))


# ------------------------------------------------------------ text records


def format_paths(paths: PathSet) -> str:
    """One line per path: ``r t delay doppler re_h im_h`` (0-based antenna indices)."""
    buf = io.StringIO()
    buf.write(f"# n_R={paths.n_R} n_T={paths.n_T} P={paths.gains.shape[2]}\n")
    buf.write("# r t delay doppler re_h im_h\n")
    for (r, t, i), h in np.ndenumerate(paths.gains):
        buf.write(
            f"{r} {t} {int(paths.delays[r, t, i])} {float(paths.dopplers[r, t, i])!r} {float(h.real)!r} {float(h.imag)!r}\n"
        )
    return buf.getvalue()


def parse_paths(text: str) -> PathSet:
    """Inverse of :func:`format_paths`; every sub-channel must list the same path count."""
    rows: dict[tuple[int, int], list[tuple[int, float, complex]]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 6:
            raise ValueError(f"line {lineno}: expected 6 fields, got {len(parts)}")
        r, t, ell = int(parts[0]), int(parts[1]), int(parts[2])
        kappa, re, im = float(parts[3]), float(parts[4]), float(parts[5])
        rows.setdefault((r, t), []).append((ell, kappa, complex(re, im)))
    if not rows:
        raise ValueError("no paths in record")
    n_R = max(r for r, _ in rows) + 1
    n_T = max(t for _, t in rows) + 1
    counts = {len(v) for v in rows.values()}
    if len(rows) != n_R * n_T or len(counts) != 1:
        raise ValueError("record must list the same number of paths for every (r, t)")
    P = counts.pop()
    gains = np.zeros((n_R, n_T, P), dtype=np.complex128)
    delays = np.zeros((n_R, n_T, P), dtype=np.int64)
    dopp = np.zeros((n_R, n_T, P))
    for (r, t), lst in rows.items():
        for i, (ell, kappa, h) in enumerate(lst):
            gains[r, t, i], delays[r, t, i], dopp[r, t, i] = h, ell, kappa
    return PathSet(gains, delays, dopp)


def format_tensor(tensor: DtChannelTensor) -> str:
    """Text record of a single-frame DT tensor: ``r t delay m n re im`` per line."""
    c = tensor.coeffs
    if c.ndim != 5:
        raise ValueError("format_tensor expects an unbatched tensor")
    buf = io.StringIO()
    buf.write(f"# dt-tensor n_R={c.shape[0]} n_T={c.shape[1]} M={c.shape[3]} N={c.shape[4]} "
              f"delays={','.join(map(str, tensor.delays))} guard={'ZP' if tensor.zp else 'CP'}\n")
    for (r, t, j, m, n), v in np.ndenumerate(c):
        buf.write(f"{r} {t} {tensor.delays[j]} {m} {n} {float(v.real)!r} {float(v.imag)!r}\n")
    return buf.getvalue()


def parse_tensor(text: str) -> DtChannelTensor:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# dt-tensor"):
        raise ValueError("missing dt-tensor header")
    meta = dict(kv.split("=") for kv in lines[0].split()[2:])
    delays = tuple(int(d) for d in meta["delays"].split(","))
    shape = (int(meta["n_R"]), int(meta["n_T"]), len(delays), int(meta["M"]), int(meta["N"]))
    coeffs = np.zeros(shape, dtype=np.complex128)
    index = {d: j for j, d in enumerate(delays)}
    for line in lines[1:]:
        if not line.strip() or line.startswith("#"):
            continue
        r, t, ell, m, n, re, im = line.split()
        coeffs[int(r), int(t), index[int(ell)], int(m), int(n)] = complex(float(re), float(im))
    MN = shape[3] * shape[4]
    return DtChannelTensor(coeffs, delays, meta["guard"] == "ZP", np.exp(2j * np.pi / MN))


def format_matrix(r: np.ndarray, name: str = "matrix") -> str:
    """Text record of a small complex matrix (e.g. an estimated correlation): ``i j re im``."""
    r = np.asarray(r)
    if r.ndim != 2:
        raise ValueError("format_matrix expects a 2-D array")
    buf = io.StringIO()
    buf.write(f"# {name} rows={r.shape[0]} cols={r.shape[1]}\n")
    for (i, j), v in np.ndenumerate(r):
        buf.write(f"{i} {j} {float(v.real)!r} {float(v.imag)!r}\n")
    return buf.getvalue()


def parse_matrix(text: str) -> np.ndarray:
    lines = text.splitlines()
    meta = dict(kv.split("=") for kv in lines[0].split()[2:]) if lines and lines[0].startswith("#") else None
    if meta is None or "rows" not in meta:
        raise ValueError("missing matrix header")
    out = np.zeros((int(meta["rows"]), int(meta["cols"])), dtype=np.complex128)
    for line in lines[1:]:
        if not line.strip() or line.startswith("#"):
            continue
        i, j, re, im = line.split()
        out[int(i), int(j)] = complex(float(re), float(im))
    return out
