"""OTFS modem: Gray QAM, delay-Doppler <-> delay-time <-> serialized time domain.

Array conventions used throughout the package:

* DD frame ``X[..., m, k]``: delay row ``m`` (0..M-1), Doppler bin ``k`` (0..N-1).
* DT frame ``X~[..., m, n]``: row ``m`` is the inverse DFT of DD row ``m``; ``n`` is
  the time block.
* Time-domain signal ``s[..., q]`` of length ``N*(M+L_G)``; sample
  ``q = m + n*(M+L_G)`` carries ``X~[m, n]`` and samples ``M..M+L_G-1`` of every
  block are the guard.

Leading axes (frames, antennas) are carried through untouched.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .numerics import dft

GUARDS = ("ZP", "CP")
MOD_ORDERS = (4, 16, 64)


def _is_pow2(x: int) -> bool:
    return x >= 1 and (x & (x - 1)) == 0


@dataclass(frozen=True)
class FrameParams:
    """Static frame dimensions and waveform constants."""

    M: int = 16
    N: int = 16
    L_G: int = 4
    delta_f: float = 15e3
    f_c: float = 4e9
    n_T: int = 2
    n_R: int = 2
    guard: str = "ZP"
    mod_order: int = 4

    def __post_init__(self):
        if not (_is_pow2(self.M) and _is_pow2(self.N)):
            raise ValueError(f"M and N must be powers of two, got M={self.M}, N={self.N}")
        if not 0 <= self.L_G < self.M:
            raise ValueError(f"guard length must satisfy 0 <= L_G < M, got {self.L_G}")
        if self.guard not in GUARDS:
            raise ValueError(f"guard must be one of {GUARDS}, got {self.guard!r}")
        if self.mod_order not in MOD_ORDERS:
            raise ValueError(f"unsupported modulation order {self.mod_order}")
        if self.n_T < 1 or self.n_R < 1:
            raise ValueError("antenna counts must be positive")
        if self.delta_f <= 0:
            raise ValueError("subcarrier spacing must be positive")

    @property
    def T(self) -> float:
        return 1.0 / self.delta_f

    @property
    def block_len(self) -> int:
        return self.M + self.L_G

    @property
    def signal_len(self) -> int:
        return self.N * self.block_len

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.mod_order))

    @property
    def zp(self) -> bool:
        return self.guard == "ZP"

    def data_rows(self) -> np.ndarray:
        """Boolean mask of delay rows that carry data when no pilots are embedded.

        In ZP mode the last ``L_G`` rows are reserved as zeros.
        """
        rows = np.ones(self.M, dtype=bool)
        if self.zp and self.L_G > 0:
            rows[self.M - self.L_G:] = False
        return rows


# --------------------------------------------------------------------------- QAM


def _gray(i: np.ndarray) -> np.ndarray:
    return i ^ (i >> 1)


@lru_cache(maxsize=None)
def constellation(mod_order: int) -> np.ndarray:
    """Unit-energy Gray-mapped square QAM, indexed by integer label.

    The label's high-order half of bits selects the quadrature level and the
    low-order half the in-phase level; within each rail, bit pattern ``g``
    sits at PAM level index ``gray^-1(g)`` counted from the top, so label 0 is
    the upper-right corner.
    """
    if mod_order not in MOD_ORDERS:
        raise ValueError(f"unsupported modulation order {mod_order}")
    k = int(np.log2(mod_order)) // 2
    side = 2 ** k
    levels = (side - 1) - 2 * np.arange(side)  # top to bottom
    pos = np.empty(side, dtype=int)
    pos[_gray(np.arange(side))] = np.arange(side)  # gray pattern -> level index
    labels = np.arange(mod_order)
    q_bits, i_bits = labels >> k, labels & (side - 1)
    pts = levels[pos[i_bits]] + 1j * levels[pos[q_bits]]
    pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    pts.setflags(write=False)
    return pts


def bits_to_labels(bits: np.ndarray, mod_order: int) -> np.ndarray:
    k = int(np.log2(mod_order))
    bits = np.asarray(bits, dtype=np.int64)
    if bits.shape[-1] % k:
        raise ValueError(f"bit count {bits.shape[-1]} is not a multiple of {k}")
    b = bits.reshape(*bits.shape[:-1], -1, k)
    weights = 1 << np.arange(k - 1, -1, -1)
    return b @ weights


def labels_to_bits(labels: np.ndarray, mod_order: int) -> np.ndarray:
    k = int(np.log2(mod_order))
    labels = np.asarray(labels, dtype=np.int64)
    b = (labels[..., None] >> np.arange(k - 1, -1, -1)) & 1
    return b.reshape(*labels.shape[:-1], -1).astype(np.uint8)


def qam_map(bits: np.ndarray, mod_order: int) -> np.ndarray:
    """Map a bit array (last axis) to QAM symbols (last axis shrinks by log2 M)."""
    return constellation(mod_order)[bits_to_labels(bits, mod_order)]


def hard_decision_labels(x: np.ndarray, mod_order: int) -> np.ndarray:
    """Nearest-point labels; exact ties go to the smaller label."""
    pts = constellation(mod_order)
    x = np.asarray(x)
    d = np.abs(x[..., None] - pts) ** 2
    return np.argmin(d, axis=-1)  # argmin keeps the first (smallest label) on ties


def hard_decision(x: np.ndarray, mod_order: int) -> np.ndarray:
    return constellation(mod_order)[hard_decision_labels(x, mod_order)]


def qam_demap(symbols: np.ndarray, mod_order: int) -> np.ndarray:
    """Hard-decision demapping back to bits."""
    return labels_to_bits(hard_decision_labels(symbols, mod_order), mod_order)


# ------------------------------------------------------------------ transforms


def dd_to_dt(x_dd: np.ndarray) -> np.ndarray:
    """Row-wise inverse DFT over the Doppler axis."""
    return dft(x_dd, inverse=True, axis=-1)


def dt_to_dd(x_dt: np.ndarray) -> np.ndarray:
    return dft(x_dt, axis=-1)


def _check_grid(x: np.ndarray, params: FrameParams) -> None:
    if x.shape[-2:] != (params.M, params.N):
        raise ValueError(f"expected trailing shape {(params.M, params.N)}, got {x.shape[-2:]}")


def serialize(x_dt: np.ndarray, params: FrameParams) -> np.ndarray:
    """DT grid -> time samples with a guard after every block.

    ZP fills the guard with zeros. CP fills the guard after block ``n`` with
    the tail of block ``(n+1) mod N``, i.e. the guard is the cyclic prefix of
    the following block and the last guard prefixes block 0 when the frame is
    read cyclically.
    """
    x_dt = np.asarray(x_dt, dtype=np.complex128)
    _check_grid(x_dt, params)
    M, N, LG = params.M, params.N, params.L_G
    lead = x_dt.shape[:-2]
    blocks = np.zeros((*lead, N, M + LG), dtype=np.complex128)
    blocks[..., :M] = np.swapaxes(x_dt, -1, -2)
    if params.guard == "CP" and LG:
        tails = np.swapaxes(x_dt[..., M - LG:, :], -1, -2)  # (..., N, LG)
        blocks[..., M:] = np.roll(tails, -1, axis=-2)
    return blocks.reshape(*lead, N * (M + LG))


def deserialize(s: np.ndarray, params: FrameParams) -> np.ndarray:
    """Time samples -> DT grid, discarding the guard samples."""
    s = np.asarray(s, dtype=np.complex128)
    if s.shape[-1] != params.signal_len:
        raise ValueError(f"expected {params.signal_len} samples, got {s.shape[-1]}")
    lead = s.shape[:-1]
    blocks = s.reshape(*lead, params.N, params.block_len)[..., : params.M]
    return np.swapaxes(blocks, -1, -2).copy()


def dd_to_td(x_dd: np.ndarray, params: FrameParams) -> np.ndarray:
    """Transmit chain: row-wise IDFT then serialization with guards."""
    x_dd = np.asarray(x_dd, dtype=np.complex128)
    _check_grid(x_dd, params)
    return serialize(dd_to_dt(x_dd), params)


def td_to_dd(s: np.ndarray, params: FrameParams) -> np.ndarray:
    """Receive chain: strip guards, de-serialize, row-wise DFT."""
    return dt_to_dd(deserialize(s, params))
