"""Embedded single-pilot channel estimation and receive-correlation estimation.

Pilot layout: antenna ``t`` owns delay rows ``[t*(2L-1), (t+1)*(2L-1))`` with its
pilot impulse at row ``(L-1) + t*(2L-1)``, Doppler bin ``k_p``; the rest of that
region, across all Doppler bins, is guard. Data start after the last region
and stop before the ZP rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import DtChannelTensor, PathSet, build_dt_tensor
from .modem import FrameParams


class PilotLayoutError(ValueError):
    """Pilot regions, data and ZP rows do not fit in the frame."""


class EstimationFailure(RuntimeError):
    """No path was detected on some sub-channel."""


@dataclass(frozen=True)
class PilotConfig:
    """``L`` is the delay span covered by the guards (max delay + 1)."""

    beta_db: float = 30.0
    L: int = 5
    k_p: int | None = None
    gamma: float = 3.0

    @property
    def beta(self) -> float:
        return 10.0 ** (self.beta_db / 10.0)

    def pilot_energy(self, symbol_energy: float = 1.0) -> float:
        return self.beta * symbol_energy

    def doppler_index(self, params: FrameParams) -> int:
        return params.N // 2 if self.k_p is None else self.k_p

    def pilot_rows(self, params: FrameParams) -> np.ndarray:
        return (self.L - 1) + np.arange(params.n_T) * (2 * self.L - 1)

    def data_rows(self, params: FrameParams) -> np.ndarray:
        """Boolean mask of data rows; raises :class:`PilotLayoutError` when nothing fits."""
        if self.L < 1:
            raise PilotLayoutError("delay span L must be >= 1")
        if not 0 <= self.doppler_index(params) < params.N:
            raise PilotLayoutError("pilot Doppler index outside the frame")
        start = params.n_T * (2 * self.L - 1)
        stop = params.M - params.L_G if params.zp else params.M
        if start >= stop:
            raise PilotLayoutError(
                f"{params.n_T} pilot region(s) of {2 * self.L - 1} rows leave no data rows "
                f"below row {stop} (M={params.M}, L_G={params.L_G})"
            )
        if self.L - 1 > params.L_G:
            raise PilotLayoutError("pilot guard span exceeds the frame guard length")
        rows = np.zeros(params.M, dtype=bool)
        rows[start:stop] = True
        return rows


def pilot_frame(cfg: PilotConfig, params: FrameParams, symbol_energy: float = 1.0) -> np.ndarray:
    """DD frame ``(n_T, M, N)`` holding only the pilots."""
    cfg.data_rows(params)
    x = np.zeros((params.n_T, params.M, params.N), dtype=np.complex128)
    k_p = cfg.doppler_index(params)
    for t, row in enumerate(cfg.pilot_rows(params)):
        x[t, row, k_p] = np.sqrt(cfg.pilot_energy(symbol_energy))
    return x


def embed_pilots(x_dd: np.ndarray, cfg: PilotConfig, params: FrameParams, symbol_energy: float = 1.0) -> np.ndarray:
    """Keep data on the data rows, zero everything else and write the pilots."""
    rows = cfg.data_rows(params)
    out = np.where(rows[None, :, None], x_dd, 0).astype(np.complex128)
    return out + pilot_frame(cfg, params, symbol_energy)


@dataclass
class ChannelEstimate:
    tensor: DtChannelTensor
    paths: PathSet
    detected: np.ndarray  # (n_R, n_T, L) bool
    failed: bool


def estimate_dt_channel(
    y_dt: np.ndarray,
    cfg: PilotConfig,
    params: FrameParams,
    noise_var: float,
    symbol_energy: float = 1.0,
) -> ChannelEstimate:
    """Read each (r, t, l) pilot echo, fit gain and Doppler, and extrapolate to every row.

    The echo of antenna ``t``'s pilot at delay ``l`` is
    ``a[n] = y~_{l_p+l}[n] / x~_p[n] = h * z**((l_p + n*(M+L_G)) * kappa)``; the
    Doppler follows from the phase step between consecutive blocks and the gain
    from the de-rotated mean. A tap counts as present when ``|h_hat|`` exceeds
    ``gamma * sigma_w / sqrt(E_p)``, the noise standard deviation of that
    mean (each of the ``N`` samples of ``a`` carries ``sigma_w*sqrt(N/E_p)``).
    """
    y_dt = np.asarray(y_dt)
    N, MN = params.N, params.M * params.N
    n_R, n_T, L = params.n_R, params.n_T, cfg.L
    E_p = cfg.pilot_energy(symbol_energy)
    k_p = cfg.doppler_index(params)
    n = np.arange(N)
    x_p = np.sqrt(E_p / N) * np.exp(2j * np.pi * k_p * n / N)  # inverse DFT of the pilot row
    threshold = max(cfg.gamma * np.sqrt(noise_var / E_p), 1e-9)
    step = params.block_len

    gains = np.zeros((n_R, n_T, L), dtype=np.complex128)
    kappa = np.zeros((n_R, n_T, L))
    detected = np.zeros((n_R, n_T, L), dtype=bool)
    for t, l_p in enumerate(cfg.pilot_rows(params)):
        a = y_dt[:, l_p : l_p + L, :] / x_p  # (n_R, L, N)
        corr = np.sum(a[..., 1:] * a[..., :-1].conj(), axis=-1)
        k_hat = np.angle(corr) * MN / (2 * np.pi * step)
        derot = np.exp(-2j * np.pi * (l_p + n * step)[None, None, :] * k_hat[..., None] / MN)
        h_hat = np.mean(a * derot, axis=-1)
        present = np.abs(h_hat) > threshold
        detected[:, t] = present
        gains[:, t] = np.where(present, h_hat, 0)
        kappa[:, t] = np.where(present, k_hat, 0)
    delays = np.broadcast_to(np.arange(L), gains.shape)
    paths = PathSet(gains, delays, kappa)
    tensor = build_dt_tensor(paths, params, delays=tuple(range(L)))
    failed = bool(np.any(~detected.any(axis=-1)))
    return ChannelEstimate(tensor, paths, detected, failed)


def estimate_rx_correlation(
    coeffs: np.ndarray,
    normalization: str = "global",
    eig_floor: float = 1e-6,
) -> np.ndarray:
    """Sample receive correlation from DT channel coefficients.

    ``coeffs`` is ``(..., n_R, n_T, L, M, N)``; returns ``(..., n_R, n_R)`` Hermitian
    with unit diagonal, positive definite after an eigenvalue floor.

    ``normalization="global"`` accumulates the inner products
    ``h~_{m,l}^{(r',t)H} h~_{m,l}^{(r,t)}`` over ``(t, l, m)`` and scales by the
    accumulated norms. ``"per_term"`` divides every inner product by its own
    pair of norms before summing; that estimates the mean phase coherence,
    which is biased low for Gaussian gains.
    """
    c = np.asarray(coeffs)
    lead = c.shape[:-5]
    n_R = c.shape[-5]
    v = c.reshape(*lead, n_R, -1, c.shape[-1])  # (..., r, terms, n)
    inner = np.einsum("...atn,...btn->...abt", v, v.conj())  # [a, b, term] = h_b^H h_a
    if normalization == "global":
        S = inner.sum(axis=-1)
    elif normalization == "per_term":
        norms = np.sqrt(np.sum(np.abs(v) ** 2, axis=-1))  # (..., r, terms)
        denom = norms[..., :, None, :] * norms[..., None, :, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            S = np.where(denom > 0, inner / np.where(denom > 0, denom, 1), 0).sum(axis=-1)
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    return _unit_diagonal_pd(S, eig_floor)


def _unit_diagonal_pd(S: np.ndarray, eig_floor: float) -> np.ndarray:
    S = 0.5 * (S + np.swapaxes(S, -1, -2).conj())
    diag = np.real(np.diagonal(S, axis1=-2, axis2=-1))
    diag = np.where(diag > 0, diag, 1.0)
    scale = 1.0 / np.sqrt(diag)
    R = S * scale[..., :, None] * scale[..., None, :]
    n = R.shape[-1]
    idx = np.arange(n)
    R[..., idx, idx] = 1.0
    w, V = np.linalg.eigh(R)
    if np.any(w < eig_floor):
        w = np.maximum(w, eig_floor)
        R = (V * w[..., None, :]) @ np.swapaxes(V, -1, -2).conj()
        d = np.sqrt(np.real(np.diagonal(R, axis1=-2, axis2=-1)))
        R = R / d[..., :, None] / d[..., None, :]
        R[..., idx, idx] = 1.0
    return R
