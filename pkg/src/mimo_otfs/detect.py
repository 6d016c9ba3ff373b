"""Iterative MRC detection in the delay-time domain, its whitened variant, and LMMSE.

All detectors take a batch of frames. Shapes:

* ``y_dt``: ``(B, n_R, M, N)`` received DT frames,
* ``tensor.coeffs``: ``(B, n_R, n_T, L, M, N)`` DT channel coefficients,
* ``est_rows``: ``(M,)`` boolean mask of delay rows to detect (data rows);
  every other row is known and given by ``known_dd`` (pilots, guards, ZP).

The MRC sweep visits symbol-vectors in order ``t`` (outer) then ``m``; the
``N`` samples of one symbol-vector touch disjoint residual samples, so they
are updated together without changing the Gauss-Seidel result.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .channel import DtChannelTensor, dt_apply
from .modem import dd_to_dt, dt_to_dd, hard_decision, hard_decision_labels, labels_to_bits
from .numerics import FactorizationError, dft, cholesky_lower, invert_lower_triangular

log = logging.getLogger(__name__)

MODES = ("MRC", "MRCw", "LMMSE")
SCHEDULES = ("symbol", "sweep")
ORDERS = ("tx_outer", "row_outer")
DEAD_DENOMINATOR = 1e-30
CM_CLASSES = (
    "denominator",
    "weights",
    "correlation",
    "inverse",
    "numerator",
    "residual_update",
    "residual_resync",
    "transform",
    "damping",
    "lmmse",
)


@dataclass(frozen=True)
class DetectorConfig:
    """Iteration control.

    ``stop_tol`` is the relative residual decrease below which iterations stop.
    ``schedule`` places the damped hard-decision step: ``"symbol"`` applies it to
    each symbol-vector right after its combining step (decision feedback inside
    the sweep), ``"sweep"`` applies it to the whole frame after each sweep.
    """

    max_iters: int = 20
    delta: float = 0.125
    stop_tol: float = 1e-4
    mode: str = "MRC"
    schedule: str = "symbol"
    order: str = "tx_outer"

    def __post_init__(self):
        if self.order not in ORDERS:
            raise ValueError(f"order must be one of {ORDERS}, got {self.order!r}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must be in [0, 1]")
        if self.stop_tol < 0:
            raise ValueError("stop_tol must be non-negative")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


class DeadSymbolError(RuntimeError):
    """Every diversity branch of some symbol has zero gain."""


@dataclass
class DetectorState:
    """Mutable per-batch detector state, stored batch-last for contiguous sweeps.

    * ``x[t, m, n, b]``: current DT estimates,
    * ``resid[m, r, n, b]``: reconstruction error (ZP frames carry ``max(delays)``
      zero sink rows below row ``M-1`` for branches that leave the frame),
    * ``gains[t, m, j, r, n, b]``: channel coefficient of branch ``(r, j)`` of
      symbol ``x~_m^(t)[n]``, ``weights`` its combining weight (``conj(h~)`` for
      MRC, ``(h~^H R^-1)[r]`` for MRCw) and ``d[t, m, n, b]`` the reciprocal
      denominator,
    * ``x_dd[t, k, n, b]``: DD estimates of the detected rows.

    Use :attr:`residual` and :attr:`estimate_dt` for the ``(B, ...)`` views.
    """

    x: np.ndarray
    resid: np.ndarray
    base: np.ndarray
    gains: np.ndarray
    weights: np.ndarray
    d: np.ndarray
    windows: list
    est_rows: np.ndarray
    tensor: DtChannelTensor
    mod_order: int
    whitener: np.ndarray | None = None
    active: np.ndarray = None
    dead: np.ndarray = None
    fallback: np.ndarray = None
    x_dd: np.ndarray = None
    best_dd: np.ndarray = None
    iterations: np.ndarray = None
    residual_history: list = field(default_factory=list)
    reverted: np.ndarray = None
    cm: dict = field(default_factory=dict)
    branch_count: int = 0
    n_sym: int = 0
    row_pos: np.ndarray = None

    @property
    def B(self) -> int:
        return self.x.shape[-1]

    @property
    def n_T(self) -> int:
        return self.x.shape[0]

    @property
    def n_R(self) -> int:
        return self.resid.shape[1]

    @property
    def M(self) -> int:
        return self.x.shape[1]

    @property
    def N(self) -> int:
        return self.x.shape[2]

    @property
    def residual(self) -> np.ndarray:
        """``(B, n_R, M, N)`` copy of the reconstruction error."""
        return self.resid[: self.M].transpose(3, 1, 0, 2).copy()

    @property
    def estimate_dt(self) -> np.ndarray:
        """``(B, n_T, M, N)`` copy of the DT estimates."""
        return self.x.transpose(3, 0, 1, 2).copy()

    def add_cm(self, name: str, count, mask=None) -> None:
        inc = np.full(self.B, count, dtype=np.int64)
        if mask is not None:
            inc = inc * mask
        self.cm[name] = self.cm.get(name, np.zeros(self.B, dtype=np.int64)) + inc

    def recompute_residual(self) -> np.ndarray:
        """Residual from scratch: ``base - H x``, in the internal layout (without sink rows)."""
        y = dt_apply(self.tensor, self.estimate_dt)  # (B, n_R, M, N)
        return self.base[: self.M] - y.transpose(2, 1, 3, 0)


@dataclass
class DetectorReport:
    """Per-batch detection result.

    ``x_dd`` holds the final soft DD estimates (known rows filled in),
    ``labels``/``bits`` the hard decisions on the detected rows only.
    """

    mode: str
    x_dd: np.ndarray
    labels: np.ndarray
    bits: np.ndarray
    iterations: np.ndarray
    residuals: np.ndarray
    cm: dict
    dead: np.ndarray
    flags: np.ndarray

    @property
    def cm_total(self) -> np.ndarray:
        return sum(self.cm.values(), np.zeros(np.shape(self.iterations), dtype=np.int64))


# ----------------------------------------------------------------- helpers


def branch_rows(delays: tuple[int, ...], M: int, zp: bool) -> tuple[np.ndarray, np.ndarray]:
    """Observation row of branch ``j`` of symbol row ``m`` and whether it exists.

    ZP frames have no wrap across the frame edge, so a branch landing on row
    ``>= M`` does not exist; CP frames wrap modulo ``M``.
    """
    m = np.arange(M)[:, None]
    obs = m + np.asarray(delays)[None, :]
    if zp:
        valid = obs < M
    else:
        valid = np.ones_like(obs, dtype=bool)
        obs = obs % M
    return obs, valid


def _windows(obs: np.ndarray) -> list:
    """Per symbol row, a slice into the residual rows when they are consecutive."""
    out = []
    for rows in obs:
        if np.all(np.diff(rows) == 1):
            out.append(slice(int(rows[0]), int(rows[-1]) + 1))
        else:
            out.append(rows.copy())
    return out


def _promote(y_dt, tensor, known_dd):
    squeeze = y_dt.ndim == 3
    if squeeze:
        y_dt = y_dt[None]
        tensor = DtChannelTensor(tensor.coeffs[None], tensor.delays, tensor.zp, tensor.z)
        if known_dd is not None:
            known_dd = known_dd[None]
    return y_dt, tensor, known_dd, squeeze


def _whiteners(r_rx: np.ndarray, B: int, n_R: int) -> tuple[np.ndarray, np.ndarray]:
    """Whitening matrices ``C^-1`` per frame; frames with a singular ``R`` fall back to ``I``."""
    r_rx = np.broadcast_to(np.asarray(r_rx, dtype=np.complex128), (B, n_R, n_R))
    W = np.empty((B, n_R, n_R), dtype=np.complex128)
    fallback = np.zeros(B, dtype=bool)
    for b in range(B):
        try:
            W[b] = invert_lower_triangular(cholesky_lower(r_rx[b]))
        except (FactorizationError, np.linalg.LinAlgError):
            W[b] = np.eye(n_R)
            fallback[b] = True
    if fallback.any():
        log.warning("singular receive correlation in %d frame(s); using plain MRC weights", fallback.sum())
    return W, fallback


# ------------------------------------------------------------- MRC pieces


def mrc_init(
    y_dt: np.ndarray,
    tensor: DtChannelTensor,
    config: DetectorConfig,
    est_rows: np.ndarray,
    mod_order: int = 4,
    known_dd: np.ndarray | None = None,
    r_rx: np.ndarray | None = None,
    strict: bool = False,
) -> DetectorState:
    """Zero estimates, residual = received minus known-symbol contribution, combiner setup.

    ``y_dt`` is ``(B, n_R, M, N)``; ``r_rx`` (MRCw only) is ``(n_R, n_R)`` or
    ``(B, n_R, n_R)``.
    """
    y_dt = np.asarray(y_dt, dtype=np.complex128)
    B, n_R, M, N = y_dt.shape
    coeffs = tensor.coeffs
    n_T, L = coeffs.shape[2], len(tensor.delays)
    if coeffs.shape != (B, n_R, n_T, L, M, N):
        raise ValueError(f"tensor shape {coeffs.shape} does not match frames {y_dt.shape}")
    est_rows = np.asarray(est_rows, dtype=bool)
    if est_rows.shape != (M,):
        raise ValueError("est_rows must be a length-M mask")

    base = y_dt
    if known_dd is not None and np.any(known_dd):
        base = y_dt - dt_apply(tensor, dd_to_dt(known_dd))
    obs, valid = branch_rows(tensor.delays, M, tensor.zp)
    sink = max(tensor.delays) if tensor.zp else 0
    base_int = np.zeros((M + sink, n_R, N, B), dtype=np.complex128)
    base_int[:M] = base.transpose(2, 1, 3, 0)

    # gains[t, m, j, r, n, b] = coeffs[b, r, t, j, obs[m, j], n]
    g = coeffs[:, :, :, np.arange(L)[None, :], np.minimum(obs, M - 1), :]  # (B, n_R, n_T, M, L, N)
    g = g * (valid & est_rows[:, None])[None, None, None, :, :, None]
    gains = np.ascontiguousarray(g.transpose(2, 3, 4, 1, 5, 0))

    state = DetectorState(
        x=np.zeros((n_T, M, N, B), dtype=np.complex128),
        resid=base_int.copy(),
        base=base_int,
        gains=gains,
        weights=gains.conj(),
        d=np.zeros((n_T, M, N, B)),
        windows=_windows(obs),
        est_rows=est_rows,
        tensor=tensor,
        mod_order=mod_order,
        active=np.ones(B, dtype=bool),
        dead=np.zeros(B, dtype=np.int64),
        fallback=np.zeros(B, dtype=bool),
        iterations=np.zeros(B, dtype=np.int64),
        reverted=np.zeros(B, dtype=bool),
    )
    state.branch_count = int(valid[est_rows].sum()) * N * n_T
    state.n_sym = int(est_rows.sum()) * N * n_T
    state.row_pos = np.cumsum(est_rows) - 1

    if config.mode == "MRCw":
        if r_rx is None:
            raise ValueError("MRCw needs a receive correlation matrix")
        mrcw_weights(state, r_rx, strict)
    else:
        state.add_cm("denominator", n_R * state.branch_count)
        _set_denominator(state, strict)
    state.x_dd = np.zeros((n_T, int(est_rows.sum()), N, B), dtype=np.complex128)
    state.best_dd = state.x_dd.copy()
    state.residual_history.append(_residual_energy(state))
    return state


def _set_denominator(state: DetectorState, strict: bool = False) -> None:
    den = np.real(np.einsum("tmjrnb,tmjrnb->tmnb", state.weights, state.gains))
    rows = state.est_rows
    dead = (den < DEAD_DENOMINATOR) & rows[None, :, None, None]
    if dead.any():
        if strict:
            raise DeadSymbolError(f"{int(dead.sum())} symbol(s) have no usable diversity branch")
        state.dead += dead.sum(axis=(0, 1, 2))
    ok = den >= DEAD_DENOMINATOR
    state.d = np.where(ok, 1.0 / np.where(ok, den, 1.0), 0.0)


def mrcw_weights(state: DetectorState, r_rx: np.ndarray, strict: bool = False) -> DetectorState:
    """Replace the combiner with ``h~^H R^-1`` weights and the matching denominator.

    ``R^-1 = W^H W`` with ``W`` the inverse Cholesky factor, computed once per
    frame; the weights are then reused by every iteration.
    """
    B, n_R = state.B, state.n_R
    W, fallback = _whiteners(r_rx, B, n_R)
    state.fallback |= fallback
    r_inv = np.einsum("bsr,bsq->rqb", W.conj(), W)  # (W^H W)[r, q]
    state.weights = np.einsum("tmjrnb,rqb->tmjqnb", state.gains.conj(), r_inv)
    state.whitener = np.ascontiguousarray(W.transpose(1, 2, 0))
    L = len(state.tensor.delays)
    state.add_cm("weights", n_R * n_R * state.branch_count)
    state.add_cm("denominator", n_R * state.branch_count)
    state.add_cm("correlation", 3 * n_R * L * state.n_sym)
    state.add_cm("inverse", n_R**3)
    _set_denominator(state, strict)
    return state


def mrc_symbol_update(state: DetectorState, t: int, m: int, delta: float | None = None) -> np.ndarray:
    """Combine the ``n_R*L`` branches of symbol-vector ``x~_m^(t)`` and refresh their residuals.

    With ``delta`` given, the new estimate is also pulled toward its DD hard
    decision, ``x <- (1-delta) x + delta D(x)``, and the residuals are refreshed
    again with that correction. Returns the total increment, shape ``(N, B)``.
    """
    win = state.windows[m]
    e = state.resid[win]  # (L, n_R, N, B)
    g = state.gains[t, m]
    num = np.einsum("jrnb,jrnb->nb", state.weights[t, m], e)
    dx = state.d[t, m] * num
    dx *= state.active
    x_new = state.x[t, m] + dx
    if delta is not None:
        x_dd = dft(x_new, axis=0)
        x_dd = (1.0 - delta) * x_dd + delta * hard_decision(x_dd, state.mod_order)
        dx = (dft(x_dd, inverse=True, axis=0) - state.x[t, m]) * state.active
        x_new = state.x[t, m] + dx
        k = state.row_pos[m]
        state.x_dd[t, k] = np.where(state.active, x_dd, state.x_dd[t, k])
    state.x[t, m] = x_new
    if isinstance(win, slice):
        e -= g * dx
    else:
        state.resid[win] = e - g * dx
    return dx


def mrc_sweep(state: DetectorState, config: DetectorConfig | None = None) -> None:
    """One Gauss-Seidel pass over all detected symbol-vectors in ``config.order``."""
    config = config or DetectorConfig()
    delta = config.delta if config.schedule == "symbol" else None
    rows = [int(m) for m in np.flatnonzero(state.est_rows)]
    if config.order == "tx_outer":
        visits = [(t, m) for t in range(state.n_T) for m in rows]
    else:
        visits = [(t, m) for m in rows for t in range(state.n_T)]
    for t, m in visits:
        mrc_symbol_update(state, t, m, delta)
    n_R, act = state.n_R, state.active
    state.add_cm("numerator", n_R * state.branch_count, act)
    state.add_cm("residual_update", n_R * state.branch_count, act)
    if delta is not None:
        state.add_cm("residual_resync", n_R * state.branch_count, act)
        state.add_cm("transform", 2 * int(np.log2(state.N)) * state.n_sym, act)
        state.add_cm("damping", state.n_sym, act)


def _residual_energy(state: DetectorState) -> np.ndarray:
    e = state.resid[: state.M]
    if state.whitener is not None:
        e = np.einsum("rsb,msnb->mrnb", state.whitener, e)
    return np.sum(np.abs(e) ** 2, axis=(0, 1, 2))


def _set_from_dd(state: DetectorState, frames: np.ndarray) -> None:
    """Re-derive DT estimates and residuals of ``frames`` from their DD estimates."""
    rows = state.est_rows
    x = state.x.copy()
    x[:, rows] = dft(state.x_dd, inverse=True, axis=2)
    state.x = np.where(frames, x, state.x)
    fresh = state.recompute_residual()
    state.resid[: state.M] = np.where(frames, fresh, state.resid[: state.M])


def iteration_epilogue(state: DetectorState, config: DetectorConfig) -> np.ndarray:
    """Close one iteration and apply the stopping rule.

    Under the ``"sweep"`` schedule this is where the DT estimates go to the DD
    domain, get damped toward their hard decisions, and the DT estimates and
    residuals are re-derived. Iterations stop when the residual energy fails
    to decrease by ``stop_tol`` (relative), when it reaches zero, or at
    ``max_iters``; after an increase the previous estimate is kept. Returns
    the per-frame flag "stopped after this iteration".
    """
    act = state.active
    if config.schedule == "sweep":
        x_dd = dft(state.x[:, state.est_rows], axis=2)
        if config.delta > 0:
            x_dd = (1.0 - config.delta) * x_dd + config.delta * hard_decision(x_dd, state.mod_order)
        state.x_dd = np.where(act, x_dd, state.x_dd)
        _set_from_dd(state, act)
        state.add_cm("residual_resync", state.n_R * state.branch_count, act)
        state.add_cm("transform", 2 * int(np.log2(state.N)) * state.n_sym, act)
        state.add_cm("damping", state.n_sym, act)
    state.iterations += act

    prev = state.residual_history[-1]
    res = np.where(act, _residual_energy(state), prev)
    state.residual_history.append(res)

    floor = 1e-24 * state.residual_history[0]
    increased = act & (res > prev)
    stalled = act & ~increased & (res >= prev * (1.0 - config.stop_tol))
    exact = act & (res <= floor)
    accept = act & ~increased
    state.best_dd = np.where(accept, state.x_dd, state.best_dd)
    state.reverted |= increased
    stop = increased | stalled | exact | (act & (state.iterations >= config.max_iters))
    if np.any(increased):
        state.x_dd = np.where(increased, state.best_dd, state.x_dd)
        _set_from_dd(state, increased)
    state.active = act & ~stop
    return stop


def detect_mrc(
    y_dt: np.ndarray,
    tensor: DtChannelTensor,
    config: DetectorConfig,
    est_rows: np.ndarray,
    mod_order: int = 4,
    known_dd: np.ndarray | None = None,
    r_rx: np.ndarray | None = None,
    strict: bool = False,
) -> DetectorReport:
    """Full iterative MRC / MRCw detection: init, up to ``max_iters`` sweeps with epilogues.

    Accepts a single frame (``y_dt`` of shape ``(n_R, M, N)``) or a batch.
    """
    y_dt, tensor, known_dd, squeeze = _promote(np.asarray(y_dt), tensor, known_dd)
    state = mrc_init(y_dt, tensor, config, est_rows, mod_order, known_dd, r_rx, strict)
    for _ in range(config.max_iters):
        if not state.active.any():
            break
        mrc_sweep(state, config)
        iteration_epilogue(state, config)
    report = _finish(state, config.mode, known_dd)
    return _squeeze_report(report) if squeeze else report


def _finish(state: DetectorState, mode: str, known_dd) -> DetectorReport:
    B, n_T, M, N = state.B, state.n_T, state.M, state.N
    best = state.best_dd.transpose(3, 0, 1, 2)
    labels = hard_decision_labels(best, state.mod_order)
    full = np.zeros((B, n_T, M, N), dtype=np.complex128) if known_dd is None else np.array(known_dd, dtype=np.complex128)
    full[:, :, state.est_rows, :] = best
    return DetectorReport(
        mode=mode,
        x_dd=full,
        labels=labels,
        bits=labels_to_bits(labels.reshape(B, n_T, -1), state.mod_order),
        iterations=state.iterations.copy(),
        residuals=np.stack(state.residual_history, axis=1),
        cm={k: v.copy() for k, v in state.cm.items()},
        dead=state.dead.copy(),
        flags=state.fallback.copy(),
    )


def _squeeze_report(rep: DetectorReport) -> DetectorReport:
    return DetectorReport(
        rep.mode, rep.x_dd[0], rep.labels[0], rep.bits[0], rep.iterations[0], rep.residuals[0],
        {k: v[0] for k, v in rep.cm.items()}, rep.dead[0], rep.flags[0],
    )


# ------------------------------------------------------------------- LMMSE


def detect_lmmse(
    y_dd: np.ndarray,
    H: np.ndarray,
    noise_var: float,
    n_T: int,
    est_rows: np.ndarray,
    mod_order: int = 4,
    known_dd: np.ndarray | None = None,
    symbol_energy: float = 1.0,
) -> DetectorReport:
    """Dense LMMSE on the full ``(n_R*MN, n_T*MN)`` DD matrix of one frame.

    Only the columns of the detected rows are unknowns; the known-symbol
    contribution is subtracted first. Intended for small frames.
    """
    y_dd = np.asarray(y_dd, dtype=np.complex128)
    _, M, N = y_dd.shape
    est_rows = np.asarray(est_rows, dtype=bool)
    y = y_dd.reshape(-1)
    if known_dd is not None:
        y = y - H @ np.asarray(known_dd).reshape(-1)
    col_mask = np.tile(np.repeat(est_rows, N), n_T)
    A = H[:, col_mask]
    gram = A.conj().T @ A + (noise_var / symbol_energy) * np.eye(A.shape[1])
    flags = np.zeros(1, dtype=bool)
    try:
        x = scipy.linalg.solve(gram, A.conj().T @ y, assume_a="her")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError):
        x = np.linalg.lstsq(gram, A.conj().T @ y, rcond=None)[0]
        flags[0] = True
    x_est = x.reshape(n_T, int(est_rows.sum()), N)
    full = np.zeros((n_T, M, N), dtype=np.complex128) if known_dd is None else np.array(known_dd, dtype=np.complex128)
    full[:, est_rows, :] = x_est
    labels = hard_decision_labels(x_est, mod_order)
    return DetectorReport(
        mode="LMMSE",
        x_dd=full,
        labels=labels,
        bits=labels_to_bits(labels.reshape(n_T, -1), mod_order),
        iterations=np.int64(1),
        residuals=np.zeros(0),
        cm={"lmmse": np.int64(0)},
        dead=np.int64(0),
        flags=flags[0],
    )


def dt_lmmse_matrices(tensor: DtChannelTensor, est_rows: np.ndarray) -> np.ndarray:
    """Per-time-block system matrices ``A[b, n]`` of shape ``(n_R*M, n_T*M_est)``.

    In the DT domain the channel does not couple different ``n``, so the DD
    LMMSE problem splits into ``N`` independent small problems.
    """
    coeffs = tensor.coeffs
    B, n_R, n_T, L, M, N = coeffs.shape
    src = np.flatnonzero(est_rows)
    A = np.zeros((B, N, n_R, M, n_T, len(src)), dtype=np.complex128)
    for j, ell in enumerate(tensor.delays):
        obs = src + ell
        cols = np.flatnonzero(obs < M) if tensor.zp else np.arange(len(src))
        rows = obs[cols] % M
        # A[b, n, r, rows[c], t, cols[c]] = coeffs[b, r, t, j, rows[c], n]
        A[:, :, :, rows, :, cols] = coeffs[:, :, :, j][:, :, :, rows, :].transpose(3, 0, 4, 1, 2)
    return A.reshape(B, N, n_R * M, n_T * len(src))


def detect_lmmse_dt(
    y_dt: np.ndarray,
    tensor: DtChannelTensor,
    noise_var: float | np.ndarray,
    est_rows: np.ndarray,
    mod_order: int = 4,
    known_dd: np.ndarray | None = None,
    symbol_energy: float = 1.0,
) -> DetectorReport:
    """LMMSE solved block-by-block in the DT domain.

    With a white prior and white noise the LMMSE estimate commutes with the
    unitary DD<->DT map, so this equals :func:`detect_lmmse` exactly while
    costing ``N`` solves of size ``n_T*M_est``.
    """
    y_dt, tensor, known_dd, squeeze = _promote(np.asarray(y_dt, dtype=np.complex128), tensor, known_dd)
    B, n_R, M, N = y_dt.shape
    n_T = tensor.coeffs.shape[2]
    est_rows = np.asarray(est_rows, dtype=bool)
    Me = int(est_rows.sum())
    base = y_dt
    if known_dd is not None and np.any(known_dd):
        base = y_dt - dt_apply(tensor, dd_to_dt(known_dd))
    A = dt_lmmse_matrices(tensor, est_rows)  # (B, N, R, K)
    yv = base.transpose(0, 3, 1, 2).reshape(B, N, n_R * M)
    AH = A.conj().swapaxes(-1, -2)
    K = n_T * Me
    reg = np.broadcast_to(np.asarray(noise_var, dtype=float) / symbol_energy, (B,))
    gram = AH @ A + reg[:, None, None, None] * np.eye(K)
    rhs = (AH @ yv[..., None])[..., 0]
    flags = np.zeros(B, dtype=bool)
    try:
        x = np.linalg.solve(gram, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        x = np.empty_like(rhs)
        for b in range(B):
            try:
                x[b] = np.linalg.solve(gram[b], rhs[b][..., None])[..., 0]
            except np.linalg.LinAlgError:
                x[b] = np.stack([np.linalg.lstsq(gram[b, n], rhs[b, n], rcond=None)[0] for n in range(N)])
                flags[b] = True
    x_dt = x.reshape(B, N, n_T, Me).transpose(0, 2, 3, 1)
    x_est = dt_to_dd(x_dt)
    full = np.zeros((B, n_T, M, N), dtype=np.complex128) if known_dd is None else np.array(known_dd, dtype=np.complex128)
    full[:, :, est_rows, :] = x_est
    labels = hard_decision_labels(x_est, mod_order)
    R = n_R * M
    per_frame = N * (K * K * R + K * R + K**3 // 3 + K * K)
    rep = DetectorReport(
        mode="LMMSE",
        x_dd=full,
        labels=labels,
        bits=labels_to_bits(labels.reshape(B, n_T, -1), mod_order),
        iterations=np.ones(B, dtype=np.int64),
        residuals=np.zeros((B, 0)),
        cm={"lmmse": np.full(B, per_frame, dtype=np.int64)},
        dead=np.zeros(B, dtype=np.int64),
        flags=flags,
    )
    return _squeeze_report(rep) if squeeze else rep


# -------------------------------------------------------------- complexity


def cm_count_expected(
    n_T: int,
    n_R: int,
    L: int,
    S: int,
    n_symbols: int,
    N: int,
    mode: str = "MRCw",
) -> int:
    """Closed-form complex-multiplication count of the iterative detector.

    ``n_symbols`` is the number of detected symbols per transmit antenna (``M*N``
    when every row is data). MRCw includes correlation estimation and the
    weight precomputation; the cubic term is taken as ``n_R**3``.
    """
    per_iter = 3 * n_R * L + 2 * int(np.log2(N)) + 1
    if mode == "MRCw":
        setup = (4 * n_R + n_R**2) * L
        extra = n_R**3
    elif mode == "MRC":
        setup = n_R * L
        extra = 0
    else:
        raise ValueError(f"no closed form for mode {mode!r}")
    return n_T * n_symbols * (setup + S * per_iter) + extra


# ------------------------------------------------------------ text record

REPORT_FIELDS = ("frame", "mode", "iterations", "bit_errors", "bits", "cm", "residuals")


def format_report(rep: DetectorReport, frame_ids, bit_errors, bits) -> str:
    """One line per frame: ``frame mode iterations bit_errors bits cm r0;r1;...``."""
    buf = io.StringIO()
    iters = np.atleast_1d(rep.iterations)
    cm = np.atleast_1d(rep.cm_total)
    res = np.atleast_2d(rep.residuals)
    for i, fid in enumerate(np.atleast_1d(frame_ids)):
        k = int(iters[i]) + 1 if res.shape[1] else 0
        hist = ";".join(f"{float(v):.9e}" for v in res[i, :k]) if k else "-"
        buf.write(f"{int(fid)} {rep.mode} {int(iters[i])} {int(np.atleast_1d(bit_errors)[i])} "
                  f"{int(np.atleast_1d(bits)[i])} {int(cm[i])} {hist}\n")
    return buf.getvalue()


def parse_report(text: str) -> list[dict]:
    out = []
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        f = line.split()
        if len(f) != len(REPORT_FIELDS):
            raise ValueError(f"malformed report line: {line!r}")
        out.append({
            "frame": int(f[0]), "mode": f[1], "iterations": int(f[2]), "bit_errors": int(f[3]),
            "bits": int(f[4]), "cm": int(f[5]),
            "residuals": [] if f[6] == "-" else [float(v) for v in f[6].split(";")],
        })
    return out
