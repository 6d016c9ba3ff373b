"""Brute-force channel matrices, used to cross-check the fast paths.

Everything here is quadratic or cubic in ``M*N`` and only meant for small
frames (tests, the dense LMMSE reference).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import PathSet
from .modem import FrameParams
from .numerics import dft_matrix

MAX_MN = 4096


def _guardrail(params: FrameParams) -> None:
    if params.M * params.N > MAX_MN:
        raise ValueError(f"oracle refuses M*N = {params.M * params.N} > {MAX_MN}")


def interleaver(params: FrameParams) -> np.ndarray:
    """Index map of the row-column interleaver: ``(P v)[m + n*M] = v[m*N + n]``.

    Returned as ``perm`` with ``perm[m*N + n] = m + n*M``; ``P^T A P`` is then
    ``A[np.ix_(perm, perm)]``.
    """
    m, n = np.meshgrid(np.arange(params.M), np.arange(params.N), indexing="ij")
    return (m + n * params.M).ravel()


def build_G(paths: PathSet, params: FrameParams) -> np.ndarray:
    """Time-domain matrices ``G[r, t]`` (guard-stripped), shape ``(n_R, n_T, MN, MN)``.

    Entry ``[m + n*M, [m - l]_M + n*M]`` holds ``g[l, m + n*(M+L_G)]``. In ZP mode the
    wrapped entries (``m < l``) are left zero.
    """
    _guardrail(params)
    M, N = params.M, params.N
    MN = M * N
    G = np.zeros((paths.n_R, paths.n_T, MN, MN), dtype=np.complex128)
    for r in range(paths.n_R):
        for t in range(paths.n_T):
            for i in range(paths.gains.shape[2]):
                h = paths.gains[r, t, i]
                ell = int(paths.delays[r, t, i])
                kappa = paths.dopplers[r, t, i]
                for n in range(N):
                    for m in range(M):
                        if params.zp and m < ell:
                            continue
                        q = m + n * params.block_len
                        g = h * np.exp(2j * np.pi * (q - ell) * kappa / MN)
                        G[r, t, m + n * M, (m - ell) % M + n * M] += g
    return G


@dataclass
class FullChannelMatrices:
    G: np.ndarray
    H: np.ndarray
    K: np.ndarray  # (n_R, n_T, M, M, N, N): K[r, t, m, j] is the block at (m, [m-j]_M)

    def circulant_deviation(self) -> float:
        """Largest departure of any K block from circulant structure."""
        return max_circulant_deviation(self.K)


def build_H(G: np.ndarray, params: FrameParams) -> FullChannelMatrices:
    """DD matrices ``H = (I_M x F_N) P^T G P (I_M x F_N^H)`` and their N x N blocks."""
    _guardrail(params)
    M, N = params.M, params.N
    perm = interleaver(params)
    U = np.kron(np.eye(M), dft_matrix(N))
    PtGP = G[..., perm[:, None], perm[None, :]]
    H = U @ PtGP @ U.conj().T
    blocks = H.reshape(*H.shape[:-2], M, N, M, N)
    K = np.zeros((*H.shape[:-2], M, M, N, N), dtype=np.complex128)
    for m in range(M):
        for j in range(M):  # j plays the role of the delay l
            K[..., m, j, :, :] = blocks[..., m, :, (m - j) % M, :]
    return FullChannelMatrices(G, H, K)


def max_circulant_deviation(K: np.ndarray) -> float:
    """max |K[a, b] - K[(a-b) mod N, 0]| over all blocks."""
    N = K.shape[-1]
    a, b = np.indices((N, N))
    ref = K[..., (a - b) % N, 0]
    return float(np.max(np.abs(K - ref))) if K.size else 0.0


def assemble_mimo_H(H: np.ndarray) -> np.ndarray:
    """Stack ``H[r, t]`` blocks into the ``(n_R*MN, n_T*MN)`` MIMO matrix."""
    n_R, n_T, MN, _ = H.shape
    return H.transpose(0, 2, 1, 3).reshape(n_R * MN, n_T * MN)


def stack_dd(x_dd: np.ndarray) -> np.ndarray:
    """Per-antenna ``vec(X^T)`` concatenated over antennas; ``x_dd`` is ``(n, M, N)``."""
    return np.asarray(x_dd).reshape(-1)


def unstack_dd(x: np.ndarray, n: int, params: FrameParams) -> np.ndarray:
    return np.asarray(x).reshape(n, params.M, params.N)


def time_domain_output(G: np.ndarray, s_stripped: np.ndarray) -> np.ndarray:
    """``r^(r) = sum_t G[r, t] s^(t)`` on guard-stripped sample vectors."""
    return np.einsum("rtab,tb->ra", G, s_stripped)


def strip_guards(s: np.ndarray, params: FrameParams) -> np.ndarray:
    """Remove guard samples, keeping the ``m + n*M`` ordering."""
    s = np.asarray(s)
    return s.reshape(*s.shape[:-1], params.N, params.block_len)[..., : params.M].reshape(*s.shape[:-1], -1)


def dt_block(coeffs_mn: np.ndarray) -> np.ndarray:
    """``F_N diag(h) F_N^H``: the DD block implied by one DT coefficient vector."""
    F = dft_matrix(coeffs_mn.shape[-1])
    return F @ (coeffs_mn[..., :, None] * F.conj().T)


def cross_validate(
    n_instances: int = 50,
    seed: int = 0,
    M: int = 8,
    N: int = 8,
    n_T: int = 2,
    n_R: int = 2,
    delays: tuple[int, ...] = (0, 1, 2),
    kappa_max: float = 1.7,
) -> dict[str, float]:
    """Compare every fast path with its matrix counterpart on random instances.

    Half the instances use ZP, half CP; Dopplers are fractional. Returns the
    largest absolute deviation seen for each relation.
    """
    # local imports keep the oracle importable without a cycle at package import
    from .channel import apply_channel, build_dt_tensor, dd_apply, dt_apply
    from .modem import dd_to_dt, dd_to_td, deserialize, serialize
    from .numerics import make_rng, sample_complex_gaussian

    worst = {"time_domain": 0.0, "delay_doppler": 0.0, "delay_time": 0.0, "k_blocks": 0.0}
    for i in range(n_instances):
        guard = "ZP" if i % 2 == 0 else "CP"
        params = FrameParams(M=M, N=N, L_G=max(delays), n_T=n_T, n_R=n_R, guard=guard)
        rng = make_rng(seed, i)
        shape = (n_R, n_T, len(delays))
        paths = PathSet(
            sample_complex_gaussian(rng, shape, 1.0 / len(delays)),
            np.broadcast_to(np.asarray(delays), shape),
            rng.uniform(-kappa_max, kappa_max, size=shape),
        )
        x_dd = sample_complex_gaussian(rng, (n_T, M, N))
        if params.zp:
            x_dd[:, ~params.data_rows()] = 0

        G = build_G(paths, params)
        mats = build_H(G, params)
        tensor = build_dt_tensor(paths, params, delays)

        s = dd_to_td(x_dd, params)
        r = apply_channel(s, paths, params)
        err = np.abs(strip_guards(r, params) - time_domain_output(G, strip_guards(s, params))).max()
        worst["time_domain"] = max(worst["time_domain"], float(err))

        y_fast = dd_apply(tensor, x_dd)
        y_mat = assemble_mimo_H(mats.H) @ stack_dd(x_dd)
        worst["delay_doppler"] = max(worst["delay_doppler"], float(np.abs(stack_dd(y_fast) - y_mat).max()))

        x_dt = dd_to_dt(x_dd)
        y_dt = deserialize(apply_channel(serialize(x_dt, params), paths, params), params)
        worst["delay_time"] = max(worst["delay_time"], float(np.abs(y_dt - dt_apply(tensor, x_dt)).max()))

        expect = np.zeros_like(mats.K)
        for j, ell in enumerate(delays):
            blocks = dt_block(tensor.coeffs[:, :, j])  # (n_R, n_T, M, N, N)
            if params.zp:
                blocks[:, :, :ell] = 0
            expect[:, :, :, ell] = blocks
        worst["k_blocks"] = max(worst["k_blocks"], float(np.abs(mats.K - expect).max()))
    return worst
