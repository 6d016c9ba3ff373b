"""Small frame generators shared by the tests."""

import numpy as np

from mimo_otfs.channel import DtChannelTensor, PathSet, apply_channel, build_dt_tensor
from mimo_otfs.modem import FrameParams, dd_to_td, deserialize, qam_map
from mimo_otfs.numerics import make_rng, sample_complex_gaussian


def random_paths(rng, params: FrameParams, delays=(0, 1, 2), kappa_max=1.5) -> PathSet:
    shape = (params.n_R, params.n_T, len(delays))
    return PathSet(
        sample_complex_gaussian(rng, shape, 1.0 / len(delays)),
        np.broadcast_to(np.asarray(delays), shape),
        rng.uniform(-kappa_max, kappa_max, size=shape),
    )


def random_frames(B, params: FrameParams, snr_db=np.inf, seed=0, delays=(0, 1, 2), kappa_max=1.5, rows=None):
    """Batch of (bits, received DT frames, true tensor, rows) on data rows only."""
    rows = params.data_rows() if rows is None else rows
    k = params.bits_per_symbol
    bits, ys, tensors = [], [], []
    for b in range(B):
        rng = make_rng(seed, b)
        bb = rng.integers(0, 2, size=(params.n_T, int(rows.sum()) * params.N * k))
        x = np.zeros((params.n_T, params.M, params.N), dtype=complex)
        x[:, rows] = qam_map(bb, params.mod_order).reshape(params.n_T, -1, params.N)
        paths = random_paths(rng, params, delays, kappa_max)
        ys.append(deserialize(apply_channel(dd_to_td(x, params), paths, params, snr_db, rng), params))
        tensors.append(build_dt_tensor(paths, params, delays))
        bits.append(bb)
    return np.stack(bits), np.stack(ys), DtChannelTensor.stack(tensors), rows
