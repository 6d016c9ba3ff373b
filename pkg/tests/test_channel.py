import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import random_paths
from mimo_otfs.channel import (
    ChannelProfile,
    DtChannelTensor,
    PathSet,
    apply_channel,
    build_dt_tensor,
    dd_apply,
    draw_paths,
    dt_apply,
    exp_correlation_matrix,
    format_matrix,
    format_paths,
    format_tensor,
    max_doppler_hz,
    noise_variance,
    parse_matrix,
    parse_paths,
    parse_tensor,
)
from mimo_otfs.modem import FrameParams, dd_to_td, deserialize, serialize, td_to_dd
from mimo_otfs.numerics import make_rng


def many_draws(profile, params, n, seed=0):
    rng = make_rng(seed)
    return np.stack([draw_paths(profile, params, rng).gains for _ in range(n)])  # (n, R, T, P)


class TestCorrelationMatrix:
    def test_zero(self):
        np.testing.assert_array_equal(exp_correlation_matrix(2, 0), np.eye(2))

    def test_pair(self):
        np.testing.assert_allclose(exp_correlation_matrix(2, 0.9), [[1, 0.9], [0.9, 1]])

    def test_three(self):
        np.testing.assert_allclose(exp_correlation_matrix(3, 0.5), [[1, 0.5, 0.25], [0.5, 1, 0.5], [0.25, 0.5, 1]])

    def test_complex_rho_hermitian(self):
        r = exp_correlation_matrix(3, 0.5j)
        np.testing.assert_allclose(r, r.conj().T)
        assert r[1, 0] == pytest.approx(0.5j)
        assert r[2, 0] == pytest.approx((0.5j) ** 2)

    @pytest.mark.parametrize("rho", [1.0, -1.0, 1.2, 0.8 + 0.8j])
    def test_rejects(self, rho):
        with pytest.raises(ValueError):
            exp_correlation_matrix(2, rho)


class TestProfile:
    def test_uniform_pdp(self):
        p = ChannelProfile()
        assert p.P == 5 and np.allclose(p.pdp, 0.2)

    def test_kappa_max(self):
        prof = ChannelProfile(nu_max=max_doppler_hz(500, 4e9))
        assert prof.nu_max == pytest.approx(1852, abs=2)
        assert prof.kappa_max(FrameParams(N=16)) == pytest.approx(1.975, abs=0.005)

    @pytest.mark.parametrize("kw", [dict(delay_taps=(0, 0)), dict(pdp=(0.5, 0.5)), dict(rho_rx=1.0),
                                    dict(nu_max=-1.0), dict(delay_taps=()), dict(delay_taps=(0, 1), pdp=(0.9, 0.2))])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ChannelProfile(**kw)

    def test_guard_check(self):
        with pytest.raises(ValueError):
            ChannelProfile(delay_taps=(0, 5)).check(FrameParams(L_G=4))


class TestDrawPaths:
    params = FrameParams(M=8, N=8, L_G=4, n_T=2, n_R=2)

    def test_uncorrelated(self):
        g = many_draws(ChannelProfile(), self.params, 20_000)
        a, b = g[:, 0, 0].ravel(), g[:, 1, 0].ravel()
        assert abs(np.mean(a * b.conj())) < 0.01

    def test_correlated(self):
        g = many_draws(ChannelProfile(rho_rx=0.9), self.params, 20_000)
        a, b = g[:, 1, :].ravel(), g[:, 0, :].ravel()
        corr = np.mean(a * b.conj()) / np.sqrt(np.mean(abs(a) ** 2) * np.mean(abs(b) ** 2))
        assert abs(corr - 0.9) < 0.01

    def test_unit_energy(self):
        g = many_draws(ChannelProfile(rho_rx=0.6), self.params, 20_000)
        energy = np.mean(np.sum(np.abs(g) ** 2, axis=-1), axis=0)
        np.testing.assert_allclose(energy, 1.0, atol=0.01)

    def test_no_doppler(self):
        paths = draw_paths(ChannelProfile(nu_max=0.0), self.params, make_rng(0))
        assert not np.any(paths.dopplers)

    def test_doppler_bounds_and_sharing(self):
        prof = ChannelProfile(nu_max=max_doppler_hz(500, 4e9))
        paths = draw_paths(prof, self.params, make_rng(3))
        assert np.all(np.abs(paths.dopplers) <= prof.kappa_max(self.params))
        assert np.all(paths.dopplers == paths.dopplers[0, 0])
        assert np.all(paths.delays == np.arange(5))


class TestDtTensor:
    def test_flat_channel(self):
        p = FrameParams(M=4, N=4, L_G=1, n_T=1, n_R=1)
        t = build_dt_tensor(PathSet.single(1.0, 0, 0.0), p)
        np.testing.assert_array_equal(t.coeffs, np.ones((1, 1, 1, 4, 4)))

    def test_phase_sample(self):
        p = FrameParams(M=4, N=4, L_G=0, n_T=1, n_R=1)
        t = build_dt_tensor(PathSet.single(1.0, 0, 4.0), p)
        assert t.coeffs[0, 0, 0, 1, 0] == pytest.approx(1j)
        assert t.z == pytest.approx(np.exp(2j * np.pi / 16))

    def test_zero_doppler_constant(self, rng):
        p = FrameParams(M=8, N=4, L_G=2)
        paths = random_paths(rng, p, kappa_max=0.0)
        c = build_dt_tensor(paths, p).coeffs
        np.testing.assert_allclose(c, np.broadcast_to(c[..., :1, :1], c.shape), atol=1e-15)

    def test_unknown_delay(self):
        with pytest.raises(ValueError):
            build_dt_tensor(PathSet.single(1.0, 3, 0.0), FrameParams(M=8, N=4, L_G=3), delays=(0, 1))

    def test_stack_mismatch(self):
        a = DtChannelTensor(np.zeros((1, 1, 1, 4, 4)), (0,))
        b = DtChannelTensor(np.zeros((1, 1, 1, 4, 4)), (1,))
        with pytest.raises(ValueError):
            DtChannelTensor.stack([a, b])


class TestApplyChannel:
    def test_identity(self, rng):
        p = FrameParams(M=8, N=4, L_G=2, n_T=1, n_R=1)
        s = rng.standard_normal((1, p.signal_len)) + 0j
        np.testing.assert_array_equal(apply_channel(s, PathSet.single(1.0, 0, 0.0), p), s)

    def test_noise_variance(self):
        p = FrameParams(M=64, N=64, L_G=0, n_T=1, n_R=1)
        reps = 10**6 // p.signal_len + 1
        rng = make_rng(11)
        r = np.concatenate([apply_channel(np.zeros((1, p.signal_len)), PathSet.single(1.0, 0, 0.0), p, 10.0, rng)
                            for _ in range(reps)], axis=-1)
        assert abs(np.mean(np.abs(r) ** 2) / 0.1 - 1) < 0.01

    def test_snr_definition(self):
        assert noise_variance(10.0) == pytest.approx(0.1)
        assert noise_variance(np.inf) == 0.0

    def test_noise_needs_rng(self):
        p = FrameParams(M=4, N=2, L_G=1, n_T=1, n_R=1)
        with pytest.raises(ValueError):
            apply_channel(np.zeros((1, p.signal_len)), PathSet.single(1.0, 0, 0.0), p, 10.0)

    def test_shape_checked(self):
        p = FrameParams(M=4, N=2, L_G=1, n_T=1, n_R=1)
        with pytest.raises(ValueError):
            apply_channel(np.zeros((2, p.signal_len)), PathSet.single(1.0, 0, 0.0), p)

    @pytest.mark.parametrize("guard", ["ZP", "CP"])
    def test_cp_zero_delay_round_trip(self, guard, rng):
        p = FrameParams(M=8, N=4, L_G=2, n_T=1, n_R=1, guard=guard)
        x = rng.standard_normal((1, 8, 4)) + 1j * rng.standard_normal((1, 8, 4))
        x[:, ~p.data_rows()] = 0
        r = apply_channel(dd_to_td(x, p), PathSet.single(1.0, 0, 0.0), p)
        np.testing.assert_allclose(td_to_dd(r, p), x, atol=1e-12)

    @given(st.sampled_from(["ZP", "CP"]), st.integers(0, 2**32 - 1))
    def test_dt_relation(self, guard, seed):
        p = FrameParams(M=8, N=4, L_G=3, n_T=2, n_R=2, guard=guard)
        rng = np.random.default_rng(seed)
        paths = random_paths(rng, p, delays=(0, 1, 3))
        x_dt = rng.standard_normal((2, 8, 4)) + 1j * rng.standard_normal((2, 8, 4))
        y = deserialize(apply_channel(serialize(x_dt, p), paths, p), p)
        tensor = build_dt_tensor(paths, p)
        assert np.abs(y - dt_apply(tensor, x_dt)).max() < 1e-10

    def test_dd_apply_consistent(self, rng):
        p = FrameParams(M=8, N=8, L_G=2)
        paths = random_paths(rng, p)
        x = rng.standard_normal((2, 8, 8)) + 0j
        t = build_dt_tensor(paths, p)
        np.testing.assert_allclose(dd_apply(t, x), td_to_dd(apply_channel(dd_to_td(x, p), paths, p), p), atol=1e-10)

    def test_batched_dt_apply(self, rng):
        p = FrameParams(M=8, N=4, L_G=2)
        ts = [build_dt_tensor(random_paths(rng, p), p) for _ in range(3)]
        x = rng.standard_normal((3, 2, 8, 4)) + 0j
        batched = dt_apply(DtChannelTensor.stack(ts), x)
        for b in range(3):
            np.testing.assert_allclose(batched[b], dt_apply(ts[b], x[b]), atol=1e-14)


class TestRecords:
    def test_paths_round_trip(self, rng):
        paths = random_paths(rng, FrameParams(M=8, N=4, L_G=2))
        back = parse_paths(format_paths(paths))
        np.testing.assert_array_equal(back.gains, paths.gains)
        np.testing.assert_array_equal(back.delays, paths.delays)
        np.testing.assert_array_equal(back.dopplers, paths.dopplers)

    def test_paths_line_format(self):
        text = format_paths(PathSet.single(0.5 - 0.25j, 2, 1.25))
        body = [ln for ln in text.splitlines() if not ln.startswith("#")]
        assert body == ["0 0 2 1.25 0.5 -0.25"]

    def test_paths_malformed(self):
        with pytest.raises(ValueError):
            parse_paths("0 0 1 0.5\n")
        with pytest.raises(ValueError):
            parse_paths("# nothing\n")

    def test_tensor_round_trip(self, rng):
        p = FrameParams(M=4, N=4, L_G=2, guard="CP")
        t = build_dt_tensor(random_paths(rng, p), p)
        back = parse_tensor(format_tensor(t))
        np.testing.assert_array_equal(back.coeffs, t.coeffs)
        assert back.delays == t.delays and back.zp is False

    def test_matrix_round_trip(self):
        r = exp_correlation_matrix(3, 0.3 + 0.4j)
        np.testing.assert_array_equal(parse_matrix(format_matrix(r, "R_rx")), r)
