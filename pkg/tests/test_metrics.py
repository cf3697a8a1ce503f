import math

import numpy as np
import pytest

from config.settings import FieldMode, SchemeId
from src.core.channel import (
    SupersymbolPlan,
    find_supersymbol,
    sample_realization,
    synchronized_plan,
    trial_seed,
)
from src.core.metrics import (
    DofEstimate,
    DofFitError,
    RatePoint,
    acceptance,
    dof_slope,
    mi_rate,
    receiver_mi_rate,
    verify_alignment,
    zf_rates,
)
from src.core.schemes import (
    EffectiveChannels,
    LinearDecoder,
    build_decoder,
    csit_view,
    describe,
    effective_channels,
    precode,
)


def channels_for(scheme, k=None, seed=0, plan: SupersymbolPlan = None, epsilon=0.0):
    d = describe(scheme, k)
    plan = plan or find_supersymbol(d.default_patterns(), d.requirement)
    r = sample_realization(plan, d.link_dims, epsilon, trial_seed(11, seed))
    tx = precode(d, csit_view(d, r), 1.0)
    return d, r, tx, effective_channels(d, tx, r)


def scalar_channels(g, length=1):
    return EffectiveChannels(
        receiver=0,
        desired=np.array([[g]], dtype=complex),
        interference=np.zeros((1, 0), dtype=complex),
        desired_streams=(0,),
        interfering_streams=(),
        rx_antennas=1,
        length=length,
    )


class TestVerifyAlignment:
    def test_k_user_receiver_one(self):
        d, _, _, channels = channels_for(SchemeId.K_USER_IC, 3)
        report = verify_alignment(channels, d.expected_interference_dims)
        assert report.receivers[0].interference_dim == 1
        assert report.receivers[0].separable
        assert report.aligned

    def test_mimo_ic_receiver_one(self):
        d, _, _, channels = channels_for(SchemeId.MIMO_IC_1324)
        rx = verify_alignment(channels, d.expected_interference_dims).receivers[0]
        assert rx.interference_dim == 2
        assert rx.separable

    def test_one_sided_receiver_one_sees_no_interference(self):
        d, _, _, channels = channels_for(SchemeId.MISO_BC_ONE_SIDED)
        rx = verify_alignment(channels, d.expected_interference_dims).receivers[0]
        assert rx.interference_dim == 0
        assert rx.separable

    def test_synchronized_fading_breaks_alignment(self):
        d = describe(SchemeId.MISO_BC_ONE_SIDED)
        plan = synchronized_plan(d.requirement, d.links)
        _, _, _, channels = channels_for(SchemeId.MISO_BC_ONE_SIDED, plan=plan)
        report = verify_alignment(channels, d.expected_interference_dims)
        rx = report.receivers[1]
        assert rx.interference_dim == 2
        assert not rx.separable
        assert not report.aligned

    @pytest.mark.parametrize("scheme,k", [
        (SchemeId.MISO_BC_ONE_SIDED, None),
        (SchemeId.MISO_BC_NO_CSIT, None),
        (SchemeId.X_CHANNEL, None),
        (SchemeId.MIMO_IC_1324, None),
        (SchemeId.K_USER_IC, 4),
    ])
    def test_dimensions_match_design(self, scheme, k):
        for seed in range(50):
            d, _, _, channels = channels_for(scheme, k, seed)
            report = verify_alignment(channels, d.expected_interference_dims)
            assert [r.interference_dim for r in report.receivers] == list(d.expected_interference_dims)
            for r, ch in zip(report.receivers, channels):
                assert r.interference_dim <= min(ch.interference.shape)


class TestZfRates:
    def test_zero_channel(self):
        ch = scalar_channels(0.0)
        dec = LinearDecoder(0, np.array([[0.0]]), (0,), 0)
        assert zf_rates(dec, ch, np.array([100.0]), 1.0)[0] == 0.0

    def test_scalar_channel(self):
        g, p = 0.5 - 0.25j, 1000.0
        ch = scalar_channels(g)
        dec = LinearDecoder(0, np.array([[1 / g]]), (0,), 0)
        expected = math.log2(1 + abs(g) ** 2 * p)
        assert zf_rates(dec, ch, np.array([p]), 1.0)[0] == pytest.approx(expected)

    def test_real_mode_halves_rate(self):
        ch = scalar_channels(1.0, length=2)
        dec = LinearDecoder(0, np.array([[1.0]]), (0,), 0)
        complex_rate = zf_rates(dec, ch, np.array([10.0]), 1.0, FieldMode.COMPLEX)[0]
        real_rate = zf_rates(dec, ch, np.array([10.0]), 1.0, FieldMode.REAL)[0]
        assert real_rate == pytest.approx(complex_rate / 2)
        assert complex_rate == pytest.approx(math.log2(11.0) / 2)

    def test_one_sided_receiver_two_noise_doubling(self):
        d, r, tx, channels = channels_for(SchemeId.MISO_BC_ONE_SIDED, seed=3)
        ch = channels[1]
        dec = build_decoder(d, tx, r, 1, channels=ch)
        power = 1000.0
        powers = tx.scaled(power).stream_powers
        alpha = ch.desired[0, 0] - ch.desired[1, 0]
        p_s = powers[ch.desired_streams[0]]
        expected_sinr = abs(alpha) ** 2 * p_s / 2.0
        rate = zf_rates(dec, ch, powers, 1.0)[0]
        assert rate == pytest.approx(math.log2(1 + expected_sinr) / d.length, rel=1e-9)

    def test_non_positive_noise(self):
        with pytest.raises(ValueError):
            zf_rates(LinearDecoder(0, np.eye(1), (0,), 0), scalar_channels(1.0), np.ones(1), 0.0)


class TestMiRate:
    def test_identity_without_interference(self):
        p = 100.0
        value = mi_rate(np.eye(2), np.zeros((2, 0)), [p, p], [], 1.0, length=3)
        assert value == pytest.approx(2 * math.log2(1 + p) / 3)

    def test_zero_desired(self):
        assert mi_rate(np.zeros((2, 1)), np.ones((2, 1)), [5.0], [5.0], 1.0) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("scheme,k", [
        (SchemeId.MISO_BC_ONE_SIDED, None),
        (SchemeId.MISO_BC_NO_CSIT, None),
        (SchemeId.X_CHANNEL, None),
        (SchemeId.MIMO_IC_1324, None),
        (SchemeId.K_USER_IC, 3),
        (SchemeId.TDMA_BASELINE, None),
    ])
    def test_bounds_zero_forcing_sum(self, scheme, k):
        for seed in range(20):
            d, r, tx, channels = channels_for(scheme, k, seed, epsilon=1e-2)
            powers = tx.scaled(10 ** 3).stream_powers
            for rx, ch in enumerate(channels):
                dec = build_decoder(d, tx, r, rx, channels=ch)
                zf_sum = float(np.sum(zf_rates(dec, ch, powers, 1.0)))
                assert receiver_mi_rate(ch, powers, 1.0) >= zf_sum - 1e-9


class TestDofSlope:
    @staticmethod
    def points(fn, snrs=(30.0, 40.0, 50.0)):
        return [
            RatePoint(snr_db=s, message_rates={"W1": fn(s)}, mean_rate=fn(s), trials=1)
            for s in snrs
        ]

    def test_exact_line(self):
        fn = lambda s: 1.5 * (s / 10 * math.log2(10)) + 7
        est = dof_slope(self.points(fn))
        assert est.total == pytest.approx(1.5)
        assert est.residual == pytest.approx(0.0, abs=1e-9)

    def test_real_mode_counts_half_axis(self):
        fn = lambda s: 0.5 * (s / 10 * math.log2(10))
        assert dof_slope(self.points(fn), FieldMode.REAL).total == pytest.approx(1.0)

    def test_total_is_sum_of_messages(self):
        pts = [
            RatePoint(snr_db=s, message_rates={"W1": 0.3 * s, "W2": 0.1 * s + 1}, mean_rate=0.4 * s + 1, trials=1)
            for s in (30.0, 40.0, 50.0)
        ]
        est = dof_slope(pts)
        assert est.total == pytest.approx(sum(est.per_message.values()))

    def test_single_point(self):
        with pytest.raises(DofFitError):
            dof_slope(self.points(lambda s: s, snrs=(30.0,)))

    def test_duplicate_snr_counts_once(self):
        with pytest.raises(DofFitError):
            dof_slope(self.points(lambda s: s, snrs=(30.0, 30.0)))


class TestAcceptance:
    def test_within_tolerance(self):
        d = describe(SchemeId.MISO_BC_ONE_SIDED)
        est = DofEstimate(per_message={"W1": 1.03, "W2": 0.47}, total=1.50, residual=0.0, snr_db=[30, 40])
        verdict = acceptance(d, est)
        assert verdict.passed

    def test_message_outside_tolerance(self):
        d = describe(SchemeId.MISO_BC_ONE_SIDED)
        est = DofEstimate(per_message={"W1": 1.2, "W2": 0.3}, total=1.5, residual=0.0, snr_db=[30, 40])
        verdict = acceptance(d, est)
        assert verdict.total_passed
        assert not verdict.passed

    def test_k_user_total_tolerance_scales(self):
        d = describe(SchemeId.K_USER_IC, 5)
        est = DofEstimate(per_message={f"W{i}": 0.5 for i in range(1, 6)}, total=2.7, residual=0.0,
                          snr_db=[30, 40])
        assert acceptance(d, est).tolerance == pytest.approx(0.25)
        assert acceptance(d, est).total_passed
