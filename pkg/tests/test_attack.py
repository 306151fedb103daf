import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phaseremap.attack import (
    ERROR_WEIGHTS,
    AttackConfig,
    AttackType,
    combined_strategy,
    eve_applied_phase,
    expected_click_probs,
    optimize_delay,
    resend_decision,
    strategy_qber,
    strategy_yield,
)
from phaseremap.config import load_profile
from phaseremap.core import (
    Bb84State,
    DomainError,
    EveBasis,
    NoDiscriminationError,
    RemappedPhaseSet,
    qber_general,
    qber_symmetric,
)
from phaseremap.modulator import Polarization, delay_from_fiber_length

from conftest import deg

B0, B1, B2 = EveBasis.BASE0, EveBasis.BASE1, EveBasis.BASE2
TABLE_A = RemappedPhaseSet(tuple(deg(x) for x in (0.0, 21.1, 37.8, 52.7)))
angle = st.floats(min_value=0.0, max_value=math.pi, allow_nan=False)


@pytest.fixture(scope="module")
def fitted():
    prof, timing, _, _ = load_profile("bundled:paper_profile")
    return prof, timing


def test_applied_phase():
    assert eve_applied_phase(B0, TABLE_A) == 0.0
    assert math.degrees(eve_applied_phase(B1, TABLE_A)) == pytest.approx(21.1)
    assert math.degrees(eve_applied_phase(B2, TABLE_A)) == pytest.approx(37.8)


class TestClickProbs:
    def test_base2_example(self):
        rps = RemappedPhaseSet.from_differences(deg(21.1), deg(16.7), deg(14.9))
        got = expected_click_probs(rps, B2)
        oracle = [math.sin(deg(37.8) / 2) ** 2, math.sin(deg(16.7) / 2) ** 2, 0.0, math.sin(deg(14.9) / 2) ** 2]
        assert got == pytest.approx(oracle, abs=1e-15)
        assert got == pytest.approx([0.1049, 0.0211, 0.0, 0.0168], abs=5e-5)

    def test_base1_expressions(self):
        a, b, c = 0.3, 0.5, 0.7
        got = expected_click_probs(RemappedPhaseSet.from_differences(a, b, c), B1)
        s = lambda x: math.sin(x / 2) ** 2  # noqa: E731
        assert got == pytest.approx([s(a), 0.0, s(b), s(b + c)], abs=1e-15)

    def test_standard_phases_naive(self):
        p = expected_click_probs(RemappedPhaseSet.standard(), B2)
        assert p == pytest.approx([1.0, 0.5, 0.0, 0.5], abs=1e-15)
        assert p.mean() == pytest.approx(0.5)
        assert strategy_qber(RemappedPhaseSet.standard(), B2) == pytest.approx(0.25, abs=1e-15)

    @given(angle, angle, angle)
    def test_one1_dark_under_base2(self, a, b, c):
        assert expected_click_probs(RemappedPhaseSet.from_differences(a, b, c), B2)[2] == 0.0


class TestResend:
    def test_examples(self):
        assert resend_decision(B2, True).state is Bb84State.ZERO1
        assert resend_decision(B1, True).state is Bb84State.ONE2
        assert resend_decision(B2, False).discard
        assert str(resend_decision(B1, False)) == "Discard"

    def test_base0(self):
        with pytest.raises(DomainError, match="diagnostic"):
            resend_decision(B0, True)

    @pytest.mark.parametrize("basis", [B1, B2])
    @pytest.mark.parametrize("clicked", [True, False])
    def test_exhaustive_consistency(self, basis, clicked):
        d = resend_decision(basis, clicked)
        if not clicked:
            assert d.discard
        elif basis is B2:
            assert d.state is Bb84State.ZERO1
        else:
            assert d.state is Bb84State.ONE2


class TestStrategyQber:
    def test_vodl_examples(self):
        a = RemappedPhaseSet.from_differences(deg(21.1), deg(16.7), deg(14.9))
        b = RemappedPhaseSet.from_differences(deg(23.9), deg(12.0), deg(10.4))
        assert strategy_qber(a, B1) == pytest.approx(0.212, abs=0.001)
        assert strategy_qber(b, B2) == pytest.approx(0.084, abs=0.001)

    @pytest.mark.parametrize("basis", [B1, B2])
    def test_standard(self, basis):
        assert strategy_qber(RemappedPhaseSet.standard(), basis) == pytest.approx(0.25, abs=1e-15)

    def test_no_discrimination(self):
        with pytest.raises(NoDiscriminationError):
            strategy_qber(RemappedPhaseSet((0.0, 0.0, 0.0, 0.0)), B1)

    def test_base0_rejected(self):
        with pytest.raises(DomainError):
            strategy_qber(TABLE_A, B0)

    @given(angle, angle, angle)
    def test_equals_closed_form(self, a, b, c):
        try:
            ref = qber_general(a, b, c)
        except NoDiscriminationError:
            return
        rps = RemappedPhaseSet.from_differences(a, b, c)
        assert strategy_qber(rps, B1) == pytest.approx(ref[0], abs=1e-12)
        assert strategy_qber(rps, B2) == pytest.approx(ref[1], abs=1e-12)

    def test_monotone_degradation_symmetric(self):
        for phi in np.radians([30.0, 60.0, 90.0, 150.0]):
            prev = None
            for s in np.linspace(1.0, 0.01, 100):
                rps = RemappedPhaseSet.from_differences(s * phi, s * phi, s * phi)
                q = (strategy_qber(rps, B1) + strategy_qber(rps, B2)) / 2
                assert q == pytest.approx(qber_symmetric(s * phi), abs=1e-12)
                if prev is not None:
                    assert q <= prev + 1e-15
                prev = q

    def test_visibility_raises_qber(self):
        assert strategy_qber(TABLE_A, B1, 0.99) > strategy_qber(TABLE_A, B1, 1.0)


class TestCombined:
    def test_examples(self):
        assert combined_strategy(0.218, 0.176, 0.5) == pytest.approx(0.197)
        assert combined_strategy(0.21, 0.13, 0.5) == pytest.approx(0.17)

    @given(st.floats(0, 0.5), st.floats(0, 1))
    def test_equal_inputs(self, x, w):
        assert combined_strategy(x, x, w) == pytest.approx(x)

    def test_bad_weight(self):
        with pytest.raises(DomainError):
            combined_strategy(0.2, 0.2, 1.5)


class TestOptimizeDelay:
    def test_single_delay_symmetric(self, fitted):
        prof, timing = fitted
        res = optimize_delay(prof, timing, [0.0])
        assert res.choices[B1].delay == 0.0 and res.choices[B2].delay == 0.0
        assert res.attack_probability[B1] == pytest.approx(0.5)
        assert res.overall_qber == pytest.approx(0.25, abs=1e-12)

    def test_vodl_shifts(self, fitted):
        prof, timing = fitted
        da, db = delay_from_fiber_length(4.65), delay_from_fiber_length(5.8)
        res = optimize_delay(prof, timing, [db, da])
        assert res.choices[B1].delay == pytest.approx(da)
        assert res.choices[B2].delay == pytest.approx(db)
        # oracle: fitted phases are within 0.02 deg of (21.1, 16.7, 14.9) and (23.9, 12.0, 10.4)
        qa = qber_general(deg(21.1), deg(16.7), deg(14.9))[0]
        qb = qber_general(deg(23.9), deg(12.0), deg(10.4))[1]
        assert res.overall_qber == pytest.approx((qa + qb) / 2, abs=5e-4)
        ya, yb = res.choices[B1].yield_, res.choices[B2].yield_
        w = res.attack_probability[B1]
        assert w * ya == pytest.approx((1 - w) * yb)

    def test_ties_take_smallest_delay(self, fitted):
        prof, timing = fitted
        res = optimize_delay(prof, timing, [3.0, 1.0, 2.0])  # all give standard phases
        assert res.choices[B1].delay == 1.0

    def test_empty_grid(self, fitted):
        with pytest.raises(DomainError):
            optimize_delay(*fitted, [])


class TestAttackConfig:
    def test_vodl_attack_types(self, fitted):
        prof, timing = fitted
        AttackConfig(AttackType.TYPE2, delay_from_fiber_length(4.65)).check(prof, timing)
        AttackConfig(AttackType.TYPE1, delay_from_fiber_length(5.8)).check(prof, timing)

    def test_wrong_type(self, fitted):
        prof, timing = fitted
        with pytest.raises(DomainError):
            AttackConfig(AttackType.TYPE1, delay_from_fiber_length(4.65)).check(prof, timing)
        with pytest.raises(DomainError):
            AttackConfig(AttackType.TYPE2, delay_from_fiber_length(4.65), Polarization.ALIGNED).check(prof, timing)

    def test_none_needs_zero_delay(self, fitted):
        with pytest.raises(DomainError):
            AttackConfig(AttackType.NONE, 1.0).check(*fitted)

    def test_weights_table(self):
        assert ERROR_WEIGHTS[B1] == (0.5, 1.0, 0.5, 0.0)
        assert ERROR_WEIGHTS[B2] == (0.0, 0.5, 1.0, 0.5)

    def test_yield(self):
        assert strategy_yield(RemappedPhaseSet.standard(), B1) == pytest.approx(2.0)
