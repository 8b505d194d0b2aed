import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import lambert_bisect
from rssmm.core import (
    BRANCH_POINT,
    DomainError,
    InfeasibleEta,
    RssObservation,
    RssObservationSequence,
    SolverConfig,
    Trajectory,
    lambert_w_minus1,
    speed_variance_from_eta,
)


class TestLambertWMinus1:
    def test_branch_point(self):
        assert lambert_w_minus1(-1.0 / math.e) == -1.0

    def test_known_value_from_bisection_oracle(self):
        # lambert_bisect(-0.1) computed once up front: -3.5771520639573
        assert lambert_w_minus1(-0.1) == pytest.approx(-3.577152063957297, abs=1e-9)
        assert lambert_w_minus1(-0.1) == pytest.approx(lambert_bisect(-0.1), abs=1e-10)

    @pytest.mark.parametrize("x", [0.5, 0.0, -1.5, 1e-3, -math.exp(-1) * 1.0000001])
    def test_domain_errors(self, x):
        with pytest.raises(DomainError):
            lambert_w_minus1(x)

    def test_round_trip_1000_points(self):
        rng = np.random.default_rng(42)
        xs = rng.uniform(BRANCH_POINT, -1e-6, size=1000)
        for x in xs:
            w = lambert_w_minus1(float(x))
            assert w <= -1.0
            assert abs(w * math.exp(w) - x) <= 1e-12

    @given(st.floats(min_value=BRANCH_POINT, max_value=-1e-9,
                     allow_nan=False, allow_infinity=False))
    @settings(max_examples=300, deadline=None)
    def test_round_trip_property(self, x):
        if x < BRANCH_POINT or x >= 0:
            return
        w = lambert_w_minus1(x)
        assert w <= -1.0
        assert abs(w * math.exp(w) - x) <= 1e-12

    def test_matches_bisection_on_grid(self):
        for x in np.linspace(BRANCH_POINT + 1e-6, -1e-4, 50):
            assert lambert_w_minus1(float(x)) == pytest.approx(
                lambert_bisect(float(x)), abs=1e-9
            )


class TestSpeedVariance:
    def test_density_round_trip(self):
        s2 = speed_variance_from_eta(10.0, 8.0, 0.01, mode="density")
        density = math.exp(-(10.0 - 8.0) ** 2 / (2 * s2)) / math.sqrt(2 * math.pi * s2)
        assert density == pytest.approx(0.01, rel=1e-9)

    def test_density_value_via_oracle(self):
        a = -2 * math.pi * 1e-4 * 4.0
        expected = -4.0 / lambert_bisect(a)
        got = speed_variance_from_eta(10.0, 8.0, 0.01, mode="density")
        assert got == pytest.approx(expected, rel=1e-10)

    def test_infeasible_paper_parameters(self):
        # a = -2*pi*0.0025*136.89 ~ -2.15 < -1/e
        with pytest.raises(InfeasibleEta) as exc:
            speed_variance_from_eta(22.2, 10.5, 0.05, mode="density")
        msg = str(exc.value)
        assert "tail" in msg and "eta" in msg

    def test_tail_mode_value(self):
        got = speed_variance_from_eta(22.2, 10.5, 0.05, mode="tail")
        assert got == pytest.approx((11.7 / 1.6448536269514722) ** 2, rel=1e-9)
        assert got == pytest.approx(50.6, abs=0.1)

    def test_density_smaller_root(self):
        # Lower Lambert branch means s2 <= (v_max - v_avr)^2.
        for eta in [0.001, 0.005, 0.01, 0.02]:
            s2 = speed_variance_from_eta(10.0, 8.0, eta, mode="density")
            assert s2 <= 4.0 + 1e-12

    def test_density_round_trip_sweep(self):
        rng = np.random.default_rng(7)
        checked = 0
        while checked < 50:
            v_avr = rng.uniform(3, 15)
            v_max = v_avr + rng.uniform(0.5, 15)
            eta_cap = 1.0 / math.sqrt(2 * math.pi * math.e * (v_max - v_avr) ** 2)
            eta = rng.uniform(0.1, 0.99) * eta_cap
            s2 = speed_variance_from_eta(v_max, v_avr, eta, mode="density")
            density = math.exp(-(v_max - v_avr) ** 2 / (2 * s2)) \
                / math.sqrt(2 * math.pi * s2)
            assert density == pytest.approx(eta, rel=1e-9)
            checked += 1

    def test_bad_inputs(self):
        with pytest.raises(DomainError):
            speed_variance_from_eta(8.0, 10.0, 0.01)
        with pytest.raises(DomainError):
            speed_variance_from_eta(10.0, 8.0, -0.1)
        with pytest.raises(DomainError):
            speed_variance_from_eta(10.0, 8.0, 0.6, mode="tail")


class TestDomainTypes:
    def test_sequence_validation(self):
        with pytest.raises(ValueError):
            RssObservationSequence(slots=(), delta=0.2)
        with pytest.raises(ValueError):
            RssObservationSequence(
                slots=((RssObservation(1, -60.0), RssObservation(1, -61.0)),),
                delta=0.2,
            )
        with pytest.raises(ValueError):
            RssObservationSequence(slots=((),), delta=0.0)
        seq = RssObservationSequence(slots=((), (RssObservation(3, -70.0),)), delta=0.5)
        assert len(seq) == 2
        assert seq.observed_ids() == {3}

    def test_trajectory_validation(self):
        with pytest.raises(ValueError):
            Trajectory(positions=np.array([[np.nan, 0.0]]))
        with pytest.raises(ValueError):
            Trajectory(positions=np.zeros((0, 2)))
        t = Trajectory(positions=np.array([[1.0, 2.0], [3.0, 4.0]]))
        assert len(t) == 2

    def test_observation_validation(self):
        with pytest.raises(ValueError):
            RssObservation(bs_id=1, rss=float("inf"))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(v_max=5.0, v_avr=10.0)
        with pytest.raises(ValueError):
            SolverConfig(gamma_fine=10.0, gamma_coarse=5.0)
        with pytest.raises(ValueError):
            SolverConfig(eta=0.0)
        with pytest.raises(ValueError):
            SolverConfig(eta_mode="maybe")
        cfg = SolverConfig()
        assert cfg.effective_corridor_radius() == 2 * cfg.gamma_coarse
        assert SolverConfig(corridor_radius=50.0).effective_corridor_radius() == 50.0
