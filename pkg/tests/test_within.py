"""Sample restrictions and within transform, against the LSDV identity."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matchiv import (
    EmptySampleError,
    apply_sample_restrictions,
    attach_instruments,
    build_exposure_design,
    demean_by_player,
    ols,
    tsls,
)
from matchiv.panel import _validate_and_build

from conftest import lsdv_dummies, make_random_panel


def _designed(rng, **kw):
    panel = make_random_panel(rng, **kw)
    design = build_exposure_design(panel, scheme="opp_team")
    return attach_instruments(design, panel)


class TestRestrictions:
    def test_single_match_player_dropped(self, rng):
        panel = make_random_panel(rng, n_matches=30, n_players=9, toxic_rate=0.5)
        design = attach_instruments(
            build_exposure_design(panel, scheme="opp_team"), panel
        )
        counts = np.bincount(design.player_code)
        restricted, report = apply_sample_restrictions(design, outcome="propagation")
        out_counts = np.bincount(restricted.player_code, minlength=len(counts))
        assert ((out_counts == 0) | (out_counts >= 2)).all()
        assert report.rows_in == design.n_rows
        assert report.rows_out == restricted.n_rows

    def test_rows_without_instrument_dropped(self, rng):
        design = _designed(rng, n_matches=25)
        restricted, report = apply_sample_restrictions(design, outcome="propagation")
        assert (restricted.contributing_peers.sum(axis=1) > 0).all()
        # the first chronological match can never have instruments
        assert report.rows_dropped_no_instrument >= 1

    def test_engagement_drops_missing_outcomes(self, rng):
        design = _designed(rng, n_matches=25)
        restricted, report = apply_sample_restrictions(design, outcome="engagement")
        assert not np.isnan(restricted.y_time).any()
        assert report.rows_dropped_missing_outcome > 0

    def test_no_drops_when_sample_is_clean(self, rng):
        design = _designed(rng, n_matches=60, n_players=6)
        keep = design.contributing_peers.sum(axis=1) > 0
        clean = design.take(np.flatnonzero(keep))
        counts = np.bincount(clean.player_code)
        assert (counts[counts > 0] >= 2).all()
        _, report = apply_sample_restrictions(clean, outcome="propagation")
        assert report.rows_dropped_no_instrument == 0
        assert report.rows_dropped_single_match == 0
        assert report.rows_out == clean.n_rows

    def test_empty_sample_raises(self, rng):
        design = _designed(rng, n_matches=1)
        with pytest.raises(EmptySampleError):
            apply_sample_restrictions(design, outcome="propagation")

    def test_report_is_deterministic(self, rng):
        design = _designed(rng, n_matches=30)
        _, r1 = apply_sample_restrictions(design, outcome="engagement")
        _, r2 = apply_sample_restrictions(design, outcome="engagement")
        assert r1 == r2


class TestDemean:
    def test_two_values(self):
        out = demean_by_player(np.array([1.0, 3.0]), np.array([0, 0]))
        assert out.tolist() == [-1.0, 1.0]

    def test_constant_column_vanishes(self, rng):
        player = rng.integers(0, 5, 100)
        col = np.take(rng.normal(size=5), player)  # constant per player
        out = demean_by_player(col, player)
        np.testing.assert_allclose(out, 0.0, atol=1e-12)

    def test_idempotent(self, rng):
        player = rng.integers(0, 7, 200)
        x = rng.normal(size=(200, 3))
        once = demean_by_player(x, player)
        twice = demean_by_player(once, player)
        np.testing.assert_allclose(twice, once, atol=1e-12)

    @given(st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_per_player_sums_vanish(self, seed):
        r = np.random.default_rng(seed)
        n = int(r.integers(2, 300))
        player = r.integers(0, max(1, n // 3), n)
        x = r.normal(scale=r.uniform(0.1, 100), size=(n, 2))
        out = demean_by_player(x, player)
        for g in np.unique(player):
            sums = out[player == g].sum(axis=0)
            assert (np.abs(sums) <= 1e-9 * max((player == g).sum(), 1) * np.abs(
                x[player == g]).max()).all()


class TestLSDVEquivalence:
    def test_ols_matches_dummy_regression(self, rng):
        n, n_players = 50, 8
        player = rng.integers(0, n_players, n)
        x = rng.normal(size=(n, 2))
        alpha = rng.normal(size=n_players)
        y = alpha[player] + x @ np.array([1.5, -0.7]) + rng.normal(scale=0.3, size=n)

        x_d = demean_by_player(x, player)
        y_d = demean_by_player(y, player)
        within = ols(y_d, x_d, vcov_mode="classical", n_absorbed=n_players)

        dummies = lsdv_dummies(player)
        full = ols(y, np.hstack([x, dummies]), vcov_mode="classical")
        np.testing.assert_allclose(within.beta, full.beta[:2], rtol=1e-8)

    def test_tsls_matches_dummy_regression(self, rng):
        n, n_players = 60, 6
        player = rng.integers(0, n_players, n)
        z = rng.normal(size=(n, 1))
        u = rng.normal(size=n)
        x = (0.8 * z[:, 0] + 0.6 * u + rng.normal(scale=0.4, size=n))[:, None]
        alpha = rng.normal(size=n_players)
        y = alpha[player] + 2.0 * x[:, 0] + u + rng.normal(scale=0.2, size=n)

        x_d = demean_by_player(x, player)
        z_d = demean_by_player(z, player)
        y_d = demean_by_player(y, player)
        within = tsls(y_d, x_d, None, z_d, vcov_mode="classical",
                      n_absorbed=n_players, weak_f_threshold=0.0)

        dummies = lsdv_dummies(player)
        full = tsls(y, x, dummies, z, vcov_mode="classical", weak_f_threshold=0.0)
        assert within.beta[0] == pytest.approx(full.beta[0], rel=1e-8)
