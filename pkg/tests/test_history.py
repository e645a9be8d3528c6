"""History index, leave-one-out rates, and instrument construction."""

import io

import numpy as np
import pytest

from matchiv import (
    ValidationError,
    build_history_index,
    build_instruments,
    leave_one_out_rate,
)
from matchiv.panel import _validate_and_build, load_match_rows

from conftest import brute_force_instruments, brute_force_loo_rate, make_random_panel

HEADER = "match_id,player_id,team_id,party_id,match_start,match_end,used_toxic,result"


def _load(text: str):
    return load_match_rows(io.StringIO(text.strip() + "\n"))


def test_index_shapes_single_player_history():
    panel = _load(f"""
{HEADER}
m1,a,0,,0,900,1,win
m1,b,1,,0,900,0,loss
m2,a,0,,2000,2900,0,win
m2,c,1,,2000,2900,0,loss
m3,a,0,,4000,4900,1,win
m3,d,1,,4000,4900,0,loss
""")
    index = build_history_index(panel)
    a = index.player_code_of("a")
    sl = index.player_slice(a)
    assert sl.stop - sl.start == 3
    assert len(set(index.match_code[sl].tolist())) == 3


def test_empty_panel_builds_empty_index():
    panel = _validate_and_build(
        _load(f"{HEADER}\nm1,a,0,,0,900,0,win\nm1,b,1,,0,900,0,loss").df.iloc[:0]
    )
    index = build_history_index(panel)
    assert index.n_players == 0


def test_index_insensitive_to_row_order(rng):
    panel = make_random_panel(rng, n_matches=25)
    shuffled = _validate_and_build(
        panel.df.sample(frac=1.0, random_state=7).reset_index(drop=True)
    )
    a = build_history_index(panel)
    b = build_history_index(shuffled)
    assert np.array_equal(a.indptr, b.indptr)
    assert np.array_equal(a.match_code, b.match_code)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.hist_pos, b.hist_pos)


class TestLeaveOneOutRate:
    PANEL = f"""
{HEADER}
m1,k,0,,0,900,1,win
m1,x,1,,0,900,0,loss
m2,k,0,,2000,2900,0,win
m2,j,1,,2000,2900,0,loss
m3,k,0,,4000,4900,0,win
m3,y,1,,4000,4900,0,loss
m4,k,0,,6000,6900,0,win
m4,j,1,,6000,6900,0,loss
"""

    def test_hand_case(self):
        # prior matches of k at m4: m1 (toxic, j absent), m2 (j present,
        # excluded), m3 (clean, j absent) -> (1 + 0) / 2
        panel = _load(self.PANEL)
        index = build_history_index(panel)
        assert leave_one_out_rate(index, "k", "j", "m4") == pytest.approx(0.5)

    def test_no_prior_matches_is_none(self):
        panel = _load(self.PANEL)
        index = build_history_index(panel)
        assert leave_one_out_rate(index, "k", "x", "m1") is None

    def test_all_toxic_prior_gives_one(self):
        panel = _load(f"""
{HEADER}
m1,k,0,,0,900,1,win
m1,x,1,,0,900,0,loss
m2,k,0,,2000,2900,1,win
m2,x,1,,2000,2900,0,loss
m3,k,0,,4000,4900,0,win
m3,j,1,,4000,4900,0,loss
""")
        index = build_history_index(panel)
        assert leave_one_out_rate(index, "k", "j", "m3") == pytest.approx(1.0)

    def test_same_player_rejected(self):
        panel = _load(self.PANEL)
        index = build_history_index(panel)
        with pytest.raises(ValidationError):
            leave_one_out_rate(index, "k", "k", "m4")

    def test_agrees_with_definition_on_random_panels(self, rng):
        panel = make_random_panel(rng, n_matches=25, n_players=8, toxic_rate=0.5)
        index = build_history_index(panel)
        df = panel.df
        for _ in range(60):
            r = int(rng.integers(0, len(df)))
            row = df.iloc[r]
            peers = df[(df["match_id"] == row["match_id"])
                       & (df["player_id"] != row["player_id"])]
            k = peers.iloc[int(rng.integers(0, len(peers)))]["player_id"]
            expected = brute_force_loo_rate(df, k, row["player_id"], row["match_id"])
            got = leave_one_out_rate(index, k, row["player_id"], row["match_id"])
            if expected is None:
                assert got is None
            else:
                assert got == pytest.approx(expected)


class TestBuildInstruments:
    def test_hand_computed_sums(self):
        # j loses m4; opponents k1 (rate 1/2), k2 (no history), teammate
        # k3 (rate 1/4 from 4 prior non-shared matches, one toxic)
        rows = [f"m{i},k3,0,,{i * 1000},{i * 1000 + 500},{1 if i == 1 else 0},win\n"
                f"m{i},z,1,,{i * 1000},{i * 1000 + 500},0,loss" for i in range(1, 5)]
        history = "\n".join(rows)
        panel = _load(f"""
{HEADER}
m0a,k1,0,,100,200,1,win
m0a,w,1,,100,200,0,loss
m0b,k1,0,,300,400,0,win
m0b,w,1,,300,400,0,loss
{history}
m4x,j,0,,9000,9900,0,loss
m4x,k3,0,,9000,9900,0,loss
m4x,k1,1,,9000,9900,0,win
m4x,k2,1,,9000,9900,0,win
""")
        instr = build_instruments(panel, scheme="opp_team")
        ids = panel.df["player_id"].to_numpy()
        mids = panel.df["match_id"].to_numpy()
        r = int(np.flatnonzero((ids == "j") & (mids == "m4x"))[0])
        assert instr.z[r].tolist() == [0.5, 0.25, 0.0, 0.0]
        assert instr.contributing_peers[r].tolist() == [1, 1]

    def test_first_match_has_zero_instrument(self, rng):
        panel = make_random_panel(rng, n_matches=10)
        instr = build_instruments(panel, scheme="opp_team")
        ranks = panel.match_rank
        first = ranks == 0
        assert (instr.z[first] == 0).all()
        assert (instr.contributing_peers[first] == 0).all()

    @pytest.mark.parametrize("scheme", ["opp_team", "party_split"])
    def test_matches_brute_force(self, rng, scheme):
        panel = make_random_panel(
            rng, n_matches=18, team_size=2, n_players=10, toxic_rate=0.4,
            party_prob=0.6 if scheme == "party_split" else 0.0,
        )
        instr = build_instruments(panel, scheme=scheme)
        z_bf, c_bf = brute_force_instruments(panel, scheme=scheme)
        np.testing.assert_allclose(instr.z, z_bf, atol=1e-12)
        np.testing.assert_array_equal(instr.contributing_peers, c_bf)

    def test_flipping_shared_match_leaves_z_unchanged(self, rng):
        # leave-one-out exclusion: toxicity in any match containing BOTH
        # j and k never moves j's instrument
        panel = make_random_panel(rng, n_matches=20, n_players=8, toxic_rate=0.5)
        df = panel.df
        base = build_instruments(panel, scheme="opp_team")
        ids = df["player_id"].to_numpy()
        mids = df["match_id"].to_numpy()
        for _ in range(20):
            r = int(rng.integers(0, len(df)))
            j, mid = ids[r], mids[r]
            j_matches = set(mids[ids == j])
            peers_here = set(ids[(mids == mid) & (ids != j)])
            # flip a peer's toxicity inside a shared match
            shared = np.flatnonzero(
                np.isin(mids, list(j_matches)) & np.isin(ids, list(peers_here)) & (ids != j)
            )
            if len(shared) == 0:
                continue
            flip = int(shared[int(rng.integers(0, len(shared)))])
            df2 = df.copy()
            df2.loc[flip, "used_toxic"] = not df2.loc[flip, "used_toxic"]
            perturbed = build_instruments(_validate_and_build(df2), scheme="opp_team")
            np.testing.assert_allclose(perturbed.z[r], base.z[r], atol=1e-12)

    def test_future_matches_cannot_move_z(self, rng):
        panel = make_random_panel(rng, n_matches=20, n_players=8, toxic_rate=0.5)
        df = panel.df
        base = build_instruments(panel, scheme="opp_team")
        starts = df["match_start"].to_numpy()
        cutoff = np.median(starts)
        early = starts <= cutoff
        df2 = df.copy()
        late = np.flatnonzero(~early)
        df2.loc[late, "used_toxic"] = ~df2.loc[late, "used_toxic"].to_numpy(dtype=bool)
        perturbed = build_instruments(_validate_and_build(df2), scheme="opp_team")
        np.testing.assert_allclose(perturbed.z[early], base.z[early], atol=1e-12)

    def test_z_bounded_by_co_player_count(self, rng):
        panel = make_random_panel(rng, n_matches=30, team_size=3, toxic_rate=0.6)
        instr = build_instruments(panel, scheme="opp_team")
        assert (instr.z[:, 0] <= 3 + 1e-12).all()   # opponents
        assert (instr.z[:, 1] <= 2 + 1e-12).all()   # teammates
        assert (instr.z >= 0).all()
        zero_peers = instr.contributing_peers == 0
        assert (instr.z[:, :2][zero_peers] == 0).all()
