"""Shared fixtures and independent brute-force oracles.

The oracles here re-implement definitions directly from first principles
(nested loops over rows and sets) and must stay independent of the
vectorised production paths they check.
"""

from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from matchiv.panel import MatchPanel, _validate_and_build


def make_random_panel(
    rng: np.random.Generator,
    n_matches: int = 20,
    team_size: int = 2,
    n_players: int = 12,
    toxic_rate: float = 0.3,
    party_prob: float = 0.0,
    draw_prob: float = 0.0,
) -> MatchPanel:
    """Random valid panel built directly from the invariants (no simulator)."""
    per_match = 2 * team_size
    assert n_players >= per_match
    records = []
    party_counter = 0
    for m in range(n_matches):
        players = rng.choice(n_players, per_match, replace=False)
        start = float(m * 1800)
        end = start + 900.0
        draw = rng.random() < draw_prob
        win_team = int(rng.integers(0, 2))
        parties = [None] * per_match
        if party_prob > 0 and team_size >= 2:
            for side in (0, 1):
                if rng.random() < party_prob:
                    size = int(rng.integers(2, team_size + 1))
                    label = f"q{party_counter:05d}"
                    party_counter += 1
                    for pos in range(size):
                        parties[side * team_size + pos] = label
        for pos, p in enumerate(players):
            team = 0 if pos < team_size else 1
            if draw:
                result = "draw"
            else:
                result = "win" if team == win_team else "loss"
            records.append(
                (
                    f"m{m:05d}",
                    f"p{p:04d}",
                    team,
                    parties[pos],
                    start,
                    end,
                    bool(rng.random() < toxic_rate),
                    result,
                )
            )
    df = pd.DataFrame.from_records(
        records,
        columns=[
            "match_id", "player_id", "team_id", "party_id",
            "match_start", "match_end", "used_toxic", "result",
        ],
    )
    return _validate_and_build(df)


def match_order_key(df: pd.DataFrame) -> dict:
    """match_id -> (start, match_id) chronological key."""
    keys = {}
    for mid, g in df.groupby("match_id"):
        keys[mid] = (float(g["match_start"].iloc[0]), mid)
    return keys


def brute_force_loo_rate(df: pd.DataFrame, k: str, j: str, match_id: str, values=None):
    """Definition-level leave-one-out rate: mean toxicity of k's matches
    strictly before `match_id` that j did not take part in."""
    keys = match_order_key(df)
    t_i = keys[match_id]
    j_matches = set(df.loc[df["player_id"] == j, "match_id"])
    vals = []
    k_rows = df[df["player_id"] == k]
    value_col = (
        k_rows["used_toxic"].astype(float)
        if values is None
        else pd.Series(values, index=df.index)[k_rows.index]
    )
    for (_, row), v in zip(k_rows.iterrows(), value_col):
        if keys[row["match_id"]] < t_i and row["match_id"] not in j_matches:
            vals.append(float(v))
    return float(np.mean(vals)) if vals else None


def brute_force_instruments(panel: MatchPanel, scheme: str = "opp_team"):
    """O(players^2 x matches) instrument construction from the definition."""
    df = panel.df
    n = len(df)
    z = np.zeros((n, 4))
    contributing = np.zeros((n, 2), dtype=int)
    for r in range(n):
        row = df.iloc[r]
        mid, j = row["match_id"], row["player_id"]
        win = 1.0 if row["result"] == "win" else 0.0
        co = df[(df["match_id"] == mid) & (df["player_id"] != j)]
        for _, peer in co.iterrows():
            same_team = peer["team_id"] == row["team_id"]
            if scheme == "opp_team":
                ctx = 1 if same_team else 0
            else:
                if not same_team:
                    continue
                same_party = (
                    row["party_id"] is not None
                    and peer["party_id"] is not None
                    and row["party_id"] == peer["party_id"]
                )
                ctx = 1 if same_party else 0
            rate = brute_force_loo_rate(df, peer["player_id"], j, mid)
            if rate is None:
                continue
            z[r, ctx] += rate
            contributing[r, ctx] += 1
        z[r, 2] = z[r, 0] * win
        z[r, 3] = z[r, 1] * win
    return z, contributing


def lsdv_dummies(player_code: np.ndarray) -> np.ndarray:
    """Explicit per-player intercept dummies."""
    n_players = int(player_code.max()) + 1
    d = np.zeros((len(player_code), n_players))
    d[np.arange(len(player_code)), player_code] = 1.0
    return d


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per release criterion in the acceptance suite."""
    lines = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid:
                continue
            if getattr(report, "when", "call") not in ("call", None):
                continue
            name = nodeid.split("::test_criterion_")[1]
            num, _, slug = name.partition("_")
            lines[int(num)] = (slug, "PASS" if outcome == "passed" else "FAIL")
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(lines):
        slug, status = lines[num]
        terminalreporter.write_line(f"criterion {num:2d} [{slug}]: {status}")
