"""Synthetic match panels with known ground truth.

Three generating modes:

- ``engagement_confounded``: persistent per-player toxicity propensities
  plus a match-level shock that raises everyone's toxicity AND directly
  shifts the next-match gap, so naive OLS is biased while the
  leave-one-out instrument stays valid.
- ``propagation_reflection``: within each match, latent toxicity
  intensities solve the simultaneous linear-in-means system
  t = a + beta * B t + e; binary toxicity thresholds the intensities.
- ``two_player_reflection``: the 1v1 special case with a closed-form
  equilibrium, used for exact bias validation.

Engagement scheduling runs in fixed-width rounds: a player who finishes a
match re-queues once their structural gap elapses, so the gap read back
from timestamps equals the structural outcome up to one round of
quantisation.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd

from .design import copair_table
from .errors import ConfigError
from .panel import MatchPanel, _validate_and_build

MODES = ("engagement_confounded", "propagation_reflection", "two_player_reflection")

X_COLUMNS = ("opponents", "teammates", "opponents_x_win", "teammates_x_win")

_SECONDS = 3600.0


@dataclass
class SimConfig:
    mode: str = "engagement_confounded"
    n_players: int = 400
    n_matches: int = 2000
    team_size: int = 2
    seed: int = 0

    # structural effects (per design column, hours per toxic co-player)
    beta_true: Dict[str, float] = field(default_factory=dict)
    reflection_beta: float = 0.5     # scalar beta in the reflection modes

    # player/match heterogeneity scales
    sigma_alpha_x: float = 0.25      # persistent toxicity propensity spread
    sigma_alpha_y: float = 1.0       # persistent engagement intercept spread
    sigma_eps: float = 1.0           # idiosyncratic outcome noise
    sigma_match_shock: float = 0.0   # shared confounder scale
    shock_toxicity_gain: float = 0.08
    shock_outcome_gain: float = 1.0

    toxicity_base_rate: float = 0.15
    draw_prob: float = 0.0
    win_toxicity_corr: float = 0.0   # >0: less toxic team likelier to win

    # exposure channel
    teammate_visibility: float = 1.0
    opponent_visibility: float = 1.0
    exposure_missing_rate: float = 0.0

    # party formation (engagement mode only)
    party_prob: float = 0.0
    party_size_dist: Dict[int, float] = field(default_factory=lambda: {2: 1.0})

    # scheduling
    matches_per_player_target: float = 12.44
    base_gap_hours: float = 4.0
    round_hours: float = 0.25
    match_duration_hours: float = 0.15

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.team_size < 1:
            raise ConfigError("team_size must be >= 1")
        if self.n_players < 2 * self.team_size:
            raise ConfigError(
                f"infeasible schedule: {self.n_players} players cannot fill "
                f"matches of {2 * self.team_size}"
            )
        for name in ("sigma_alpha_x", "sigma_alpha_y", "sigma_eps", "sigma_match_shock"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in (
            "toxicity_base_rate", "draw_prob", "party_prob",
            "teammate_visibility", "opponent_visibility", "exposure_missing_rate",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.mode != "engagement_confounded" and not abs(self.reflection_beta) < 1:
            raise ConfigError(
                "reflection modes need |reflection_beta| < 1 "
                "(spectral-radius condition for the within-match fixed point); "
                f"got {self.reflection_beta}"
            )
        if self.round_hours <= 0 or self.match_duration_hours <= 0:
            raise ConfigError("round_hours and match_duration_hours must be positive")

    def beta_vector(self) -> np.ndarray:
        return np.array([self.beta_true.get(c, 0.0) for c in X_COLUMNS])


@dataclass
class SimTruth:
    """Ground truth paired with a generated panel, in canonical row order."""

    config: dict
    beta_true: Dict[str, float]
    alpha_x: Optional[np.ndarray] = None      # per player
    alpha_y: Optional[np.ndarray] = None
    match_shock: Optional[np.ndarray] = None  # per match (generation order)
    mask: Optional[np.ndarray] = None         # (n_rows, 2) recorded visibility
    x_heard: Optional[np.ndarray] = None      # structural exposure counts
    intensity: Optional[np.ndarray] = None    # reflection modes, per row
    toxic_threshold: Optional[float] = None
    ols_plim: Optional[float] = None

    def to_dict(self, max_array: int = 100_000) -> dict:
        def arr(a):
            if a is None:
                return None
            a = np.asarray(a)
            if a.size > max_array:
                return {"omitted": True, "shape": list(a.shape)}
            return a.tolist()

        return {
            "config": self.config,
            "beta_true": self.beta_true,
            "alpha_x": arr(self.alpha_x),
            "alpha_y": arr(self.alpha_y),
            "match_shock": arr(self.match_shock),
            "mask": arr(self.mask),
            "x_heard": arr(self.x_heard),
            "intensity": arr(self.intensity),
            "toxic_threshold": self.toxic_threshold,
            "ols_plim": self.ols_plim,
        }


def ols_plim_reflection(beta: float, var_alpha: float = 1.0, var_eps: float = 1.0) -> float:
    """Probability limit of the naive OLS slope of one pair member's
    outcome on the other's in the symmetric two-player system: 2b/(1+b^2).

    The per-player signal variance (var_alpha + var_eps) cancels when both
    players share it, but the arguments are kept so asymmetric extensions
    fail loudly rather than silently.
    """
    if not abs(beta) < 1:
        raise ConfigError(f"|beta| must be < 1, got {beta}")
    if var_alpha < 0 or var_eps < 0:
        raise ConfigError("variances must be >= 0")
    if var_alpha + var_eps <= 0:
        raise ConfigError("degenerate system: no player-level variation")
    return 2.0 * beta / (1.0 + beta * beta)


def equilibrium_solve(a: np.ndarray, e: np.ndarray, beta: float, b_adj: np.ndarray) -> np.ndarray:
    """Exact solve of the within-match system t = a + beta * B t + e."""
    a = np.asarray(a, dtype=float)
    e = np.asarray(e, dtype=float)
    b_adj = np.asarray(b_adj, dtype=float)
    s = len(a)
    system = np.eye(s) - beta * b_adj
    if abs(np.linalg.det(system)) < 1e-12:
        raise ConfigError("singular within-match system: beta * B has a unit eigenvalue")
    return np.linalg.solve(system, a + e)


def _mean_adjacency(size: int) -> np.ndarray:
    """Linear-in-means co-player weights: each peer gets 1/(size-1), so
    |beta| < 1 is exactly the spectral-radius condition."""
    b = np.full((size, size), 1.0 / (size - 1))
    np.fill_diagonal(b, 0.0)
    return b


def simulate(cfg: SimConfig) -> Tuple[MatchPanel, SimTruth]:
    if cfg.mode == "engagement_confounded":
        return simulate_engagement_panel(cfg)
    return simulate_propagation_panel(cfg)


# ---------------------------------------------------------------------------
# engagement mode


def _assign_parties(cfg: SimConfig, rng: np.random.Generator):
    """Static parties; members always queue together. Returns per-player
    party index (-1 = solo) or None when parties are disabled."""
    if cfg.party_prob <= 0:
        return None
    sizes = sorted(cfg.party_size_dist)
    probs = np.array([cfg.party_size_dist[s] for s in sizes], dtype=float)
    probs /= probs.sum()
    if max(sizes) > cfg.team_size:
        raise ConfigError("party sizes larger than team_size cannot be seated")
    in_party = rng.random(cfg.n_players) < cfg.party_prob
    pool = rng.permutation(np.flatnonzero(in_party))
    party_of = np.full(cfg.n_players, -1, dtype=np.int64)
    pid, pos = 0, 0
    while pos + 2 <= len(pool):
        size = int(rng.choice(sizes, p=probs))
        size = min(size, len(pool) - pos)
        if size < 2:
            break
        party_of[pool[pos:pos + size]] = pid
        pid += 1
        pos += size
    return party_of


def simulate_engagement_panel(cfg: SimConfig) -> Tuple[MatchPanel, SimTruth]:
    """Round-based scheduler with structural next-match gaps.

    Each player's post-match gap is alpha_y + beta . x + shock + eps; the
    player re-enters the first round after the gap, so the realised
    timestamp gap equals the structural value up to < round_hours.
    """
    if cfg.mode != "engagement_confounded":
        raise ConfigError(f"engagement simulator called with mode {cfg.mode!r}")
    rng = np.random.default_rng(cfg.seed)
    n_p, t_size = cfg.n_players, cfg.team_size
    per_match = 2 * t_size

    alpha_x = rng.normal(0.0, cfg.sigma_alpha_x, n_p)
    alpha_y = rng.normal(0.0, cfg.sigma_alpha_y, n_p)
    party_of = _assign_parties(cfg, rng)

    round_sec = cfg.round_hours * _SECONDS
    dur_sec = cfg.match_duration_hours * _SECONDS
    beta = cfg.beta_vector()

    ready_round = np.zeros(n_p, dtype=np.int64)
    rows: dict = {k: [] for k in (
        "match_id", "player", "team", "start", "end", "toxic", "win_team",
        "vis_team", "vis_opp", "recorded", "x_heard", "draw",
    )}
    shocks = []
    n_done = 0
    r = -1
    max_rounds = 10_000_000
    while n_done < cfg.n_matches:
        r += 1
        if r > max_rounds:
            raise ConfigError("scheduler failed to fill the requested match count")
        ready = np.flatnonzero(ready_round <= r)
        if party_of is None:
            if len(ready) < per_match:
                continue
            ready = rng.permutation(ready)
            m = min(len(ready) // per_match, cfg.n_matches - n_done)
            if m == 0:
                continue
            seats = ready[: m * per_match].reshape(m, per_match)
        else:
            seats = _seat_with_parties(ready, party_of, t_size, rng,
                                       cfg.n_matches - n_done)
            if seats is None:
                continue
            m = len(seats)

        start = r * round_sec
        end = start + dur_sec
        shock = rng.normal(0.0, cfg.sigma_match_shock, m)
        shocks.append(shock)

        p_tox = np.clip(
            cfg.toxicity_base_rate + alpha_x[seats] + cfg.shock_toxicity_gain * shock[:, None],
            0.0, 1.0,
        )
        toxic = rng.random((m, per_match)) < p_tox
        vis_team = rng.random((m, per_match)) < cfg.teammate_visibility
        vis_opp = rng.random((m, per_match)) < cfg.opponent_visibility
        recorded = rng.random((m, per_match)) >= cfg.exposure_missing_rate

        heard_t, heard_o = _exposure_counts(toxic, vis_team, vis_opp, t_size)

        draw = rng.random(m) < cfg.draw_prob
        if cfg.win_toxicity_corr > 0:
            tox0 = toxic[:, :t_size].sum(axis=1)
            tox1 = toxic[:, t_size:].sum(axis=1)
            p_team0 = np.where(tox0 < tox1, 0.5 + cfg.win_toxicity_corr / 2,
                               np.where(tox0 > tox1, 0.5 - cfg.win_toxicity_corr / 2, 0.5))
            win_team = (rng.random(m) >= p_team0).astype(np.int64)
        else:
            win_team = rng.integers(0, 2, m)

        won = np.zeros((m, per_match))
        won[:, :t_size] = (win_team == 0)[:, None]
        won[:, t_size:] = (win_team == 1)[:, None]
        won[draw] = 0.0

        x_heard = np.stack(
            [heard_o, heard_t, heard_o * won, heard_t * won], axis=-1
        )  # (m, per_match, 4)

        gap_h = (
            cfg.base_gap_hours
            + alpha_y[seats]
            + x_heard @ beta
            + cfg.shock_outcome_gain * shock[:, None]
            + rng.normal(0.0, cfg.sigma_eps, (m, per_match))
        )
        gap_h = np.maximum(gap_h, 0.0)
        next_ready = np.ceil((end + gap_h * _SECONDS) / round_sec).astype(np.int64)
        if party_of is not None:
            # party blocks re-queue together once every member is back
            for q in np.unique(party_of[seats.ravel()]):
                if q < 0:
                    continue
                members = seats.ravel()[party_of[seats.ravel()] == q]
                sel = np.isin(seats, members)
                next_ready_flat = next_ready.copy()
                next_ready[sel] = next_ready_flat[sel].max()
        ready_round[seats.ravel()] = next_ready.ravel()

        mid0 = n_done
        rows["match_id"].append(np.repeat(np.arange(mid0, mid0 + m), per_match))
        rows["player"].append(seats.ravel())
        team = np.zeros((m, per_match), dtype=np.int64)
        team[:, t_size:] = 1
        rows["team"].append(team.ravel())
        rows["start"].append(np.full(m * per_match, start))
        rows["end"].append(np.full(m * per_match, end))
        rows["toxic"].append(toxic.ravel())
        winners = np.where(draw, -1, win_team)
        rows["win_team"].append(np.repeat(winners, per_match))
        rows["vis_team"].append(vis_team.ravel())
        rows["vis_opp"].append(vis_opp.ravel())
        rows["recorded"].append(recorded.ravel())
        rows["x_heard"].append(x_heard.reshape(-1, 4))
        rows["draw"].append(np.repeat(draw, per_match))
        n_done += m

    flat = {k: np.concatenate(v) for k, v in rows.items() if k != "x_heard"}
    x_heard_all = np.concatenate(rows["x_heard"])
    result = np.where(
        flat["draw"], "draw",
        np.where(flat["win_team"] == flat["team"], "win", "loss"),
    )
    party_ids = None
    if party_of is not None:
        pp = party_of[flat["player"]]
        party_ids = [None if q < 0 else f"q{q:05d}" for q in pp]
    df = pd.DataFrame(
        {
            "match_id": [f"m{i:08d}" for i in flat["match_id"]],
            "player_id": [f"p{i:07d}" for i in flat["player"]],
            "team_id": flat["team"],
            "party_id": party_ids if party_ids is not None else [None] * len(flat["team"]),
            "match_start": flat["start"],
            "match_end": flat["end"],
            "used_toxic": flat["toxic"],
            "result": result,
        }
    )
    perm = np.lexsort((df["match_id"].to_numpy(), df["match_start"].to_numpy(),
                       df["player_id"].to_numpy()))
    panel = _validate_and_build(df.iloc[perm])

    mask = np.column_stack([
        flat["vis_team"] & flat["recorded"],
        flat["vis_opp"] & flat["recorded"],
    ])[perm]

    truth = SimTruth(
        config=asdict(cfg),
        beta_true={c: float(b) for c, b in zip(X_COLUMNS, cfg.beta_vector())},
        alpha_x=alpha_x,
        alpha_y=alpha_y,
        match_shock=np.concatenate(shocks),
        mask=mask,
        x_heard=x_heard_all[perm],
    )
    return panel, truth


def _exposure_counts(toxic, vis_team, vis_opp, t_size):
    """Visible toxic teammates / opponents per seat, excluding self."""
    m, per_match = toxic.shape
    tox_t = toxic * vis_team
    tox_o = toxic * vis_opp
    sum_t0 = tox_t[:, :t_size].sum(axis=1, keepdims=True)
    sum_t1 = tox_t[:, t_size:].sum(axis=1, keepdims=True)
    sum_o0 = tox_o[:, :t_size].sum(axis=1, keepdims=True)
    sum_o1 = tox_o[:, t_size:].sum(axis=1, keepdims=True)
    heard_t = np.empty((m, per_match))
    heard_o = np.empty((m, per_match))
    heard_t[:, :t_size] = sum_t0 - tox_t[:, :t_size]
    heard_t[:, t_size:] = sum_t1 - tox_t[:, t_size:]
    heard_o[:, :t_size] = sum_o1
    heard_o[:, t_size:] = sum_o0
    return heard_t, heard_o


def _seat_with_parties(ready, party_of, t_size, rng, max_matches):
    """Greedy first-fit seating of party blocks and solo players into
    equal teams. Slow path; used only when parties are enabled."""
    ready_set = set(ready.tolist())
    blocks = []
    seen = set()
    for p in ready:
        q = party_of[p]
        if q < 0:
            blocks.append([p])
        elif q not in seen:
            members = np.flatnonzero(party_of == q)
            if all(int(mm) in ready_set for mm in members):
                blocks.append(list(members))
                seen.add(q)
    order = rng.permutation(len(blocks))
    teams: list = []
    matches = []
    cur = [[], []]
    for bi in order:
        blk = blocks[bi]
        placed = False
        for side in (0, 1):
            if len(cur[side]) + len(blk) <= t_size:
                cur[side].extend(blk)
                placed = True
                break
        if not placed:
            continue
        if len(cur[0]) == t_size and len(cur[1]) == t_size:
            matches.append(cur[0] + cur[1])
            cur = [[], []]
            if len(matches) >= max_matches:
                break
    if not matches:
        return None
    return np.array(matches, dtype=np.int64)


# ---------------------------------------------------------------------------
# reflection modes


def simulate_propagation_panel(cfg: SimConfig) -> Tuple[MatchPanel, SimTruth]:
    """Reflection-system panels (multi-player or two-player).

    Matches are scheduled sequentially with random rosters; within each
    match the intensity vector solves t = a + beta * B t + e with
    linear-in-means weights. Binary toxicity thresholds the intensities at
    the quantile matching the configured base rate; the intensities
    themselves ride along in the truth sidecar for continuous-outcome
    validation.
    """
    if cfg.mode not in ("propagation_reflection", "two_player_reflection"):
        raise ConfigError(f"propagation simulator called with mode {cfg.mode!r}")
    t_size = 1 if cfg.mode == "two_player_reflection" else cfg.team_size
    per_match = 2 * t_size
    rng = np.random.default_rng(cfg.seed)
    n_p, n_m = cfg.n_players, cfg.n_matches
    beta = cfg.reflection_beta

    alpha = rng.normal(0.0, cfg.sigma_alpha_x, n_p)

    seats = np.empty((n_m, per_match), dtype=np.int64)
    for i in range(n_m):
        seats[i] = rng.choice(n_p, per_match, replace=False)

    eps = rng.normal(0.0, cfg.sigma_eps, (n_m, per_match))
    a = alpha[seats]
    system = np.eye(per_match) - beta * _mean_adjacency(per_match)
    intensity = np.linalg.solve(system[None, :, :], (a + eps)[..., None])[..., 0]

    thr = float(np.quantile(intensity, 1.0 - cfg.toxicity_base_rate))
    toxic = intensity > thr

    win_team = rng.integers(0, 2, n_m)
    slot = max(cfg.round_hours, cfg.match_duration_hours * 1.5) * _SECONDS
    start = np.arange(n_m) * slot
    end = start + cfg.match_duration_hours * _SECONDS

    team = np.zeros((n_m, per_match), dtype=np.int64)
    team[:, t_size:] = 1
    won = (win_team[:, None] == team).astype(int)

    df = pd.DataFrame(
        {
            "match_id": np.repeat([f"m{i:08d}" for i in range(n_m)], per_match),
            "player_id": [f"p{i:07d}" for i in seats.ravel()],
            "team_id": team.ravel(),
            "party_id": [None] * (n_m * per_match),
            "match_start": np.repeat(start, per_match),
            "match_end": np.repeat(end, per_match),
            "used_toxic": toxic.ravel(),
            "result": np.where(won.ravel() == 1, "win", "loss"),
        }
    )
    perm = np.lexsort((df["match_id"].to_numpy(), df["match_start"].to_numpy(),
                       df["player_id"].to_numpy()))
    panel = _validate_and_build(df.iloc[perm])

    truth = SimTruth(
        config=asdict(cfg),
        beta_true={"reflection_beta": beta},
        alpha_x=alpha,
        intensity=intensity.ravel()[perm],
        toxic_threshold=thr,
        ols_plim=ols_plim_reflection(beta, cfg.sigma_alpha_x ** 2, cfg.sigma_eps ** 2)
        if cfg.mode == "two_player_reflection"
        else None,
    )
    return panel, truth


def peer_outcome(panel: MatchPanel, values: np.ndarray) -> np.ndarray:
    """For two-player matches: each row's co-player's value (NaN if the
    match has more than one co-player)."""
    out = np.full(panel.n_rows, np.nan)
    focal, peer = copair_table(panel)
    counts = np.bincount(focal, minlength=panel.n_rows)
    single = counts[focal] == 1
    out[focal[single]] = values[peer[single]]
    return out
