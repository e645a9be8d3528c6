"""Per-player match histories and leave-one-out instruments.

The instrument for row (match i, player j) sums, over each co-player k in
a context, k's mean toxicity across k's matches strictly before i that j
did not take part in. "Before" means smaller (match_start, match_id);
matches the focal player shares with k are excluded, so nothing j ever did
can leak into j's own instrument.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .design import SCHEME_CONTEXTS, SCHEMES, _pair_context, copair_table
from .errors import ConfigError, ValidationError
from .panel import MatchPanel


@dataclass
class HistoryIndex:
    """Chronological per-player history with exclusive prefix sums.

    Row arrays are aligned with the panel's canonical row order, which is
    already (player, time) sorted; ``indptr`` slices it per player.
    """

    player_ids: np.ndarray     # sorted unique player ids
    match_ids: np.ndarray      # sorted unique match ids
    indptr: np.ndarray         # (n_players + 1,)
    match_code: np.ndarray     # per row
    match_rank: np.ndarray     # per row, chronological match order
    values: np.ndarray         # per row toxicity value (0/1 or continuous)
    hist_pos: np.ndarray       # per row: # of the player's strictly prior matches
    prior_sum: np.ndarray      # per row: sum of values over those prior matches
    rank_of_match: np.ndarray  # (n_matches,) rank keyed by match_code

    @property
    def n_players(self) -> int:
        return len(self.player_ids)

    def player_slice(self, player_code: int) -> slice:
        return slice(self.indptr[player_code], self.indptr[player_code + 1])

    def player_code_of(self, player_id: str) -> int:
        pos = np.searchsorted(self.player_ids, player_id)
        if pos >= len(self.player_ids) or self.player_ids[pos] != player_id:
            raise ValidationError(f"unknown player_id {player_id!r}")
        return int(pos)

    def match_code_of(self, match_id: str) -> int:
        pos = np.searchsorted(self.match_ids, match_id)
        if pos >= len(self.match_ids) or self.match_ids[pos] != match_id:
            raise ValidationError(f"unknown match_id {match_id!r}")
        return int(pos)


@dataclass
class InstrumentRows:
    """Per-panel-row instrument block, aligned with DesignPanel.x."""

    scheme: str
    z_names: tuple
    z: np.ndarray                   # (n, 2 * n_contexts)
    contributing_peers: np.ndarray  # (n, n_contexts), ints


def build_history_index(panel: MatchPanel, values: Optional[np.ndarray] = None) -> HistoryIndex:
    """Index the panel for leave-one-out rate queries.

    ``values`` optionally replaces the boolean used_toxic column with a
    continuous per-row toxicity measure (same canonical row order).
    """
    n = panel.n_rows
    player = panel.player_code
    if values is None:
        values = panel.df["used_toxic"].to_numpy().astype(float)
    else:
        values = np.asarray(values, dtype=float)
        if values.shape != (n,):
            raise ConfigError(f"values must have shape ({n},)")

    n_players = len(panel.player_ids)
    counts = np.bincount(player, minlength=n_players) if n else np.zeros(n_players, dtype=np.int64)
    indptr = np.concatenate(([0], np.cumsum(counts)))

    # canonical order is already (player, start, match_id): positions and
    # exclusive prefix sums fall out of a grouped cumsum
    hist_pos = np.arange(n, dtype=np.int64) - indptr[player] if n else np.zeros(0, dtype=np.int64)
    cs = np.cumsum(values) if n else np.zeros(0)
    base = np.concatenate(([0.0], cs))[indptr[player]] if n else np.zeros(0)
    prior_sum = cs - values - base

    n_matches = len(panel.match_ids)
    rank_of_match = np.zeros(n_matches, dtype=np.int64)
    if n:
        rank_of_match[panel.match_code] = panel.match_rank

    return HistoryIndex(
        player_ids=panel.player_ids,
        match_ids=panel.match_ids,
        indptr=indptr,
        match_code=panel.match_code.copy(),
        match_rank=panel.match_rank.copy(),
        values=values,
        hist_pos=hist_pos,
        prior_sum=prior_sum,
        rank_of_match=rank_of_match,
    )


def leave_one_out_rate(index: HistoryIndex, k: str, j: str, i: str) -> Optional[float]:
    """Mean toxicity of player k over matches before match i that player j
    did not take part in; None when no such match exists.

    k and j are player ids, i a match id. Raises on k == j.
    """
    if k == j:
        raise ValidationError("leave-one-out rate is undefined for k == j")
    kc = index.player_code_of(k)
    jc = index.player_code_of(j)
    rank_i = index.rank_of_match[index.match_code_of(i)]

    sl = index.player_slice(kc)
    ranks = index.match_rank[sl]
    cut = int(np.searchsorted(ranks, rank_i))  # ranks are sorted per player
    prior_matches = index.match_code[sl][:cut]
    prior_values = index.values[sl][:cut]

    j_matches = index.match_code[index.player_slice(jc)]
    keep = ~np.isin(prior_matches, j_matches)
    if not keep.any():
        return None
    return float(prior_values[keep].mean())


def build_instruments(
    panel: MatchPanel,
    index: Optional[HistoryIndex] = None,
    scheme: str = "opp_team",
) -> InstrumentRows:
    """Leave-one-out instrument vectors for every panel row.

    For each row and base context, z sums the per-peer leave-one-out rates
    (peers with no usable history contribute nothing and are not counted
    in ``contributing_peers``); interaction instruments multiply by the
    row's Win indicator. Output rows align with the panel's canonical
    order.
    """
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if index is None:
        index = build_history_index(panel)

    n = panel.n_rows
    contexts = SCHEME_CONTEXTS[scheme]
    z_names = tuple(contexts) + tuple(f"{c}_x_win" for c in contexts)
    z = np.zeros((n, 4))
    contributing = np.zeros((n, 2), dtype=np.int64)
    out = InstrumentRows(scheme=scheme, z_names=z_names, z=z, contributing_peers=contributing)
    if n == 0:
        return out

    # the shared-match correction must see every co-occurrence of a
    # (focal, peer) pair, so out-of-scope contexts are filtered only at
    # the aggregation step below
    focal, peer = copair_table(panel)
    ctx = _pair_context(panel, focal, peer, scheme)
    if len(focal) == 0:
        return out

    player = panel.player_code
    rank = panel.match_rank

    # peer's unconditional prior history, relative to its row in this match
    prior_cnt = index.hist_pos[peer].astype(float)
    prior_sum = index.prior_sum[peer]

    # shared-match correction: within each ordered (focal player, peer
    # player) group, the pair table holds exactly one entry per shared
    # match, so time-sorted group positions count strictly prior shared
    # matches and a grouped exclusive cumsum gives their toxicity mass
    key = player[focal].astype(np.int64) * index.n_players + player[peer]
    order = np.lexsort((rank[peer], key))
    key_sorted = key[order]
    new_grp = np.empty(len(order), dtype=bool)
    new_grp[0] = True
    new_grp[1:] = key_sorted[1:] != key_sorted[:-1]
    grp_start = np.flatnonzero(new_grp)
    grp_id = np.cumsum(new_grp) - 1

    vals_sorted = index.values[peer[order]]
    cs = np.cumsum(vals_sorted)
    excl = cs - vals_sorted
    base = np.concatenate(([0.0], cs))[grp_start]

    shared_cnt = np.empty(len(order))
    shared_cnt[order] = np.arange(len(order)) - grp_start[grp_id]
    shared_sum = np.empty(len(order))
    shared_sum[order] = excl - base[grp_id]

    denom = prior_cnt - shared_cnt
    valid = (denom > 0) & (ctx >= 0)
    rate = np.zeros(len(focal))
    np.divide(prior_sum - shared_sum, denom, out=rate, where=valid)

    flat = focal * 2 + np.where(ctx >= 0, ctx, 0)
    z_base = np.bincount(flat[valid], weights=rate[valid], minlength=2 * n).reshape(n, 2)
    contributing[:] = np.bincount(flat[valid], minlength=2 * n).reshape(n, 2)

    win = (panel.df["result"].to_numpy() == "win").astype(float)
    z[:, :2] = z_base
    z[:, 2:] = z_base * win[:, None]
    return out
