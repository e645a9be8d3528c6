"""Exposure design matrices and exposure descriptives.

The endogenous regressors are per-row counts of toxic co-players in each
context, plus their interactions with the row's Win indicator. Two context
schemes exist:

- ``opp_team``:     {opponents, teammates}
- ``party_split``:  {teammates in a different party, teammates in the
                     same party} (opponents excluded)
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import pandas as pd

from .errors import ConfigError
from .panel import MatchPanel, derive_time_to_next_match

SCHEMES = ("opp_team", "party_split")

SCHEME_CONTEXTS = {
    "opp_team": ("opponents", "teammates"),
    "party_split": ("different_party", "same_party"),
}

# Relation classes used by the visibility mask columns.
REL_TEAMMATE = 0
REL_OPPONENT = 1


@dataclass
class DesignPanel:
    """Aligned per-row regression inputs.

    x columns are [ctx0, ctx1, ctx0_x_win, ctx1_x_win]; z (when attached)
    has the same layout. ``contributing_peers`` counts, per base context,
    how many co-players contributed a valid leave-one-out rate.
    """

    scheme: str
    contexts: tuple
    x_names: tuple
    w_names: tuple
    y_time: np.ndarray            # hours, NaN = player's last observed row
    y_toxic: np.ndarray           # 0/1 floats
    x: np.ndarray                 # (n, 2 * n_contexts)
    w: np.ndarray                 # (n, n_w)
    player_code: np.ndarray
    match_code: np.ndarray
    row_index: np.ndarray         # indices into the source panel's rows
    z: Optional[np.ndarray] = None
    contributing_peers: Optional[np.ndarray] = None   # (n, n_contexts)

    @property
    def n_rows(self) -> int:
        return len(self.row_index)

    def take(self, keep: np.ndarray) -> "DesignPanel":
        """Row subset, preserving alignment of every column block."""
        return replace(
            self,
            y_time=self.y_time[keep],
            y_toxic=self.y_toxic[keep],
            x=self.x[keep],
            w=self.w[keep],
            player_code=self.player_code[keep],
            match_code=self.match_code[keep],
            row_index=self.row_index[keep],
            z=None if self.z is None else self.z[keep],
            contributing_peers=None
            if self.contributing_peers is None
            else self.contributing_peers[keep],
        )


def copair_table(panel: MatchPanel):
    """All ordered (focal_row, peer_row) pairs within each match.

    Returns two equally long int arrays of row indices into the panel's
    canonical order. Vectorised by grouping matches of equal size.
    """
    match_code = panel.match_code
    n_matches = int(match_code.max()) + 1 if len(match_code) else 0
    order = np.argsort(match_code, kind="stable")
    sizes = np.bincount(match_code, minlength=n_matches)

    focal_parts, peer_parts = [], []
    sorted_rows = order
    # offsets of each match's rows in `sorted_rows`
    starts = np.concatenate(([0], np.cumsum(sizes)))
    for s in np.unique(sizes):
        if s < 2:
            continue
        mids = np.flatnonzero(sizes == s)
        idx = (starts[mids][:, None] + np.arange(s)).ravel()
        block = sorted_rows[idx].reshape(len(mids), s)
        peer_pos = np.array([[p for p in range(s) if p != q] for q in range(s)])
        focal_parts.append(np.repeat(block, s - 1))
        peer_parts.append(block[:, peer_pos].reshape(-1))
    if not focal_parts:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    return np.concatenate(focal_parts), np.concatenate(peer_parts)


def _normalize_mask(mask, n: int) -> Optional[np.ndarray]:
    if mask is None:
        return None
    mask = np.asarray(mask)
    if mask.ndim == 1:
        mask = np.column_stack([mask, mask])
    if mask.shape != (n, 2):
        raise ConfigError(f"mask must have shape ({n},) or ({n}, 2), got {mask.shape}")
    return mask.astype(bool)


def _pair_context(panel: MatchPanel, focal, peer, scheme: str):
    """Per-pair context id, or -1 for pairs outside the scheme's contexts."""
    team = panel.df["team_id"].to_numpy()
    same_team = team[focal] == team[peer]
    if scheme == "opp_team":
        return np.where(same_team, 1, 0)
    # party_split: teammates only; solo rows carry unique party codes so
    # equality means genuinely the same party
    party = panel.party_code
    same_party = same_team & (party[focal] == party[peer])
    ctx = np.full(len(focal), -1, dtype=np.int64)
    ctx[same_team & ~same_party] = 0
    ctx[same_party] = 1
    return ctx


def _visible_toxic(panel: MatchPanel, focal, peer, mask) -> np.ndarray:
    toxic = panel.df["used_toxic"].to_numpy().astype(float)
    vis = toxic[peer]
    if mask is not None:
        team = panel.df["team_id"].to_numpy()
        rel = np.where(team[focal] == team[peer], REL_TEAMMATE, REL_OPPONENT)
        vis = vis * mask[peer, rel]
    return vis


def build_exposure_design(
    panel: MatchPanel,
    scheme: str = "opp_team",
    mask=None,
    draw_policy: str = "exclude",
) -> DesignPanel:
    """Build outcomes, exposure counts, interactions, and exogenous
    covariates for one context scheme.

    ``mask`` optionally marks which rows' toxic utterances are visible,
    either per row or per (row, relation) with columns
    [visible_to_teammates, visible_to_opponents]. ``draw_policy`` is
    ``exclude`` (default) or ``as_loss``.
    """
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if draw_policy not in ("exclude", "as_loss"):
        raise ConfigError(f"unknown draw_policy {draw_policy!r}")
    if scheme == "party_split" and not (~panel.solo).any():
        raise ConfigError("scheme party_split requires party_id data; all rows are solo")

    n = panel.n_rows
    mask = _normalize_mask(mask, n)
    contexts = SCHEME_CONTEXTS[scheme]

    focal, peer = copair_table(panel)
    ctx = _pair_context(panel, focal, peer, scheme)
    vis = _visible_toxic(panel, focal, peer, mask)

    in_scope = ctx >= 0
    counts = np.bincount(
        focal[in_scope] * 2 + ctx[in_scope],
        weights=vis[in_scope],
        minlength=2 * n,
    ).reshape(n, 2)

    result = panel.df["result"].to_numpy()
    win = (result == "win").astype(float)
    y_time = derive_time_to_next_match(panel)
    y_toxic = panel.df["used_toxic"].to_numpy().astype(float)

    x = np.column_stack([counts, counts * win[:, None]])
    x_names = tuple(contexts) + tuple(f"{c}_x_win" for c in contexts)
    if scheme == "party_split":
        w = np.column_stack([win, (~panel.solo).astype(float)])
        w_names = ("win", "in_party")
    else:
        w = win[:, None]
        w_names = ("win",)

    keep = np.ones(n, dtype=bool)
    if draw_policy == "exclude":
        keep = result != "draw"
    # as_loss: draws keep win = 0, which the construction already gives

    design = DesignPanel(
        scheme=scheme,
        contexts=contexts,
        x_names=x_names,
        w_names=w_names,
        y_time=y_time,
        y_toxic=y_toxic,
        x=x,
        w=w,
        player_code=panel.player_code.copy(),
        match_code=panel.match_code.copy(),
        row_index=np.arange(n),
    )
    return design.take(np.flatnonzero(keep))


def write_mask(panel: MatchPanel, mask: np.ndarray, path: str) -> None:
    """Persist a per-row visibility mask keyed by (match_id, player_id)."""
    mask = _normalize_mask(mask, panel.n_rows)
    df = panel.df
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("match_id,player_id,visible_to_teammates,visible_to_opponents\n")
        for mid, pid, vt, vo in zip(
            df["match_id"], df["player_id"], mask[:, 0], mask[:, 1]
        ):
            fh.write(f"{mid},{pid},{int(vt)},{int(vo)}\n")


def load_mask(path: str, panel: MatchPanel) -> np.ndarray:
    """Load a visibility mask and align it with the panel's row order.
    Rows absent from the file default to fully visible."""
    df = pd.read_csv(path, dtype={"match_id": str, "player_id": str})
    required = {"match_id", "player_id", "visible_to_teammates", "visible_to_opponents"}
    if not required.issubset(df.columns):
        raise ConfigError(f"mask file must have columns {sorted(required)}")
    keyed = df.set_index(["match_id", "player_id"])
    idx = pd.MultiIndex.from_arrays(
        [panel.df["match_id"], panel.df["player_id"]]
    )
    aligned = keyed.reindex(idx)
    out = np.column_stack(
        [
            aligned["visible_to_teammates"].fillna(1).to_numpy(),
            aligned["visible_to_opponents"].fillna(1).to_numpy(),
        ]
    )
    return out.astype(bool)


def describe_exposure(panel: MatchPanel, mask=None) -> pd.DataFrame:
    """Empirical P(exposed to >= 1 toxic co-player) by context and match
    outcome.

    Covers opponents/teammates always and the party split when any party
    data exists. The ``consistent_with_reference`` flag marks cells whose
    probability is below 0.1%, the magnitude reported for production-scale
    telemetry.
    """
    n = panel.n_rows
    mask = _normalize_mask(mask, n)
    focal, peer = copair_table(panel)
    vis = _visible_toxic(panel, focal, peer, mask)

    schemes = ["opp_team"]
    if (~panel.solo).any():
        schemes.append("party_split")

    result = panel.df["result"].to_numpy()
    records = []
    for scheme in schemes:
        ctx = _pair_context(panel, focal, peer, scheme)
        in_scope = ctx >= 0
        counts = np.bincount(
            focal[in_scope] * 2 + ctx[in_scope],
            weights=vis[in_scope],
            minlength=2 * n,
        ).reshape(n, 2)
        for c, label in enumerate(SCHEME_CONTEXTS[scheme]):
            for res in ("win", "loss"):
                rows = result == res
                n_rows = int(rows.sum())
                n_exposed = int((counts[rows, c] >= 1).sum())
                prob = n_exposed / n_rows if n_rows else 0.0
                records.append(
                    {
                        "context": label,
                        "result": res,
                        "n_rows": n_rows,
                        "n_exposed": n_exposed,
                        "probability": prob,
                        "consistent_with_reference": bool(prob < 1e-3),
                    }
                )
    return pd.DataFrame.from_records(records)
