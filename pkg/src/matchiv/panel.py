"""Match-telemetry panel: loading, validation, and per-player outcomes.

A panel holds one row per (match, player) participation. Rows are kept in
canonical (player_id, match_start, match_id) order; all downstream modules
index into this order.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Optional, Union

import numpy as np
import pandas as pd

from .errors import DataError, SchemaError, ValidationError

REQUIRED_COLUMNS = (
    "match_id",
    "player_id",
    "team_id",
    "party_id",
    "match_start",
    "match_end",
    "used_toxic",
    "result",
)

RESULTS = ("win", "loss", "draw")

SECONDS_PER_HOUR = 3600.0

_TRUTHY = {"1", "true", "t", "yes"}
_FALSY = {"0", "false", "f", "no"}

# Cap on how many offending rows/matches an error message enumerates.
_MAX_REPORTED = 20


@dataclass(frozen=True)
class PlayerMatchRow:
    """One player's participation in one match."""

    match_id: str
    player_id: str
    team_id: int
    party_id: Optional[str]  # None = queued solo
    match_start: float       # seconds, UTC epoch
    match_end: float
    used_toxic: bool
    result: str              # win | loss | draw


class MatchPanel:
    """Validated, canonically ordered participation panel.

    Wraps a DataFrame sorted by (player_id, match_start, match_id) and
    caches the integer codes used by the vectorised downstream passes:

    - ``player_code``: dense player index, ordered by player_id.
    - ``match_code``: dense match index, ordered by match_id.
    - ``match_rank``: dense chronological match index ordered by
      (match_start, match_id); "prior" everywhere in this package means
      strictly smaller ``match_rank``.
    """

    def __init__(self, df: pd.DataFrame):
        self._df = df.reset_index(drop=True)
        self._codes: Optional[dict] = None

    # -- basic accessors ---------------------------------------------------

    @property
    def df(self) -> pd.DataFrame:
        return self._df

    def __len__(self) -> int:
        return len(self._df)

    @property
    def n_rows(self) -> int:
        return len(self._df)

    @property
    def n_matches(self) -> int:
        return int(self._df["match_id"].nunique())

    @property
    def n_players(self) -> int:
        return int(self._df["player_id"].nunique())

    def _build_codes(self) -> dict:
        df = self._df
        player_ids, player_code = np.unique(df["player_id"].to_numpy(), return_inverse=True)
        match_ids, match_code = np.unique(df["match_id"].to_numpy(), return_inverse=True)

        # Chronological rank per match: order matches by (start, match_id).
        first = np.full(len(match_ids), -1, dtype=np.int64)
        # match_start is constant within a match (validated), any row works
        starts = np.empty(len(match_ids))
        starts[match_code] = df["match_start"].to_numpy()
        order = np.lexsort((np.arange(len(match_ids)), starts))
        rank_of_match = np.empty(len(match_ids), dtype=np.int64)
        rank_of_match[order] = np.arange(len(match_ids))
        del first

        party = df["party_id"].to_numpy(dtype=object)
        solo = np.array([p is None for p in party], dtype=bool)
        # Give each solo row its own party code so "same party" is never
        # triggered by two solo players.
        party_key = np.where(solo, [f"\x00solo{i}" for i in range(len(party))], party)
        _, party_code = np.unique(party_key.astype(str), return_inverse=True)

        return {
            "player_ids": player_ids,
            "match_ids": match_ids,
            "player_code": player_code.astype(np.int64),
            "match_code": match_code.astype(np.int64),
            "match_rank": rank_of_match[match_code],
            "party_code": party_code.astype(np.int64),
            "solo": solo,
        }

    def _get_codes(self) -> dict:
        if self._codes is None:
            self._codes = self._build_codes()
        return self._codes

    @property
    def player_code(self) -> np.ndarray:
        return self._get_codes()["player_code"]

    @property
    def match_code(self) -> np.ndarray:
        return self._get_codes()["match_code"]

    @property
    def match_rank(self) -> np.ndarray:
        return self._get_codes()["match_rank"]

    @property
    def party_code(self) -> np.ndarray:
        return self._get_codes()["party_code"]

    @property
    def solo(self) -> np.ndarray:
        return self._get_codes()["solo"]

    @property
    def player_ids(self) -> np.ndarray:
        return self._get_codes()["player_ids"]

    @property
    def match_ids(self) -> np.ndarray:
        return self._get_codes()["match_ids"]

    @classmethod
    def from_rows(cls, rows: Iterable[PlayerMatchRow]) -> "MatchPanel":
        recs = [
            (r.match_id, r.player_id, r.team_id, r.party_id, r.match_start,
             r.match_end, r.used_toxic, r.result)
            for r in rows
        ]
        df = pd.DataFrame.from_records(recs, columns=list(REQUIRED_COLUMNS))
        return _validate_and_build(df)


def _fmt_ids(ids) -> str:
    ids = list(ids)
    shown = ", ".join(str(i) for i in ids[:_MAX_REPORTED])
    if len(ids) > _MAX_REPORTED:
        shown += f", ... ({len(ids)} total)"
    return shown


def _parse_bool(series: pd.Series) -> np.ndarray:
    s = series.astype(str).str.strip().str.lower()
    out = np.full(len(s), -1, dtype=np.int8)
    out[s.isin(_TRUTHY)] = 1
    out[s.isin(_FALSY)] = 0
    if (out < 0).any():
        bad = np.flatnonzero(out < 0)
        raise ValidationError(
            f"used_toxic not boolean at rows {_fmt_ids(bad)}"
        )
    return out.astype(bool)


def load_match_rows(
    source: Union[str, BinaryIO, io.IOBase],
    schema: Optional[dict] = None,
    delimiter: str = ",",
) -> MatchPanel:
    """Load and validate a participation panel from delimited text.

    ``schema`` maps canonical column names to the file's column names;
    unmapped names are taken as-is. Raises SchemaError for missing columns
    and ValidationError for invariant violations, listing the offenders.
    """
    schema = schema or {}
    df = pd.read_csv(source, sep=delimiter, dtype=str, keep_default_na=False)
    rename = {schema.get(name, name): name for name in REQUIRED_COLUMNS}
    missing = [src for src in rename if src not in df.columns]
    if missing:
        raise SchemaError(f"missing required column(s): {_fmt_ids(sorted(missing))}")
    df = df.rename(columns=rename)[list(REQUIRED_COLUMNS)]
    return _validate_and_build(df)


def _validate_and_build(df: pd.DataFrame) -> MatchPanel:
    df = df.copy()
    n = len(df)

    df["match_id"] = df["match_id"].astype(str)
    df["player_id"] = df["player_id"].astype(str)

    for col in ("match_start", "match_end"):
        vals = pd.to_numeric(df[col], errors="coerce")
        if vals.isna().any():
            bad = np.flatnonzero(vals.isna().to_numpy())
            raise ValidationError(f"{col} not numeric at rows {_fmt_ids(bad)}")
        df[col] = vals.astype(float)

    team = pd.to_numeric(df["team_id"], errors="coerce")
    if team.isna().any():
        bad = np.flatnonzero(team.isna().to_numpy())
        raise ValidationError(f"team_id not numeric at rows {_fmt_ids(bad)}")
    df["team_id"] = team.astype(int)

    if df["used_toxic"].dtype != bool:
        df["used_toxic"] = _parse_bool(df["used_toxic"])

    result = df["result"].astype(str).str.strip().str.lower()
    bad_result = ~result.isin(RESULTS)
    if bad_result.any():
        raise ValidationError(
            f"result not in {RESULTS} at rows {_fmt_ids(np.flatnonzero(bad_result.to_numpy()))}"
        )
    df["result"] = result

    df["party_id"] = [
        None
        if (p is None or (isinstance(p, float) and np.isnan(p))
            or str(p).strip() == "" or str(p).lower() in ("nan", "none"))
        else str(p)
        for p in df["party_id"]
    ]

    if n == 0:
        return MatchPanel(df)

    bad_span = df["match_end"].to_numpy() < df["match_start"].to_numpy()
    if bad_span.any():
        raise ValidationError(
            f"match_end < match_start at rows {_fmt_ids(np.flatnonzero(bad_span))}"
        )

    dup = df.duplicated(subset=["match_id", "player_id"], keep=False)
    if dup.any():
        pairs = df.loc[dup, ["match_id", "player_id"]].drop_duplicates()
        raise ValidationError(
            "duplicate (match_id, player_id): "
            + _fmt_ids(tuple(t) for t in pairs.itertuples(index=False))
        )

    _validate_matches(df)

    df = df.sort_values(
        ["player_id", "match_start", "match_id"], kind="mergesort"
    ).reset_index(drop=True)
    return MatchPanel(df)


def _group_minmax(values: np.ndarray, starts: np.ndarray):
    """Per-group (min, max) for contiguous groups starting at ``starts``."""
    return np.minimum.reduceat(values, starts), np.maximum.reduceat(values, starts)


def _validate_matches(df: pd.DataFrame) -> None:
    """Match-level invariants: two equal teams, win/loss coherence,
    party/team coherence, constant timestamps per match."""
    mcode, mids = pd.factorize(df["match_id"], sort=False)
    n_m = len(mids)
    team = df["team_id"].to_numpy()
    result = df["result"].map({"loss": 0, "win": 1, "draw": 2}).to_numpy()

    # contiguous (match, team) groups
    order = np.lexsort((team, mcode))
    mc, tm = mcode[order], team[order]
    starts = np.flatnonzero(np.r_[True, (mc[1:] != mc[:-1]) | (tm[1:] != tm[:-1])])
    grp_match = mc[starts]
    grp_size = np.diff(np.append(starts, len(mc)))
    teams_per_match = np.bincount(grp_match, minlength=n_m)

    bad_teams = teams_per_match != 2
    two = np.flatnonzero(np.r_[True, grp_match[1:] != grp_match[:-1]])
    pairs = two[teams_per_match[grp_match[two]] == 2]  # first group of 2-team matches
    unequal = grp_size[pairs] != grp_size[pairs + 1]
    bad_teams[grp_match[pairs[unequal]]] = True
    if bad_teams.any():
        raise ValidationError(
            f"unequal or missing teams in match(es) {_fmt_ids(mids[bad_teams])}"
        )

    # per-team result must be constant, and the two teams must pair up as
    # win/loss (either order) or draw/draw
    r_lo, r_hi = _group_minmax(result[order], starts)
    mixed_team = r_lo != r_hi
    lo = np.minimum(r_lo[pairs], r_lo[pairs + 1])
    hi = np.maximum(r_hi[pairs], r_hi[pairs + 1])
    bad_pair = ~(((lo == 0) & (hi == 1)) | ((lo == 2) & (hi == 2)))
    bad_result = np.zeros(n_m, dtype=bool)
    bad_result[grp_match[mixed_team]] = True
    bad_result[grp_match[pairs[bad_pair]]] = True
    if bad_result.any():
        raise ValidationError(
            f"inconsistent win/loss/draw in match(es) {_fmt_ids(mids[bad_result])}"
        )

    # a party never straddles teams within a match
    has_party = df["party_id"].notna().to_numpy()
    if has_party.any():
        pcode, _ = pd.factorize(df["party_id"][has_party], sort=False)
        pm, pt = mcode[has_party], team[has_party]
        p_order = np.lexsort((pcode, pm))
        ppm, ppc = pm[p_order], pcode[p_order]
        p_starts = np.flatnonzero(
            np.r_[True, (ppm[1:] != ppm[:-1]) | (ppc[1:] != ppc[:-1])]
        )
        t_lo, t_hi = _group_minmax(pt[p_order], p_starts)
        split = t_lo != t_hi
        if split.any():
            raise ValidationError(
                f"party split across teams in match(es) {_fmt_ids(mids[np.unique(ppm[p_starts[split]])])}"
            )

    t_order = np.argsort(mcode, kind="stable")
    m_starts = np.flatnonzero(np.r_[True, np.diff(mcode[t_order]) != 0])
    bad_times = np.zeros(n_m, dtype=bool)
    for col in ("match_start", "match_end"):
        v_lo, v_hi = _group_minmax(df[col].to_numpy()[t_order], m_starts)
        bad_times[mcode[t_order][m_starts[v_lo != v_hi]]] = True
    if bad_times.any():
        raise ValidationError(
            f"non-constant timestamps in match(es) {_fmt_ids(mids[bad_times])}"
        )


def _fmt_num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def write_match_rows(panel: MatchPanel, path: str, delimiter: str = ",") -> None:
    """Write a panel in canonical order; loading the file back yields a
    byte-identical re-write (round-trip stable)."""
    df = panel.df
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(delimiter.join(REQUIRED_COLUMNS) + "\n")
        cols = [
            df["match_id"].to_numpy(),
            df["player_id"].to_numpy(),
            df["team_id"].to_numpy(),
            df["party_id"].to_numpy(dtype=object),
            df["match_start"].to_numpy(),
            df["match_end"].to_numpy(),
            df["used_toxic"].to_numpy(),
            df["result"].to_numpy(),
        ]
        for i in range(len(df)):
            fh.write(delimiter.join((
                str(cols[0][i]),
                str(cols[1][i]),
                str(cols[2][i]),
                "" if cols[3][i] is None else str(cols[3][i]),
                _fmt_num(cols[4][i]),
                _fmt_num(cols[5][i]),
                "1" if cols[6][i] else "0",
                str(cols[7][i]),
            )) + "\n")


def derive_time_to_next_match(panel: MatchPanel) -> np.ndarray:
    """Hours from each row's match_end to the same player's next
    match_start; NaN for the player's last observed row.

    Raises DataError if a player's next match starts before the current
    one ends (overlapping participation).
    """
    df = panel.df
    n = len(df)
    y = np.full(n, np.nan)
    if n == 0:
        return y
    player = panel.player_code
    start = df["match_start"].to_numpy()
    end = df["match_end"].to_numpy()
    # canonical order is (player, start); next row is the next match when
    # the player code repeats
    same = player[:-1] == player[1:]
    nxt_start = start[1:]
    gap = (nxt_start - end[:-1]) / SECONDS_PER_HOUR
    overlap = same & (gap < 0)
    if overlap.any():
        bad = np.unique(df["player_id"].to_numpy()[:-1][overlap])
        raise DataError(f"overlapping matches for player(s) {_fmt_ids(bad)}")
    y[:-1][same] = gap[same]
    return y
