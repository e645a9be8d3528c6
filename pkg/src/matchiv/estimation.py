"""OLS and 2SLS on demeaned panels with robust covariance and first-stage
diagnostics.

All solves go through cross products accumulated in a single streaming
pass over fixed-size row chunks (deterministic reduction order), followed
by a rank-revealing pivoted-QR check on the small Gram matrix.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg, stats

from .errors import EstimationError

CHUNK_ROWS = 1 << 18
RANK_RTOL = 1e-10
WEAK_F_THRESHOLD = 10.0


class CrossProducts:
    """Streaming accumulator for G = M'M and count of rows seen."""

    def __init__(self, k: int):
        self.g = np.zeros((k, k))
        self.n = 0

    def update(self, chunk: np.ndarray) -> "CrossProducts":
        self.g += chunk.T @ chunk
        self.n += len(chunk)
        return self

    def merge(self, other: "CrossProducts") -> "CrossProducts":
        self.g += other.g
        self.n += other.n
        return self


def _chunks(n: int, size: int = CHUNK_ROWS):
    for lo in range(0, n, size):
        yield lo, min(lo + size, n)


def gram(*blocks: np.ndarray) -> np.ndarray:
    """Cross product of the column-concatenation of ``blocks``, accumulated
    chunk by chunk so intermediate copies stay bounded."""
    blocks = [np.atleast_2d(b.T).T if b.ndim == 1 else b for b in blocks]
    n = blocks[0].shape[0]
    k = sum(b.shape[1] for b in blocks)
    acc = CrossProducts(k)
    for lo, hi in _chunks(n):
        acc.update(np.hstack([b[lo:hi] for b in blocks]))
    return acc.g


def _check_rank(g: np.ndarray, names: Sequence[str]) -> None:
    if g.shape[0] == 0:
        return
    _, r, piv = linalg.qr(g, pivoting=True)
    d = np.abs(np.diag(r))
    if d[0] == 0.0:
        raise EstimationError(f"all-zero regressor block: {list(names)}")
    rank = int((d > RANK_RTOL * d[0]).sum())
    if rank < g.shape[0]:
        dependent = [names[i] for i in piv[rank:]]
        raise EstimationError(f"rank-deficient regressors; dependent column(s): {dependent}")


def _solve(g: np.ndarray, b: np.ndarray, names: Sequence[str]) -> np.ndarray:
    _check_rank(g, names)
    try:
        c, low = linalg.cho_factor(g)
        return linalg.cho_solve((c, low), b)
    except linalg.LinAlgError:
        return linalg.solve(g, b, assume_a="sym")


@dataclass
class FirstStageBlock:
    """Diagnostics for one endogenous column's first-stage regression."""

    endog_name: str
    coef_names: tuple
    coef: np.ndarray
    f_stat: float
    f_capped: bool
    df_num: int
    df_den: int
    rss_unrestricted: float
    rss_restricted: float

    def to_dict(self) -> dict:
        return {
            "endog_name": self.endog_name,
            "coef_names": list(self.coef_names),
            "coef": [float(v) for v in self.coef],
            "f_stat": None if np.isinf(self.f_stat) else float(self.f_stat),
            "f_capped": self.f_capped,
            "df_num": self.df_num,
            "df_den": self.df_den,
            "rss_unrestricted": float(self.rss_unrestricted),
            "rss_restricted": float(self.rss_restricted),
        }


@dataclass
class EstimationResult:
    method: str
    names: tuple
    beta: np.ndarray
    vcov: np.ndarray
    se: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    n_obs: int
    n_players: int
    df_resid: int
    vcov_mode: str
    first_stage: list = field(default_factory=list)

    def coef(self, name: str) -> float:
        return float(self.beta[self.names.index(name)])

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "names": list(self.names),
            "beta": [float(v) for v in self.beta],
            "se": [float(v) for v in self.se],
            "t_stats": [float(v) for v in self.t_stats],
            "p_values": [float(v) for v in self.p_values],
            "vcov": [[float(v) for v in row] for row in self.vcov],
            "n_obs": self.n_obs,
            "n_players": self.n_players,
            "df_resid": self.df_resid,
            "vcov_mode": self.vcov_mode,
            "first_stage": [b.to_dict() for b in self.first_stage],
        }


def robust_vcov(
    residuals: np.ndarray,
    regressors: np.ndarray,
    mode: str = "hc1",
    cluster: Optional[np.ndarray] = None,
    df_resid: Optional[int] = None,
) -> np.ndarray:
    """Covariance of the least-squares coefficients.

    ``classical``: s^2 (X'X)^-1 with s^2 = RSS / df_resid.
    ``hc1``: White sandwich scaled by n / df_resid.
    ``cluster``: cluster-sum sandwich with the usual G/(G-1) * (n-1)/df
    small-sample factor; requires ``cluster`` codes.
    """
    x = regressors if regressors.ndim == 2 else regressors[:, None]
    e = np.asarray(residuals, dtype=float)
    n, p = x.shape
    if df_resid is None:
        df_resid = n - p
    if df_resid <= 0:
        raise EstimationError(f"non-positive residual df ({df_resid})")

    g = gram(x)
    _check_rank(g, [f"x{i}" for i in range(p)])
    bread = linalg.inv(g)

    if mode == "classical":
        sigma2 = float(e @ e) / df_resid
        return sigma2 * bread

    if mode == "hc1":
        meat = np.zeros((p, p))
        for lo, hi in _chunks(n):
            s = x[lo:hi] * e[lo:hi, None]
            meat += s.T @ s
        return (n / df_resid) * bread @ meat @ bread

    if mode == "cluster":
        if cluster is None:
            raise EstimationError("cluster vcov requested without cluster codes")
        codes = np.asarray(cluster)
        n_groups = int(codes.max()) + 1 if len(codes) else 0
        sums = np.zeros((n_groups, p))
        for c in range(p):
            sums[:, c] = np.bincount(codes, weights=x[:, c] * e, minlength=n_groups)
        meat = sums.T @ sums
        n_used = int((np.bincount(codes, minlength=n_groups) > 0).sum())
        if n_used < 2:
            raise EstimationError("cluster vcov needs at least two clusters")
        scale = (n_used / (n_used - 1)) * ((n - 1) / df_resid)
        return scale * bread @ meat @ bread

    raise EstimationError(f"unknown vcov mode {mode!r}")


def _inference(beta, vcov, df_resid):
    se = np.sqrt(np.clip(np.diag(vcov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.inf * np.sign(beta + (beta == 0)))
    p = 2.0 * stats.t.sf(np.abs(t), df_resid)
    return se, t, p


def ols(
    y: np.ndarray,
    x: np.ndarray,
    vcov_mode: str = "hc1",
    cluster: Optional[np.ndarray] = None,
    n_absorbed: int = 0,
    names: Optional[Sequence[str]] = None,
) -> EstimationResult:
    """Least squares of y on x (no intercept; inputs are demeaned upstream).

    ``n_absorbed`` players' worth of fixed effects were swept out before
    the call and are charged against the residual df.
    """
    x = x if x.ndim == 2 else x[:, None]
    n, p = x.shape
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(p))
    df_resid = n - p - n_absorbed
    if df_resid <= 0:
        raise EstimationError(f"non-positive residual df (n={n}, p={p}, absorbed={n_absorbed})")

    g = gram(x)
    beta = _solve(g, x.T @ y, names)
    resid = y - x @ beta

    mode = "cluster" if vcov_mode == "cluster_by_player" else vcov_mode
    vcov = robust_vcov(resid, x, mode=mode, cluster=cluster, df_resid=df_resid)
    se, t, pvals = _inference(beta, vcov, df_resid)
    return EstimationResult(
        method="ols",
        names=names,
        beta=beta,
        vcov=vcov,
        se=se,
        t_stats=t,
        p_values=pvals,
        n_obs=n,
        n_players=n_absorbed,
        df_resid=df_resid,
        vcov_mode=vcov_mode,
    )


def first_stage_f(
    endog: np.ndarray,
    instruments: np.ndarray,
    exog: Optional[np.ndarray] = None,
    n_absorbed: int = 0,
):
    """Classic F test that the excluded instruments are jointly irrelevant.

    F = [(RSS_r - RSS_u)/q] / [RSS_u/(n - p - absorbed)] where the
    unrestricted model regresses the endogenous column on [instruments,
    exog] and the restricted one on exog alone (empty restricted model
    means RSS_r = y'y: no intercept survives demeaning). Returns
    (f_stat, capped, df_num, df_den, rss_u, rss_r); a numerically zero
    unrestricted RSS yields an infinite, capped F.
    """
    z = instruments if instruments.ndim == 2 else instruments[:, None]
    n, q = z.shape
    if exog is not None and exog.size:
        w = exog if exog.ndim == 2 else exog[:, None]
        full = np.hstack([z, w])
    else:
        w = None
        full = z
    p = full.shape[1]
    df_den = n - p - n_absorbed
    if df_den <= 0:
        raise EstimationError(f"non-positive first-stage df (n={n}, p={p}, absorbed={n_absorbed})")

    yty = float(endog @ endog)
    g_full = gram(full)
    b_full = _solve(g_full, full.T @ endog, [f"c{i}" for i in range(p)])
    rss_u = max(yty - float(b_full @ (full.T @ endog)), 0.0)

    if w is not None:
        g_w = gram(w)
        b_w = _solve(g_w, w.T @ endog, [f"w{i}" for i in range(w.shape[1])])
        rss_r = max(yty - float(b_w @ (w.T @ endog)), 0.0)
    else:
        rss_r = yty

    if rss_u <= max(yty, 1.0) * 1e-14:
        return np.inf, True, q, df_den, rss_u, rss_r
    f = ((rss_r - rss_u) / q) / (rss_u / df_den)
    return float(f), False, q, df_den, rss_u, rss_r


def tsls(
    y: np.ndarray,
    x_endog: np.ndarray,
    w_exog: Optional[np.ndarray],
    z: np.ndarray,
    vcov_mode: str = "hc1",
    cluster: Optional[np.ndarray] = None,
    n_absorbed: int = 0,
    endog_names: Optional[Sequence[str]] = None,
    exog_names: Optional[Sequence[str]] = None,
    instrument_names: Optional[Sequence[str]] = None,
    weak_f_threshold: float = WEAK_F_THRESHOLD,
) -> EstimationResult:
    """Two-stage least squares with leave-one-out style instruments.

    First stage regresses each endogenous column on [z, w]; the second
    stage uses the fitted values. The reported covariance uses residuals
    computed from the ORIGINAL endogenous regressors (standard 2SLS
    sandwich). First-stage F statistics below ``weak_f_threshold`` raise a
    warning, never an error.
    """
    x = x_endog if x_endog.ndim == 2 else x_endog[:, None]
    z = z if z.ndim == 2 else z[:, None]
    n, k = x.shape
    if z.shape[1] < k:
        raise EstimationError(f"under-identified: {z.shape[1]} instruments for {k} endogenous columns")
    w = None
    if w_exog is not None and w_exog.size:
        w = w_exog if w_exog.ndim == 2 else w_exog[:, None]
    m = 0 if w is None else w.shape[1]

    endog_names = tuple(endog_names) if endog_names else tuple(f"endog{i}" for i in range(k))
    exog_names = tuple(exog_names) if exog_names else tuple(f"exog{i}" for i in range(m))
    instrument_names = (
        tuple(instrument_names) if instrument_names else tuple(f"z{i}" for i in range(z.shape[1]))
    )
    names = endog_names + exog_names

    q_block = np.hstack([z, w]) if w is not None else z
    q_names = instrument_names + exog_names
    g_q = gram(q_block)
    gamma = _solve(g_q, q_block.T @ x, q_names)  # (q+m, k)

    first_stage = []
    for c in range(k):
        f, capped, dfn, dfd, rss_u, rss_r = first_stage_f(
            x[:, c], z, w, n_absorbed=n_absorbed
        )
        if not capped and f < weak_f_threshold:
            warnings.warn(
                f"weak instrument for {endog_names[c]}: first-stage F = {f:.3f} "
                f"< {weak_f_threshold}",
                stacklevel=2,
            )
        first_stage.append(
            FirstStageBlock(
                endog_name=endog_names[c],
                coef_names=q_names,
                coef=gamma[:, c].copy(),
                f_stat=f,
                f_capped=capped,
                df_num=dfn,
                df_den=dfd,
                rss_unrestricted=rss_u,
                rss_restricted=rss_r,
            )
        )

    x_hat = q_block @ gamma
    s = np.hstack([x_hat, w]) if w is not None else x_hat
    p = k + m
    df_resid = n - p - n_absorbed
    if df_resid <= 0:
        raise EstimationError(f"non-positive residual df (n={n}, p={p}, absorbed={n_absorbed})")

    g_s = gram(s)
    beta = _solve(g_s, s.T @ y, names)

    originals = np.hstack([x, w]) if w is not None else x
    resid = y - originals @ beta

    mode = "cluster" if vcov_mode == "cluster_by_player" else vcov_mode
    vcov = robust_vcov(resid, s, mode=mode, cluster=cluster, df_resid=df_resid)
    se, t, pvals = _inference(beta, vcov, df_resid)
    return EstimationResult(
        method="tsls",
        names=names,
        beta=beta,
        vcov=vcov,
        se=se,
        t_stats=t,
        p_values=pvals,
        n_obs=n,
        n_players=n_absorbed,
        df_resid=df_resid,
        vcov_mode=vcov_mode,
        first_stage=first_stage,
    )
