"""Market data ingestion: prices to returns to mean/covariance statistics.

Covariances use the population normalization ``1/m`` over the ``m`` return
periods, not the unbiased ``1/(m-1)``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO

import numpy as np

from .errors import InvalidInputError

SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-9
CORRELATION_SLACK = 1e-9


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PriceMatrix:
    """Strictly positive prices, one row per asset, one column per date."""

    prices: np.ndarray
    asset_names: tuple[str, ...] = ()

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.prices, dtype=float))
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 2:
            raise InvalidInputError(f"need at least one asset and two dates, got shape {p.shape}")
        if not np.all(np.isfinite(p)) or np.any(p <= 0):
            i, k = np.argwhere(~(p > 0) | ~np.isfinite(p))[0]
            raise InvalidInputError(f"non-positive price {p[i, k]} for asset {i} at column {k}")
        names = tuple(self.asset_names) or tuple(f"asset{i + 1}" for i in range(p.shape[0]))
        if len(names) != p.shape[0]:
            raise InvalidInputError(f"{len(names)} asset names for {p.shape[0]} assets")
        object.__setattr__(self, "prices", _readonly(p))
        object.__setattr__(self, "asset_names", names)

    @property
    def n(self) -> int:
        return self.prices.shape[0]


@dataclass(frozen=True)
class ReturnHistory:
    """Per-period returns ``r_ik``: asset ``i`` (rows), period ``k`` (columns)."""

    returns: np.ndarray
    asset_names: tuple[str, ...] = ()

    def __post_init__(self):
        r = np.atleast_2d(np.asarray(self.returns, dtype=float))
        if r.shape[1] < 1:
            raise InvalidInputError("need at least one return period")
        if not np.all(np.isfinite(r)):
            raise InvalidInputError("returns must be finite")
        object.__setattr__(self, "returns", _readonly(r))
        object.__setattr__(self, "asset_names", tuple(self.asset_names))

    @property
    def m(self) -> int:
        return self.returns.shape[1]


@dataclass(frozen=True)
class AssetStatistics:
    """Mean returns and covariance matrix of a universe of assets.

    Construction rejects covariances that are asymmetric beyond ``1e-12``, have
    a negative diagonal, or whose smallest eigenvalue is below
    ``-psd_tol * max|Q|``. Matrices are checked, never repaired.
    """

    mean_returns: np.ndarray
    covariance: np.ndarray
    asset_names: tuple[str, ...] = ()
    psd_tol: float = field(default=PSD_TOL, compare=False)

    def __post_init__(self):
        r = np.asarray(self.mean_returns, dtype=float).ravel()
        Q = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        n = r.size
        if Q.shape != (n, n):
            raise InvalidInputError(f"covariance shape {Q.shape} does not match {n} assets")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(Q))):
            raise InvalidInputError("statistics must be finite")
        asym = float(np.max(np.abs(Q - Q.T), initial=0.0))
        if asym > SYMMETRY_TOL:
            raise InvalidInputError(f"covariance is not symmetric (max asymmetry {asym:.3e})")
        if np.any(np.diag(Q) < 0):
            raise InvalidInputError("covariance has a negative diagonal entry")
        check_psd(Q, self.psd_tol)
        names = tuple(self.asset_names) or tuple(f"asset{i + 1}" for i in range(n))
        if len(names) != n:
            raise InvalidInputError(f"{len(names)} asset names for {n} assets")
        object.__setattr__(self, "mean_returns", _readonly(r))
        object.__setattr__(self, "covariance", _readonly(Q))
        object.__setattr__(self, "asset_names", names)

    @property
    def n(self) -> int:
        return self.mean_returns.size

    def stddevs(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def correlations(self) -> np.ndarray:
        s = self.stddevs()
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = self.covariance / np.outer(s, s)
        rho[~np.isfinite(rho)] = 0.0
        np.fill_diagonal(rho, 1.0)
        return rho

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "asset_names": list(self.asset_names),
            "mean_returns": self.mean_returns.tolist(),
            "covariance": self.covariance.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AssetStatistics":
        try:
            stats = cls(data["mean_returns"], data["covariance"], data.get("asset_names", ()))
        except KeyError as exc:
            raise InvalidInputError(f"statistics missing field {exc}") from None
        if "n" in data and int(data["n"]) != stats.n:
            raise InvalidInputError(f"declared n={data['n']} but found {stats.n} assets")
        return stats


def check_psd(Q: np.ndarray, tol: float = PSD_TOL) -> float:
    """Return the smallest eigenvalue of ``Q``; raise if below ``-tol * max|Q|``."""
    if Q.size == 0:
        return 0.0
    lam = float(np.linalg.eigvalsh(Q)[0])
    scale = float(np.max(np.abs(Q)))
    if lam < -tol * scale:
        raise InvalidInputError(
            f"covariance is not positive semidefinite: smallest eigenvalue {lam:.6e}"
        )
    return lam


def compute_returns(prices: PriceMatrix, kind: str = "arithmetic") -> ReturnHistory:
    """Convert prices to per-period returns.

    ``kind="arithmetic"`` gives ``(p[k+1] - p[k]) / p[k]``; ``kind="log"``
    gives ``log(p[k+1] / p[k])``.
    """
    p = prices.prices
    if kind == "arithmetic":
        r = np.diff(p, axis=1) / p[:, :-1]
    elif kind == "log":
        r = np.log(p[:, 1:] / p[:, :-1])
    else:
        raise InvalidInputError(f"unknown return kind {kind!r}")
    return ReturnHistory(r, prices.asset_names)


def asset_statistics(history: ReturnHistory) -> AssetStatistics:
    """Mean returns and ``1/m``-normalized covariance of a return history."""
    R = history.returns
    mean = R.mean(axis=1)
    C = R - mean[:, None]
    Q = C @ C.T / history.m
    Q = 0.5 * (Q + Q.T)
    return AssetStatistics(mean, Q, history.asset_names)


def read_price_csv(source: str | Path | IO[str]) -> PriceMatrix:
    """Read a price table: a header of asset names, then one row per date.

    The first column of every row is an opaque date label and is ignored.
    """
    text = _read_text(source)
    rows = [row for row in csv.reader(io.StringIO(text)) if row and any(c.strip() for c in row)]
    if len(rows) < 3:
        raise InvalidInputError("price file needs a header and at least two dates")
    names = [c.strip() for c in rows[0][1:]]
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(names) + 1:
            raise InvalidInputError(f"line {lineno}: expected {len(names) + 1} fields, got {len(row)}")
        try:
            data.append([float(c) for c in row[1:]])
        except ValueError as exc:
            raise InvalidInputError(f"line {lineno}: {exc}") from None
    return PriceMatrix(np.array(data).T, tuple(names))


def load_meanstd_correlation(stream: IO[str] | str | Path) -> AssetStatistics:
    """Parse the mean/stddev/correlation text format.

    Line 1 holds ``n``; the next ``n`` lines hold ``mean stddev`` per asset;
    the remaining lines are ``i j rho`` triples with 1-based indices, one per
    unordered pair. Diagonal triples are optional but must equal 1 when given.
    Correlations within ``1e-9`` beyond +/-1 are clamped; larger ones are an
    error, as are missing or duplicate pairs.
    """
    tokens = _read_text(stream).split()
    try:
        n = int(tokens[0])
    except (IndexError, ValueError):
        raise InvalidInputError("first token must be the asset count") from None
    if n < 1:
        raise InvalidInputError("asset count must be positive")
    body = tokens[1:]
    if len(body) < 2 * n:
        raise InvalidInputError(f"expected {n} mean/stddev lines")
    try:
        ms = np.array(body[: 2 * n], dtype=float).reshape(n, 2)
        triples = body[2 * n :]
        if len(triples) % 3:
            raise InvalidInputError("correlation section is not a list of 'i j rho' triples")
        tri = np.array(triples, dtype=float).reshape(-1, 3)
    except ValueError as exc:
        raise InvalidInputError(str(exc)) from None
    mean, std = ms[:, 0], ms[:, 1]
    if np.any(std < 0):
        raise InvalidInputError("negative standard deviation")

    rho = np.full((n, n), np.nan)
    np.fill_diagonal(rho, 1.0)
    seen = set()
    for fi, fj, value in tri:
        i, j = int(fi), int(fj)
        if i != fi or j != fj or not (1 <= i <= n and 1 <= j <= n):
            raise InvalidInputError(f"bad asset index pair ({fi:g}, {fj:g})")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise InvalidInputError(f"duplicate correlation pair {key}")
        seen.add(key)
        if abs(value) > 1.0 + CORRELATION_SLACK:
            raise InvalidInputError(f"correlation {value} for pair {key} exceeds 1 in magnitude")
        value = float(np.clip(value, -1.0, 1.0))
        if i == j and abs(value - 1.0) > 1e-6:
            raise InvalidInputError(f"self-correlation of asset {i} is {value}, not 1")
        rho[i - 1, j - 1] = rho[j - 1, i - 1] = value
    missing = np.argwhere(np.isnan(np.triu(rho)))
    if missing.size:
        i, j = missing[0] + 1
        raise InvalidInputError(f"missing correlation pair ({i}, {j})")
    np.fill_diagonal(rho, 1.0)
    Q = rho * np.outer(std, std)
    np.fill_diagonal(Q, std**2)
    return AssetStatistics(mean, Q)


def dump_meanstd_correlation(stats: AssetStatistics) -> str:
    """Inverse of :func:`load_meanstd_correlation` (full precision)."""
    lines = [str(stats.n)]
    lines += [f"{float(m)!r} {float(s)!r}" for m, s in zip(stats.mean_returns, stats.stddevs())]
    rho = stats.correlations()
    for i in range(stats.n):
        for j in range(i, stats.n):
            lines.append(f"{i + 1} {j + 1} {float(rho[i, j])!r}")
    return "\n".join(lines) + "\n"


def load_statistics(path: str | Path) -> AssetStatistics:
    """Load statistics from a JSON dump or a mean/stddev/correlation file."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        return AssetStatistics.from_dict(json.loads(text))
    return load_meanstd_correlation(text)


def save_statistics(stats: AssetStatistics, path: str | Path) -> None:
    Path(path).write_text(json.dumps(stats.to_dict(), indent=1))


def _read_text(source) -> str:
    if hasattr(source, "read"):
        return source.read()
    if isinstance(source, Path):
        return source.read_text()
    if isinstance(source, str) and "\n" not in source and Path(source).is_file():
        return Path(source).read_text()
    return str(source)
