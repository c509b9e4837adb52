"""Empirical cascade diagnostics for panel data and wavelet pyramids.

This module covers the data-facing half of the toolkit: turning an
intraday price panel into one normalized return path, extracting the
layer-to-layer multiplicative factors of its wavelet pyramid backwards
(``W = child / parent`` in the rescaled convention), correlation
diagnostics between factors across the tree, the distribution-collapse
estimate of the global scaling exponent, and the per-layer variance
decomposition

    Var(child | parent) = Var(W) * parent^2 + Var(eta) * h_j^2,
    (h_{j+1} / h_j)^2   = Var(W) + Var(eta),

fitted by regressing binned conditional variances on the squared bin
center.  All layer statistics use the population convention (divisor n);
the size-one root layer uses the magnitude of the root coefficient in
place of its (vanishing) standard deviation.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from wcascade.dwt import TimeSeries, WaveletPyramid
from wcascade.stats import binned_conditional_variance, ols, pearson_correlation

__all__ = [
    "ReturnPanel",
    "MultiplierTransition",
    "MultiplierSet",
    "CorrelationRow",
    "MultiplierCorrelations",
    "CollapseResult",
    "TransitionVarianceFit",
    "load_panel_csv",
    "deseasonalize_returns",
    "accumulate_path",
    "extract_multipliers",
    "multiplier_correlations",
    "collapse_H",
    "estimate_variances",
    "variance_table_rows",
]


@dataclass
class ReturnPanel:
    """Intraday price panel on a shared minute grid.

    ``prices`` has one column per issue; day boundaries are inferred from
    date changes in the timestamps, and returns never span them.
    """

    timestamps: np.ndarray  # datetime64[s]
    issues: list
    prices: np.ndarray  # shape (n_times, n_issues)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[s]")
        self.prices = np.asarray(self.prices, dtype=float)
        if self.prices.ndim != 2 or self.prices.shape[0] != self.timestamps.size:
            raise ValueError("prices must be (n_times, n_issues)")
        if len(self.issues) != self.prices.shape[1]:
            raise ValueError("issue names inconsistent with price columns")
        if self.timestamps.size < 2:
            raise ValueError("panel needs at least 2 rows")
        if np.any(np.diff(self.timestamps).astype(np.int64) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(self.prices)) or np.any(self.prices <= 0):
            raise ValueError("prices must be finite and positive")

    @property
    def day_starts(self) -> np.ndarray:
        days = self.timestamps.astype("datetime64[D]")
        changes = np.flatnonzero(days[1:] != days[:-1]) + 1
        return np.concatenate([[0], changes])

    @property
    def minute_of_day(self) -> np.ndarray:
        days = self.timestamps.astype("datetime64[D]")
        return (self.timestamps - days).astype("timedelta64[m]").astype(np.int64)


def load_panel_csv(path) -> ReturnPanel:
    """Read ``timestamp,ISSUE1,ISSUE2,...`` rows into a panel."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"panel file {path} is empty") from None
        if len(header) < 2 or header[0].strip().lower() != "timestamp":
            raise ValueError("panel header must be 'timestamp,ISSUE1,...'")
        issues = [name.strip() for name in header[1:]]
        stamps = []
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"row {line_no} has {len(row)} fields, expected {len(header)}")
            stamps.append(row[0].strip().replace(" ", "T"))
            rows.append([float(v) for v in row[1:]])
    if not rows:
        raise ValueError(f"panel file {path} has no data rows")
    return ReturnPanel(
        timestamps=np.array(stamps, dtype="datetime64[s]"),
        issues=issues,
        prices=np.array(rows, dtype=float),
    )


def deseasonalize_returns(panel: ReturnPanel, dt: int = 1) -> np.ndarray:
    """Average normalized intraday log-return across the panel's issues.

    Per issue: log-returns at lag ``dt`` are taken inside each day
    (overnight changes are dropped), divided by that issue's time-of-day
    standard deviation, then z-scored.  Time-of-day bins with fewer than
    two observations, or with zero spread, fall back to the issue's global
    standard deviation with a warning.
    """
    if dt < 1:
        raise ValueError("dt must be >= 1")
    log_prices = np.log(panel.prices)
    starts = panel.day_starts
    ends = np.concatenate([starts[1:], [panel.timestamps.size]])
    slot_idx = []
    for a, b in zip(starts, ends):
        if b - a > dt:
            slot_idx.append(np.arange(a + dt, b))
    if not slot_idx:
        raise ValueError(f"no day is longer than the return lag dt={dt}")
    slots = np.concatenate(slot_idx)
    returns = log_prices[slots] - log_prices[slots - dt]
    tod = panel.minute_of_day[slots]
    tod_values = np.unique(tod)
    n_issues = len(panel.issues)
    averaged = np.zeros(slots.size)
    for i in range(n_issues):
        r = returns[:, i]
        global_std = float(r.std())
        if global_std == 0.0:
            raise ValueError(
                f"issue {panel.issues[i]!r} has degenerate returns (zero variance)"
            )
        profile = np.empty(slots.size)
        fallbacks = []
        for v in tod_values:
            mask = tod == v
            obs = r[mask]
            sigma = float(obs.std()) if obs.size >= 2 else 0.0
            if sigma == 0.0:
                sigma = global_std
                fallbacks.append(int(v))
            profile[mask] = sigma
        if fallbacks:
            warnings.warn(
                f"issue {panel.issues[i]!r}: time-of-day bins {fallbacks} are too "
                "sparse; using the global standard deviation there",
                stacklevel=2,
            )
        normalized = r / profile
        spread = float(normalized.std())
        if spread == 0.0:
            raise ValueError(
                f"issue {panel.issues[i]!r} has degenerate normalized returns"
            )
        averaged += (normalized - normalized.mean()) / spread
    return averaged / n_issues


def accumulate_path(deltas) -> TimeSeries:
    """Cumulative sum of increments, truncated to the most recent 2^J points."""
    deltas = np.asarray(deltas, dtype=float)
    if deltas.ndim != 1 or deltas.size < 2:
        raise ValueError("need a vector of at least 2 increments")
    if not np.all(np.isfinite(deltas)):
        raise ValueError("increments contain non-finite values")
    keep = 2 ** int(math.floor(math.log2(deltas.size)))
    return TimeSeries(np.cumsum(deltas[-keep:]))


@dataclass
class MultiplierTransition:
    """Backward factor estimates for one layer transition j -> j+1.

    ``left[k] = child(2k)/parent(k)`` and ``right[k] = child(2k+1)/parent(k)``;
    entries whose parent magnitude falls below the masking threshold carry
    NaN and ``valid[k] = False``.
    """

    parent_layer: int
    left: np.ndarray
    right: np.ndarray
    valid: np.ndarray

    @property
    def pooled(self) -> np.ndarray:
        """Valid left and right ratios concatenated."""
        return np.concatenate([self.left[self.valid], self.right[self.valid]])


@dataclass
class MultiplierSet:
    transitions: list

    def transition(self, parent_layer: int) -> MultiplierTransition:
        for t in self.transitions:
            if t.parent_layer == parent_layer:
                return t
        raise KeyError(f"no transition with parent layer {parent_layer}")


def _layer_values(pyramid: WaveletPyramid, j: int) -> np.ndarray:
    return np.array([pyramid.root_detail]) if j == 0 else pyramid.layer(j)


def _layer_spread(values: np.ndarray) -> float:
    # Size-one layers carry no spread; use the coefficient magnitude.
    return float(values.std()) if values.size > 1 else float(abs(values[0]))


def extract_multipliers(pyramid: WaveletPyramid, zero_tol: float = 1e-6) -> MultiplierSet:
    """Backward child/parent ratios for every layer transition.

    Requires a rescaled pyramid.  Parents with magnitude below
    ``zero_tol * h_j`` (and exact zeros) are masked rather than producing
    infinities.
    """
    if not pyramid.rescaled:
        raise ValueError("multiplier extraction needs a rescaled pyramid")
    transitions = []
    for j in range(pyramid.depth):
        parents = _layer_values(pyramid, j)
        children = pyramid.layer(j + 1)
        threshold = zero_tol * _layer_spread(parents)
        valid = np.abs(parents) > threshold
        left = np.full(parents.size, np.nan)
        right = np.full(parents.size, np.nan)
        np.divide(children[0::2], parents, out=left, where=valid)
        np.divide(children[1::2], parents, out=right, where=valid)
        if not np.any(valid):
            warnings.warn(
                f"transition {j}->{j + 1}: every parent is masked; no ratios",
                stacklevel=2,
            )
        transitions.append(
            MultiplierTransition(parent_layer=j, left=left, right=right, valid=valid)
        )
    return MultiplierSet(transitions=transitions)


@dataclass
class CorrelationRow:
    layer: int
    r: float
    n_pairs: int


@dataclass
class MultiplierCorrelations:
    """Per-layer Pearson diagnostics across the cascade tree.

    ``successive`` pairs each node's incoming factor with both of its
    outgoing factors; ``parent_vs_factor`` pairs each parent coefficient
    with its two outgoing factors.  Layers with too few valid pairs, or
    with constant factors, are omitted with a warning.

    By default the correlation is computed between log magnitudes.  The
    raw ratios have Cauchy-like tails, so their sample Pearson coefficient
    is dominated by a handful of extreme pairs and carries no stable
    signal; the log-magnitude coefficient is the statistic that exposes
    the dependence between neighbouring hierarchy levels.
    """

    successive: list
    parent_vs_factor: list


def _interleave(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    out = np.empty(left.size * 2, dtype=left.dtype)
    out[0::2] = left
    out[1::2] = right
    return out


def _correlation_row(x, y, valid, layer: int, min_pairs: int, label: str, log_mag: bool):
    if log_mag:
        # log of a zero magnitude is -inf; treat such pairs as masked
        with np.errstate(divide="ignore", invalid="ignore"):
            x = np.log(np.abs(x))
            y = np.log(np.abs(y))
        valid = valid & np.isfinite(x) & np.isfinite(y)
    n = int(np.count_nonzero(valid))
    if n < min_pairs:
        warnings.warn(
            f"{label} at layer {layer}: only {n} valid pairs (< {min_pairs}); omitted",
            stacklevel=3,
        )
        return None
    try:
        r = pearson_correlation(x[valid], y[valid])
    except ValueError:
        warnings.warn(
            f"{label} at layer {layer}: correlation undefined (constant factors); omitted",
            stacklevel=3,
        )
        return None
    return CorrelationRow(layer=layer, r=r, n_pairs=n)


def multiplier_correlations(
    ms: MultiplierSet,
    pyramid: WaveletPyramid,
    min_pairs: int = 30,
    log_magnitudes: bool = True,
) -> MultiplierCorrelations:
    if len(ms.transitions) < 2:
        raise ValueError("need at least 2 layer transitions")
    successive = []
    parent_vs = []
    for outgoing in ms.transitions:
        j = outgoing.parent_layer
        out_x2 = np.concatenate([outgoing.left, outgoing.right])
        out_valid2 = np.concatenate([outgoing.valid, outgoing.valid])
        # Parent coefficient against each outgoing factor.
        parents = _layer_values(pyramid, j)
        row = _correlation_row(
            np.concatenate([parents, parents]),
            out_x2,
            out_valid2,
            j,
            min_pairs,
            "parent-vs-factor",
            log_magnitudes,
        )
        if row is not None:
            parent_vs.append(row)
        if j == 0:
            continue
        # Incoming factor of each layer-j node against its outgoing factors.
        incoming_t = ms.transition(j - 1)
        incoming = _interleave(incoming_t.left, incoming_t.right)
        in_valid = np.repeat(incoming_t.valid, 2)
        row = _correlation_row(
            np.concatenate([incoming, incoming]),
            out_x2,
            np.concatenate([in_valid & outgoing.valid, in_valid & outgoing.valid]),
            j,
            min_pairs,
            "successive-factor",
            log_magnitudes,
        )
        if row is not None:
            successive.append(row)
    return MultiplierCorrelations(successive=successive, parent_vs_factor=parent_vs)


def _ks_statistic_sorted(x: np.ndarray, y: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov statistic for pre-sorted samples."""
    grid = np.concatenate([x, y])
    fx = np.searchsorted(x, grid, side="right") / x.size
    fy = np.searchsorted(y, grid, side="right") / y.size
    return float(np.max(np.abs(fx - fy)))


@dataclass
class CollapseResult:
    """Exponent under which the rescaled layer distributions superpose."""

    h: float
    distance: float
    h_grid: np.ndarray
    distances: np.ndarray
    boundary: bool


def collapse_H(
    pyramid: WaveletPyramid, h_grid, min_layer_size: int = 64
) -> CollapseResult:
    """Distribution-collapse estimate of the global scaling exponent.

    For each candidate exponent H, layer-j samples are rescaled by
    ``scale_j ** -H`` and the mean pairwise two-sample KS distance across
    layers is computed; the estimate is the grid argmin.  Needs at least
    three layers of ``min_layer_size`` coefficients in a rescaled pyramid.
    """
    if not pyramid.rescaled:
        raise ValueError("collapse estimation needs a rescaled pyramid")
    h_grid = np.asarray(h_grid, dtype=float)
    if h_grid.size < 2 or np.any(np.diff(h_grid) <= 0):
        raise ValueError("h_grid must be an increasing vector of >= 2 values")
    usable = [j for j in range(1, pyramid.depth + 1) if 2**j >= min_layer_size]
    if len(usable) < 3:
        raise ValueError(
            f"need >= 3 layers with >= {min_layer_size} coefficients, "
            f"got {len(usable)}"
        )
    sorted_layers = [np.sort(pyramid.layer(j)) for j in usable]
    log_scales = np.array([math.log(pyramid.scale(j)) for j in usable])
    distances = np.empty(h_grid.size)
    for k, h in enumerate(h_grid):
        factors = np.exp(-h * log_scales)
        total = 0.0
        n_pairs = 0
        for a in range(len(usable)):
            xa = sorted_layers[a] * factors[a]
            for b in range(a + 1, len(usable)):
                total += _ks_statistic_sorted(xa, sorted_layers[b] * factors[b])
                n_pairs += 1
        distances[k] = total / n_pairs
    best = int(np.argmin(distances))
    boundary = best in (0, h_grid.size - 1)
    if boundary:
        warnings.warn(
            "collapse argmin sits on the H grid boundary; widen the grid",
            stacklevel=2,
        )
    return CollapseResult(
        h=float(h_grid[best]),
        distance=float(distances[best]),
        h_grid=h_grid,
        distances=distances,
        boundary=boundary,
    )


@dataclass
class TransitionVarianceFit:
    """Variance decomposition of one layer transition and side.

    ``var_w`` is the regression slope and ``var_eta`` the intercept divided
    by ``h_j**2``, both clamped at zero (``clamped`` records if that bit);
    ``ratio_sq`` is ``(h_{j+1}/h_j)**2`` and ``identity_residual`` its gap
    to ``var_w + var_eta``.
    """

    parent_layer: int
    side: str
    slope: float
    intercept: float
    stderr_slope: float
    stderr_intercept: float
    adj_r2: float
    var_w: float
    var_eta: float
    clamped: bool
    ratio_sq: float
    identity_residual: float
    n_bins: int

    def __post_init__(self):
        for name in (
            "slope", "intercept", "stderr_slope", "stderr_intercept",
            "adj_r2", "var_w", "var_eta", "ratio_sq", "identity_residual",
        ):
            setattr(self, name, float(getattr(self, name)))
        self.parent_layer = int(self.parent_layer)
        self.n_bins = int(self.n_bins)
        self.clamped = bool(self.clamped)

    def to_dict(self) -> dict:
        return {
            "parent_layer": self.parent_layer,
            "side": self.side,
            "slope": self.slope,
            "intercept": self.intercept,
            "stderr_slope": self.stderr_slope,
            "stderr_intercept": self.stderr_intercept,
            "adj_r2": self.adj_r2,
            "var_w": self.var_w,
            "var_eta": self.var_eta,
            "clamped": self.clamped,
            "ratio_sq": self.ratio_sq,
            "identity_residual": self.identity_residual,
            "n_bins": self.n_bins,
        }


def _zero_variance_row(j: int, side: str, ratio_sq: float) -> TransitionVarianceFit:
    return TransitionVarianceFit(
        parent_layer=j,
        side=side,
        slope=0.0,
        intercept=0.0,
        stderr_slope=float("nan"),
        stderr_intercept=float("nan"),
        adj_r2=float("nan"),
        var_w=0.0,
        var_eta=0.0,
        clamped=False,
        ratio_sq=ratio_sq,
        identity_residual=abs(ratio_sq) if math.isfinite(ratio_sq) else float("nan"),
        n_bins=0,
    )


def estimate_variances(
    pyramid: WaveletPyramid,
    bin_width: float = 0.2,
    min_count: int = 100,
    min_layer_size: int = 256,
) -> list:
    """Per-transition, per-side variance decomposition fits.

    Parents are binned with width ``bin_width * h_j``; bins holding at
    least ``min_count`` children enter an ordinary least squares fit of the
    conditional variance against the squared bin center.  Transitions whose
    parent layer is smaller than ``min_layer_size``, or with fewer than 3
    usable bins, are omitted (with a warning), except that an exactly
    deterministic transition reports zero variances directly.
    """
    if not pyramid.rescaled:
        raise ValueError("variance estimation needs a rescaled pyramid")
    rows = []
    for j in range(1, pyramid.depth):
        parents = pyramid.layer(j)
        if parents.size < min_layer_size:
            continue
        children = pyramid.layer(j + 1)
        h_j = float(parents.std())
        h_j1 = float(children.std())
        sides = (("left", children[0::2]), ("right", children[1::2]))
        if h_j == 0.0:
            ratio_sq = float("nan")
            for side, kids in sides:
                if float(kids.var()) == 0.0:
                    rows.append(_zero_variance_row(j, side, ratio_sq))
                else:
                    warnings.warn(
                        f"transition {j}->{j + 1} ({side}): parent layer has no "
                        "spread; cannot fit",
                        stacklevel=2,
                    )
            continue
        ratio_sq = (h_j1 / h_j) ** 2
        for side, kids in sides:
            with warnings.catch_warnings():
                # the sparse-bin condition is re-reported below with the
                # transition in the message
                warnings.simplefilter("ignore", UserWarning)
                table = binned_conditional_variance(
                    parents, kids, bin_width * h_j, min_count
                )
            inc = table.included
            if int(np.count_nonzero(inc)) < 3:
                if table.conditional_variances.size and table.conditional_variances.max() == 0.0:
                    rows.append(_zero_variance_row(j, side, ratio_sq))
                else:
                    warnings.warn(
                        f"transition {j}->{j + 1} ({side}): fewer than 3 usable "
                        "bins; omitted",
                        stacklevel=2,
                    )
                continue
            fit = ols(table.bin_centers[inc] ** 2, table.conditional_variances[inc])
            var_w = max(fit.slope, 0.0)
            var_eta = max(fit.intercept, 0.0) / h_j**2
            rows.append(
                TransitionVarianceFit(
                    parent_layer=j,
                    side=side,
                    slope=fit.slope,
                    intercept=fit.intercept,
                    stderr_slope=fit.stderr_slope,
                    stderr_intercept=fit.stderr_intercept,
                    adj_r2=fit.adj_r2,
                    var_w=var_w,
                    var_eta=var_eta,
                    clamped=fit.slope < 0.0 or fit.intercept < 0.0,
                    ratio_sq=ratio_sq,
                    identity_residual=abs(ratio_sq - (var_w + var_eta)),
                    n_bins=int(np.count_nonzero(inc)),
                )
            )
    return rows


def variance_table_rows(fits: list) -> list:
    """Publication-style table rows for a list of transition fits."""
    rows = []
    for f in fits:
        rows.append(
            {
                "Scale": f.parent_layer,
                "side": f.side,
                "a": f.slope,
                "b": f.intercept,
                "Std a": f.stderr_slope,
                "Std b": f.stderr_intercept,
                "Adj R2": f.adj_r2,
                "Var(W)": f.var_w,
                "Var(eta)": f.var_eta,
            }
        )
    return rows
