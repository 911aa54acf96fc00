"""Cosupport selection schemes and the projections they induce.

A selection scheme picks, for a signal z and a target count l, a set of
analysis rows to zero out; the induced estimate is the orthogonal projection
of z onto the corresponding null space. Thresholding is cheap and generally
suboptimal; exhaustive search is optimal but exponential; for the 1-D
difference and fused-lasso operators exact polynomial-time dynamic programs
are available.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .linalg import as_vector, complement_projector
from .operators import smallest_coefficients_cosupport

_SCHEME_OPERATORS = {
    "thresholding": None,  # None = applicable to every operator kind
    "exhaustive": None,
    "dif1d-dp": ("dif-1d",),
    "fused-lasso-dp": ("fused-lasso",),
}

# enumeration/table guards for the combinatorial paths
SUBSET_BUDGET = 2_000_000
DP_TABLE_BUDGET = 50_000_000


@dataclass(frozen=True)
class ProjectionScheme:
    """A named cosupport-selection rule plus its operator applicability."""

    kind: str

    def __post_init__(self):
        if self.kind not in _SCHEME_OPERATORS:
            raise ValueError("unknown projection scheme: %r" % self.kind)

    @property
    def applicable_kinds(self):
        return _SCHEME_OPERATORS[self.kind]

    def select(self, omega, z, l):
        allowed = self.applicable_kinds
        if allowed is not None and omega.kind not in allowed:
            raise ValueError(
                "scheme %s applies only to operator kinds %s, got %s"
                % (self.kind, list(allowed), omega.kind))
        if self.kind == "thresholding":
            return threshold_select(omega, z, l)
        if self.kind == "exhaustive":
            return exhaustive_optimal_select(omega, z, l)
        if self.kind == "dif1d-dp":
            return dif1d_optimal_select(z, l)
        return fused_lasso_optimal_select(z, l)


def default_scheme(operator_kind):
    """Best available scheme for an operator kind: the exact DP where one
    exists, thresholding otherwise."""
    if operator_kind == "dif-1d":
        return ProjectionScheme("dif1d-dp")
    if operator_kind == "fused-lasso":
        return ProjectionScheme("fused-lasso-dp")
    return ProjectionScheme("thresholding")


def threshold_select(omega, z, l):
    """Cosupport of the l smallest analysis coefficients of z."""
    return smallest_coefficients_cosupport(omega, z, l)


def project(omega, cosupport, z):
    """Orthogonal projection of z onto the null space of the selected rows.

    Dense operators go through the SVD-based projector; structured kinds use
    closed forms (segment means for differences, component means on the pixel
    graph for 2-D differences, zero-forcing for identity rows).
    """
    z = as_vector(z, "z")
    if z.shape != (omega.d,):
        raise ValueError("signal length %d does not match operator d=%d"
                         % (z.shape[0], omega.d))
    rows = np.unique(np.asarray(cosupport, dtype=int))
    if rows.size and (rows[0] < 0 or rows[-1] >= omega.p):
        raise ValueError("cosupport indices out of range [0, %d)" % omega.p)
    if rows.size == 0:
        return z.copy()

    if omega.kind == "identity":
        out = z.copy()
        out[rows] = 0.0
        return out
    if omega.kind == "dif-1d":
        return _segment_mean_projection(z, rows)
    if omega.kind == "fused-lasso":
        d = omega.d
        diff_rows = rows[rows < d - 1]
        zero_idx = rows[rows >= d - 1] - (d - 1)
        return _segment_mean_projection(z, diff_rows, zero_idx)
    if omega.kind == "dif-2d":
        return _component_mean_projection(z, rows, omega.grid_shape)
    if omega.kind == "unitary":
        sub = omega.row_submatrix(rows)
        return z - sub.T @ (sub @ z)
    return complement_projector(omega.row_submatrix(rows)).apply(z)


def _segment_mean_projection(z, included_diff_rows, forced_zero_idx=None):
    d = z.shape[0]
    brk = np.setdiff1d(np.arange(d - 1), included_diff_rows)
    starts = np.concatenate([[0], brk + 1])
    ends = np.concatenate([brk + 1, [d]])
    zero_mask = None
    if forced_zero_idx is not None and len(forced_zero_idx):
        zero_mask = np.zeros(d, dtype=bool)
        zero_mask[np.asarray(forced_zero_idx, dtype=int)] = True
    out = np.empty(d)
    for a, b in zip(starts, ends):
        if zero_mask is not None and zero_mask[a:b].any():
            out[a:b] = 0.0
        else:
            out[a:b] = z[a:b].mean()
    return out


def _component_mean_projection(z, rows, grid_shape):
    h, w = grid_shape
    n = h * w
    nh = h * (w - 1)
    hr = rows[rows < nh]
    vr = rows[rows >= nh] - nh
    ui = np.concatenate([(hr // (w - 1)) * w + hr % (w - 1),
                         (vr // w) * w + vr % w])
    vi = np.concatenate([(hr // (w - 1)) * w + hr % (w - 1) + 1,
                         (vr // w) * w + vr % w + w])
    adj = coo_matrix((np.ones(ui.size), (ui, vi)), shape=(n, n))
    ncomp, labels = connected_components(adj, directed=False)
    sums = np.bincount(labels, weights=z, minlength=ncomp)
    counts = np.bincount(labels, minlength=ncomp)
    return (sums / counts)[labels]


def exhaustive_optimal_select(omega, z, l, budget=SUBSET_BUDGET):
    """Globally optimal cosupport by enumerating all size-l row subsets.

    Enumeration over exactly-size-l subsets suffices: dropping a row from the
    cosupport enlarges the feasible subspace, so the optimum over |set| >= l
    is attained at some size-l set. Ties are broken lexicographically (the
    first optimum in combination order wins).
    """
    z = as_vector(z, "z")
    if not 0 <= l <= omega.p:
        raise ValueError("l must lie in [0, %d], got %d" % (omega.p, l))
    n_subsets = math.comb(omega.p, l)
    if n_subsets > budget:
        raise ValueError(
            "C(%d, %d) = %d subsets exceeds the enumeration budget %d; "
            "use a structured DP or thresholding" % (omega.p, l, n_subsets, budget))
    best_err = np.inf
    best = None
    for subset in itertools.combinations(range(omega.p), l):
        rows = np.array(subset, dtype=int)
        v = project(omega, rows, z)
        err = float(np.sum((z - v) ** 2))
        if err < best_err:
            best_err = err
            best = rows
    return best


def dif1d_optimal_select(z, l):
    """Optimal cosupport for the 1-D difference operator by segmentation DP.

    Finds the piecewise-constant vector with at most p - l change points
    closest to z (p = d - 1); the cosupport is every difference row interior
    to a segment. Prefix sums make each segment cost O(1); the table is
    O(k d) with an O(d) scan per cell.
    """
    z = as_vector(z, "z")
    d = z.shape[0]
    p = d - 1
    if not 0 <= l <= p:
        raise ValueError("l must lie in [0, %d], got %d" % (p, l))
    k = p - l
    s1 = np.concatenate([[0.0], np.cumsum(z)])
    s2 = np.concatenate([[0.0], np.cumsum(z * z)])

    def sse(a, b):
        # within-segment squared error of z[a:b] around its mean
        return (s2[b] - s2[a]) - (s1[b] - s1[a]) ** 2 / (b - a)

    cost = np.full((k + 1, d + 1), np.inf)
    back = np.zeros((k + 1, d + 1), dtype=int)
    for length in range(1, d + 1):
        cost[0, length] = sse(0, length)
    n_all = np.arange(d + 1)
    for j in range(1, k + 1):
        for length in range(j + 1, d + 1):
            n = n_all[j:length]
            cand = cost[j - 1, j:length] + \
                (s2[length] - s2[n]) - (s1[length] - s1[n]) ** 2 / (length - n)
            i = int(np.argmin(cand))  # first minimum = smallest split point
            cost[j, length] = cand[i]
            back[j, length] = n[i]

    best_j = 0
    for j in range(1, k + 1):
        if cost[j, d] < cost[best_j, d]:
            best_j = j
    breaks = []
    cur, j = d, best_j
    while j > 0:
        cur = int(back[j, cur])
        breaks.append(cur)
        j -= 1
    excluded = np.array([b - 1 for b in breaks], dtype=int)
    return np.setdiff1d(np.arange(p), excluded)


def fused_lasso_optimal_select(z, l):
    """Optimal cosupport for the fused-lasso operator by dynamic programming.

    The analysis coefficients of a candidate v are its d-1 differences plus
    its d entries, so a budget k = p - l buys k1 change points plus the total
    length of the nonzero blocks. The table I[k, L, w, k1] is the optimal
    cost of approximating z[:L] spending exactly budget k with k1 change
    points, the last block zero (w=0) or free (w=1); the reported optimum
    scans all budgets <= k since the cosupport may exceed l rows.
    """
    z = as_vector(z, "z")
    d = z.shape[0]
    p = 2 * d - 1
    if not 0 <= l <= p:
        raise ValueError("l must lie in [0, %d], got %d" % (p, l))
    kmax = p - l
    k1max = min(kmax, d - 1)
    entries = (kmax + 1) * (d + 1) * 2 * (k1max + 1)
    if entries > DP_TABLE_BUDGET:
        raise ValueError("DP table with %d entries exceeds budget; reduce k = p - l"
                         % entries)

    s1 = np.concatenate([[0.0], np.cumsum(z)])
    s2 = np.concatenate([[0.0], np.cumsum(z * z)])

    table = np.full((kmax + 1, d + 1, 2, k1max + 1), np.inf)
    back_n = np.zeros((kmax + 1, d + 1, 2, k1max + 1), dtype=int)
    back_s = np.zeros((kmax + 1, d + 1, 2, k1max + 1), dtype=np.int8)

    # single-block bases: an all-zero prefix consumes no budget, a nonzero
    # prefix of length L consumes exactly L
    for length in range(1, d + 1):
        table[0, length, 0, 0] = s2[length]
        if length <= kmax:
            table[length, length, 1, 0] = \
                (s2[length] - s2[0]) - (s1[length] - s1[0]) ** 2 / length

    n_all = np.arange(d + 1)
    for k1 in range(1, k1max + 1):
        for length in range(2, d + 1):
            n = n_all[1:length]
            tail_sq = s2[length] - s2[n]
            tail_sse = tail_sq - (s1[length] - s1[n]) ** 2 / (length - n)
            for k in range(kmax + 1):
                # last block zero: previous block must be nonzero, change
                # point costs one budget unit
                if k >= 1:
                    cand = tail_sq + table[k - 1, n, 1, k1 - 1]
                    i = int(np.argmin(cand))
                    if cand[i] < np.inf:
                        table[k, length, 0, k1] = cand[i]
                        back_n[k, length, 0, k1] = n[i]
                        back_s[k, length, 0, k1] = 1
                # last block nonzero: length - n budget for its entries plus
                # one for the change point
                kb = k - (length - n) - 1
                valid = kb >= 0
                if np.any(valid):
                    nv = n[valid]
                    kbv = kb[valid]
                    tv = tail_sse[valid]
                    c0 = tv + table[kbv, nv, 0, k1 - 1]
                    c1 = tv + table[kbv, nv, 1, k1 - 1]
                    cbest = np.minimum(c0, c1)
                    i = int(np.argmin(cbest))
                    if cbest[i] < np.inf:
                        table[k, length, 1, k1] = cbest[i]
                        back_n[k, length, 1, k1] = nv[i]
                        back_s[k, length, 1, k1] = 0 if c0[i] <= c1[i] else 1

    best = (np.inf, 0, 0, 0)
    for k in range(kmax + 1):
        for w in (0, 1):
            for k1 in range(k1max + 1):
                if table[k, d, w, k1] < best[0]:
                    best = (table[k, d, w, k1], k, w, k1)
    _, k, w, k1 = best

    blocks = []
    length = d
    while k1 > 0:
        n = int(back_n[k, length, w, k1])
        s_prev = int(back_s[k, length, w, k1])
        blocks.append((n, length, w))
        k = k - 1 if w == 0 else k - (length - n) - 1
        length, w, k1 = n, s_prev, k1 - 1
    blocks.append((0, length, w))
    blocks.reverse()

    starts = [b[0] for b in blocks[1:]]
    diff_rows = np.setdiff1d(np.arange(d - 1), np.array(starts, dtype=int) - 1)
    zero_rows = []
    for a, b, s in blocks:
        if s == 0:
            zero_rows.extend(range(d - 1 + a, d - 1 + b))
    return np.sort(np.concatenate([diff_rows, np.array(zero_rows, dtype=int)]))


def projection_error(omega, cosupport, z):
    """Euclidean distance from z to its projection for the given cosupport."""
    v = project(omega, cosupport, z)
    return float(np.linalg.norm(z - v))


def empirical_near_optimality(omega, scheme, l, trials, seed,
                              signal_generator=None):
    """Worst observed ratio of a scheme's squared projection error to the
    exhaustive optimum, over seeded random trials.

    This is a lower bound on the scheme's true near-optimality constant.
    Trials where z is already l-cosparse (zero optimal error) are skipped;
    returns NaN if every trial degenerates.
    """
    rng = np.random.default_rng(seed)
    worst = np.nan
    for _ in range(trials):
        if signal_generator is not None:
            z = np.asarray(signal_generator(rng), dtype=float)
        else:
            z = rng.standard_normal(omega.d)
        opt = exhaustive_optimal_select(omega, z, l)
        denom = projection_error(omega, opt, z) ** 2
        if denom <= 1e-15 * float(z @ z):
            continue
        sel = scheme.select(omega, z, l)
        ratio = projection_error(omega, sel, z) ** 2 / denom
        if np.isnan(worst) or ratio > worst:
            worst = ratio
    return worst
