"""Restricted-isometry estimation and recovery-guarantee calculators.

How well a measurement matrix preserves the geometry of the union of
cosupport-constrained subspaces is summarized by a single deviation
constant. This module estimates that constant (exhaustively or by
sampling), evaluates the closed-form sample-count bounds that predict
when random matrices achieve it, and computes the convergence and
stability constants of each solver variant together with their
feasibility conditions.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .linalg import as_matrix, complement_projector
from .operators import corank as cosupport_rank

SUBSET_BUDGET = 2_000_000


@dataclass(frozen=True)
class RipEstimate:
    """Deviation constant of a measurement matrix over a subspace family.

    ``level`` is the cosparsity (or, in corank mode, the rank) indexing the
    family. Sampled estimates only visit a subset of the family, so they are
    lower bounds on the true constant and are flagged as such.
    """

    level: int
    delta: float
    mode: str                 # "exhaustive" | "sampled"
    corank_mode: bool = False
    trials: int = None
    seed: int = None
    is_lower_bound: bool = False

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.mode not in ("exhaustive", "sampled"):
            raise ValueError("unknown estimate mode: %r" % self.mode)


def _null_space_basis(omega, cosupport, rank_tol=1e-10):
    rows = omega.row_submatrix(np.asarray(cosupport, dtype=int))
    proj = complement_projector(rows, rank_tol)
    if proj.complement:
        # empty constraint stack: the subspace is the whole space
        return np.eye(omega.d)
    return proj.basis


def cosupport_deviation(M, omega, cosupport, gram_deviation=None):
    """Worst relative distortion of ||Mv|| over the subspace annihilated by
    the given operator rows.

    Computed as the largest-magnitude eigenvalue of the Gram deviation
    M^T M - I restricted to an orthonormal basis of that subspace, which
    equals the spectral norm of the doubly projected deviation.
    """
    if gram_deviation is None:
        dense = as_matrix(M, "M")
        gram_deviation = dense.T @ dense - np.eye(dense.shape[1])
    basis = _null_space_basis(omega, cosupport)
    if basis.shape[1] == 0:
        return 0.0
    restricted = basis.T @ gram_deviation @ basis
    restricted = 0.5 * (restricted + restricted.T)
    return float(np.max(np.abs(np.linalg.eigvalsh(restricted))))


def _max_deviation(gram_deviation, omega, subsets):
    best = 0.0
    for sub in subsets:
        best = max(best, cosupport_deviation(None, omega, sub,
                                             gram_deviation=gram_deviation))
    return best


def omega_rip_exhaustive(M, omega, l, corank_mode=False, workers=1,
                         budget=SUBSET_BUDGET):
    """Exact deviation constant by enumerating every relevant cosupport.

    In the default mode the family is all size-l cosupports (supersets are
    covered by monotonicity). In corank mode ``l`` is a rank target and the
    family is all size-l row subsets whose rows are linearly independent;
    subsets of lower rank span the same subspaces as smaller independent
    ones, so they are skipped.
    """
    dense = as_matrix(M, "M")
    if dense.shape[1] != omega.d:
        raise ValueError("M has %d columns but the operator acts on R^%d"
                         % (dense.shape[1], omega.d))
    if not 0 <= l <= omega.p:
        raise ValueError("level must lie in [0, %d], got %d" % (omega.p, l))
    n_subsets = math.comb(omega.p, l)
    if n_subsets > budget:
        raise ValueError(
            "enumerating %d cosupports exceeds the budget of %d; "
            "use omega_rip_sampled instead" % (n_subsets, budget))
    gram_deviation = dense.T @ dense - np.eye(omega.d)
    subsets = combinations(range(omega.p), l)
    if corank_mode:
        subsets = (s for s in subsets
                   if cosupport_rank(omega, np.asarray(s, dtype=int)) == l)
    workers = max(1, int(workers))
    if workers == 1:
        delta = _max_deviation(gram_deviation, omega, subsets)
    else:
        chunks = [[] for _ in range(workers)]
        for i, sub in enumerate(subsets):
            chunks[i % workers].append(sub)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partial = pool.map(
                lambda ch: _max_deviation(gram_deviation, omega, ch), chunks)
            delta = max(partial)
    return RipEstimate(level=l, delta=delta, mode="exhaustive",
                       corank_mode=bool(corank_mode))


def omega_rip_sampled(M, omega, l, trials, seed):
    """Lower bound on the deviation constant from random size-l cosupports.

    Cosupports are prefixes of seeded permutations, so runs sharing a seed
    use nested subspace families across different levels: the estimate at a
    smaller level dominates the estimate at a larger one.
    """
    dense = as_matrix(M, "M")
    if not 0 <= l <= omega.p:
        raise ValueError("level must lie in [0, %d], got %d" % (omega.p, l))
    if trials < 0:
        raise ValueError("trials must be nonnegative")
    gram_deviation = dense.T @ dense - np.eye(omega.d)
    rng = np.random.default_rng(seed)
    delta = 0.0
    for _ in range(trials):
        cosupport = np.sort(rng.permutation(omega.p)[:l])
        delta = max(delta, cosupport_deviation(
            None, omega, cosupport, gram_deviation=gram_deviation))
    return RipEstimate(level=l, delta=delta, mode="sampled", trials=trials,
                       seed=seed, is_lower_bound=True)


# ---------------------------------------------------------------------------
# sample-count bounds for random Gaussian-like measurements

def sample_bound_cosparsity(eps, l, p, C_M=1.0, t=1.0):
    """Measurement count sufficient for deviation <= eps over all
    cosparsity-l subspaces, with failure probability at most exp(-t)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not 0 <= l <= p:
        raise ValueError("l must lie in [0, %d]" % p)
    if not C_M > 0:
        raise ValueError("C_M must be positive")
    lead = 32.0 / (C_M * eps * eps)
    if l == p:
        rhs = lead * t
    else:
        rhs = lead * ((p - l) * math.log(9.0 * p / ((p - l) * eps)) + t)
    return max(0, math.ceil(rhs))


def sample_bound_corank(eps, r, d, subspace_count, C_M=1.0, t=1.0):
    """Measurement count sufficient for deviation <= eps over a family of
    ``subspace_count`` rank-r constraint sets, failure probability exp(-t)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not 0 <= r <= d:
        raise ValueError("r must lie in [0, %d]" % d)
    if subspace_count < 1:
        raise ValueError("subspace_count must be at least 1")
    if not C_M > 0:
        raise ValueError("C_M must be positive")
    rhs = (32.0 / (C_M * eps * eps)) * (
        math.log(subspace_count) + (d - r) * math.log(9.0 / eps) + t)
    return max(0, math.ceil(rhs))


def general_position_corank_count(p, r):
    """Number of distinct rank-r constraint sets when every r rows of the
    operator are linearly independent: all size-r row subsets qualify."""
    if not 0 <= r <= p:
        raise ValueError("r must lie in [0, %d]" % p)
    return math.comb(p, r)


# ---------------------------------------------------------------------------
# guarantee reports

def _fmt_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "%.12g" % v
    return str(v)


@dataclass
class GuaranteeReport:
    """Constants and feasibility flags of a solver's recovery guarantee.

    ``constants`` holds every derived quantity; ``conditions`` holds the
    named feasibility inequalities. The report is intentionally flat so it
    serializes as plain key=value text for the command line.
    """

    algorithm: str
    inputs: dict
    constants: dict
    conditions: dict
    notes: tuple = ()

    @property
    def feasible(self):
        return all(bool(v) for v in self.conditions.values())

    def items(self):
        yield "algorithm", self.algorithm
        for k in sorted(self.inputs):
            yield "input." + k, self.inputs[k]
        for k in sorted(self.constants):
            yield "constant." + k, self.constants[k]
        for k in sorted(self.conditions):
            yield "condition." + k, self.conditions[k]
        yield "feasible", self.feasible
        for i, note in enumerate(self.notes):
            yield "note.%d" % i, note

    def format_text(self):
        return "\n".join("%s = %s" % (k, _fmt_value(v)) for k, v in self.items())


def _check_delta(name, value):
    if not 0 <= value < 1:
        raise ValueError("%s must lie in [0, 1), got %r" % (name, value))
    return float(value)


def aiht_report(C_l, sigma_sq, delta_2lp, eta, mu=None, y_norm=None,
                e_norm=None):
    """Guarantee constants for the hard-thresholding solver pair.

    ``mu=None`` selects the optimal-step analysis, which substitutes the
    best constant step 1/(1+delta) and drops the explicit step-interval
    membership checks. ``eta`` trades feasibility against noise
    amplification. When ``y_norm`` and ``e_norm`` are supplied the report
    includes the iteration count after which the error bound holds.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    if not C_l >= 1:
        raise ValueError("C_l must be at least 1")
    if not sigma_sq > 0:
        raise ValueError("sigma_sq must be positive")
    delta = _check_delta("delta_2lp", delta_2lp)

    b1 = eta / (1.0 + eta)
    ratio = (C_l - 1.0) * sigma_sq / (C_l * (1.0 - delta))
    b2 = ratio * b1 * b1
    cond_ratio = ratio < 1.0
    if cond_ratio:
        inv_step_max = (1.0 + math.sqrt(1.0 - ratio)) * b1 * (1.0 - delta)
    else:
        inv_step_max = float("nan")
    inv_step_min = 1.0 + delta

    optimal_step = mu is None
    mu_used = 1.0 / (1.0 + delta) if optimal_step else float(mu)
    if not mu_used > 0:
        raise ValueError("mu must be positive")
    inv_mu = 1.0 / mu_used

    conditions = {"gram_ratio_below_one": cond_ratio,
                  "step_interval_nonempty": cond_ratio
                  and inv_step_min < inv_step_max}
    if optimal_step:
        # the substituted step sits at the interval's lower endpoint, so
        # membership reduces to the interval being nonempty
        conditions["step_within_interval"] = conditions["step_interval_nonempty"]
    else:
        conditions["step_within_interval"] = (
            cond_ratio and inv_step_min <= inv_mu < inv_step_max)
        conditions["step_below_spectral_bound"] = inv_mu <= sigma_sq

    c4 = ((1.0 + 1.0 / eta) ** 2 * (inv_mu / (1.0 - delta) - 1.0) * C_l
          + (C_l - 1.0) * (mu_used * sigma_sq - 1.0) + C_l / eta ** 2)
    conditions["contraction_below_one"] = c4 < 1.0

    constants = {
        "b1": b1,
        "b2": b2,
        "gram_ratio": ratio,
        "inv_step_min": inv_step_min,
        "inv_step_max": inv_step_max,
        "mu": mu_used,
        "contraction": c4,
        "error_coefficient": (1.0 + eta) / math.sqrt(1.0 - delta),
    }
    notes = ()
    if y_norm is not None and e_norm is not None:
        constants["iterations_needed"] = _aiht_iterations(
            c4, eta, y_norm, e_norm)
    inputs = {"C_l": float(C_l), "sigma_sq": float(sigma_sq),
              "delta_2lp": delta, "eta": float(eta), "mu": mu_used,
              "step_mode": "optimal" if optimal_step else "constant"}
    return GuaranteeReport(algorithm="aiht/ahtp", inputs=inputs,
                           constants=constants, conditions=conditions,
                           notes=notes)


def _aiht_iterations(c4, eta, y_norm, e_norm):
    """Iterations after which the residual bound applies.

    Zero when the initial residual already satisfies it; infinite when the
    per-iteration contraction fails.
    """
    if e_norm < 0 or y_norm < 0:
        raise ValueError("norms must be nonnegative")
    if e_norm == 0.0:
        return float("inf") if y_norm > 0 else 0.0
    if y_norm ** 2 <= eta ** 2 * e_norm ** 2:
        return 0.0
    if not 0.0 < c4 < 1.0:
        return float("inf")
    return math.ceil(math.log(eta ** 2 * e_norm ** 2 / y_norm ** 2)
                     / math.log(c4))


def aiht_delta_boundary(C_l, sigma_sq):
    """Largest deviation constant for which the optimal-step analysis of the
    hard-thresholding pair stays feasible in the noise-tolerance limit.

    For a perfect projection the boundary is exactly 1/3. Otherwise the
    boundary solves (1 + sqrt(1 - r(delta))) (1 - delta) = 1 + delta with
    r(delta) the Gram ratio, found by bisection.
    """
    if not C_l >= 1:
        raise ValueError("C_l must be at least 1")
    if not sigma_sq > 0:
        raise ValueError("sigma_sq must be positive")
    if C_l == 1.0:
        return 1.0 / 3.0

    def margin(delta):
        ratio = (C_l - 1.0) * sigma_sq / (C_l * (1.0 - delta))
        if ratio >= 1.0:
            return -1.0
        return (1.0 + math.sqrt(1.0 - ratio)) * (1.0 - delta) - (1.0 + delta)

    hi_ratio = 1.0 - (C_l - 1.0) * sigma_sq / C_l  # delta where ratio hits 1
    hi = min(hi_ratio, 1.0) - 1e-15
    if hi <= 0 or margin(0.0) <= 0:
        raise ValueError("no feasible deviation range for these constants")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if margin(mid) > 0:
            lo = mid
        else:
            hi = mid
    return lo


def acosamp_report(C_l, C_2lp, sigma_sq, gamma, delta_2lp, delta_3l2p,
                   delta_4l3p, x_norm=None, e_norm=None):
    """Guarantee constants for the matching-pursuit style solver.

    Reports the iterate contraction factor, the noise amplification, the
    named feasibility inequalities, and (when signal and noise norms are
    supplied) the iteration count and total error coefficient of the
    stable-recovery bound.
    """
    if not C_l >= 1 or not C_2lp >= 1:
        raise ValueError("projection constants must be at least 1")
    if not sigma_sq > 0:
        raise ValueError("sigma_sq must be positive")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    d2 = _check_delta("delta_2lp", delta_2lp)
    d3 = _check_delta("delta_3l2p", delta_3l2p)
    d4 = _check_delta("delta_4l3p", delta_4l3p)

    C_S = max(C_l, C_2lp)
    gain_budget = (1.0 + C_S) * (
        1.0 - (C_S / (1.0 + gamma) ** 2 - (C_S - 1.0) * sigma_sq))
    conditions = {"projection_gain_budget": gain_budget < 1.0}

    zeta = (C_2lp / (1.0 + gamma) ** 2 * (1.0 - math.sqrt(d2)) ** 2
            - (C_2lp - 1.0) * (1.0 + d2) * sigma_sq)
    notes = []
    conditions["shrink_radicand_positive"] = zeta > 0.0
    if zeta <= 0.0:
        notes.append("infeasible: C/(1+gamma)^2 (1-sqrt(delta_2lp))^2 must "
                     "exceed (C-1)(1+delta_2lp) sigma_sq")
    conditions["shrink_exceeds_expansion"] = zeta > d4
    if 0.0 < zeta <= d4:
        notes.append("infeasible: sqrt(delta_4l3p) must stay below the "
                     "shrink radicand's square root")

    rho1_sq = (1.0 + 2.0 * d4 * math.sqrt(C_l) + C_l) / (1.0 - d4 ** 2)
    rho1 = math.sqrt(rho1_sq)
    eta1 = (math.sqrt((2.0 + C_l) / (1.0 + C_l) + 2.0 * math.sqrt(C_l) + C_l)
            * math.sqrt(1.0 + d3) / (1.0 - d4))

    if zeta > d4:
        sqrt_zeta = math.sqrt(zeta)
        alpha = math.sqrt(d4) / (sqrt_zeta - math.sqrt(d4))
        rho2_sq = 1.0 - (math.sqrt(d4) - sqrt_zeta) ** 2
        eta2_sq = ((1.0 + d3) / (gamma * (1.0 + alpha))
                   + (1.0 + d2) * C_2lp / (gamma * (1.0 + alpha) * (1.0 + gamma))
                   + ((C_2lp - 1.0) * (1.0 + gamma) * sigma_sq
                      / ((1.0 + alpha) * (1.0 + gamma) * gamma)))
        conditions["shrink_factor_positive"] = rho2_sq > 0.0
        if rho2_sq <= 0.0:
            notes.append("infeasible: (sqrt(delta_4l3p) - sqrt(zeta))^2 "
                         "must stay below 1")
            rho2 = eta2 = float("nan")
        else:
            rho2 = math.sqrt(rho2_sq)
            eta2 = math.sqrt(eta2_sq)
    else:
        alpha = rho2 = eta2 = rho2_sq = float("nan")
        conditions["shrink_factor_positive"] = False

    contraction = rho1 * rho2 if math.isfinite(rho2) else float("nan")
    noise_coefficient = (eta1 + rho1 * eta2) if math.isfinite(eta2) else float("nan")
    conditions["contraction_below_one"] = (
        math.isfinite(contraction) and contraction ** 2 < 1.0)

    constants = {
        "eta1": eta1,
        "eta2": eta2,
        "rho1": rho1,
        "rho2": rho2,
        "alpha": alpha,
        "contraction": contraction,
        "noise_coefficient": noise_coefficient,
    }
    if conditions["contraction_below_one"]:
        constants["error_coefficient"] = (
            1.0 + noise_coefficient / (1.0 - contraction))
    else:
        constants["error_coefficient"] = float("nan")
    if x_norm is not None and e_norm is not None:
        t_star, total = _pursuit_iterations(contraction, noise_coefficient,
                                            x_norm, e_norm)
        constants["iterations_needed"] = t_star
        constants["total_error_coefficient"] = total
    inputs = {"C_l": float(C_l), "C_2lp": float(C_2lp),
              "sigma_sq": float(sigma_sq), "gamma": float(gamma),
              "delta_2lp": d2, "delta_3l2p": d3, "delta_4l3p": d4}
    return GuaranteeReport(algorithm="acosamp", inputs=inputs,
                           constants=constants, conditions=conditions,
                           notes=tuple(notes))


def _pursuit_iterations(contraction, noise_coefficient, x_norm, e_norm):
    """Iteration count for the stable-recovery bound and the error
    coefficient evaluated at that count."""
    if x_norm < 0 or e_norm < 0:
        raise ValueError("norms must be nonnegative")
    if not (math.isfinite(contraction) and 0.0 < contraction < 1.0):
        return float("inf"), float("nan")
    if e_norm == 0.0:
        return float("inf"), float("nan")
    if x_norm <= e_norm:
        t_star = 0
    else:
        t_star = math.ceil(math.log(x_norm / e_norm)
                           / math.log(1.0 / contraction))
    total = (1.0 + (1.0 - contraction ** t_star) / (1.0 - contraction)
             * noise_coefficient)
    return t_star, total


def asp_report(C_l, C_2lp, sigma_sq, gamma, delta_2lp, delta_3l2p,
               delta_4l3p, x_norm=None, e_norm=None):
    """Guarantee constants for the subspace-pursuit style solver.

    Wraps the matching-pursuit constants: the extra least-squares step
    multiplies the contraction and noise terms by (1+delta)/(1-delta) and
    adds a 2/(1-delta) noise term.
    """
    base = acosamp_report(C_l, C_2lp, sigma_sq, gamma, delta_2lp, delta_3l2p,
                          delta_4l3p)
    d2 = float(delta_2lp)
    blow = (1.0 + d2) / (1.0 - d2)
    contraction = blow * base.constants["contraction"]
    noise_coefficient = (blow * base.constants["noise_coefficient"]
                         + 2.0 / (1.0 - d2))
    conditions = dict(base.conditions)
    conditions["contraction_below_one"] = (
        math.isfinite(contraction) and contraction < 1.0)
    constants = dict(base.constants)
    constants["contraction"] = contraction
    constants["noise_coefficient"] = noise_coefficient
    if conditions["contraction_below_one"]:
        constants["error_coefficient"] = (
            1.0 + noise_coefficient / (1.0 - contraction))
    else:
        constants["error_coefficient"] = float("nan")
    if x_norm is not None and e_norm is not None:
        t_star, total = _pursuit_iterations(contraction, noise_coefficient,
                                            x_norm, e_norm)
        constants["iterations_needed"] = t_star
        constants["total_error_coefficient"] = total
    return GuaranteeReport(algorithm="asp", inputs=dict(base.inputs),
                           constants=constants, conditions=conditions,
                           notes=base.notes)


def _delta_root(C_S, sigma_sq, gamma, quad_extra):
    """Smallest positive root (squared) of the feasibility quadratic in
    sqrt(delta), capped at 1/2."""
    if not C_S >= 1:
        raise ValueError("C_S must be at least 1")
    if not sigma_sq > 0:
        raise ValueError("sigma_sq must be positive")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    shrink = C_S / (1.0 + gamma) ** 2
    a0 = (1.0 + C_S) * (1.0 - shrink + (C_S - 1.0) * sigma_sq) - 1.0
    a1 = 2.0 * (1.0 + C_S) * (1.0 + shrink)
    a2 = ((1.0 + C_S) * (-1.0 - shrink + (C_S - 1.0) * sigma_sq)
          + 2.0 * math.sqrt(C_S) + quad_extra)
    if not a0 < 0.0:
        raise ValueError(
            "no positive feasibility root: the projection constants are too "
            "far from 1 for this noise-tolerance parameter")
    scale = abs(a0) + abs(a1) + 1.0
    if abs(a2) <= 1e-14 * scale:
        root = -a0 / a1
        return min(root * root, 0.5)
    disc = a1 * a1 - 4.0 * a2 * a0
    if disc < 0.0:
        # opens downward with no real root: negative for every delta
        return 0.5
    sqrt_disc = math.sqrt(disc)
    roots = [r for r in ((-a1 - sqrt_disc) / (2.0 * a2),
                         (-a1 + sqrt_disc) / (2.0 * a2)) if r > 0.0]
    if not roots:
        return 0.5
    root = min(roots)
    return min(root * root, 0.5)


def delta_root_acosamp(C_S, sigma_sq, gamma):
    """Feasibility threshold on the largest deviation constant for the
    matching-pursuit style guarantee."""
    return _delta_root(C_S, sigma_sq, gamma, 0.5)


def delta_root_asp(C_S, sigma_sq, gamma):
    """Feasibility threshold for the subspace-pursuit style guarantee;
    strictly tighter than the matching-pursuit one at equal inputs."""
    return _delta_root(C_S, sigma_sq, gamma, 2.0)


def nonexact_bound(report, x, omega, M, l, e_norm=0.0, scheme=None):
    """Recovery-error bound for signals that are only approximately
    cosparse.

    Splits the signal into its best l-cosparse approximation plus a
    remainder, then charges the remainder's direct and measured energy at
    the report's error coefficient.
    """
    from .projections import default_scheme, project

    if e_norm < 0:
        raise ValueError("e_norm must be nonnegative")
    coeff = report.constants.get("error_coefficient", float("nan"))
    if not math.isfinite(coeff):
        raise ValueError("the guarantee report is infeasible; no finite "
                         "error coefficient is available")
    x = np.asarray(x, dtype=float)
    if scheme is None:
        scheme = default_scheme(omega.kind)
    cosupport = scheme.select(omega, x, l)
    x_best = project(omega, cosupport, x)
    tail = x - x_best
    tail_norm = float(np.linalg.norm(tail))
    if hasattr(M, "matvec"):
        measured = M.matvec(tail)
    else:
        measured = M @ tail
    measured_norm = float(np.linalg.norm(measured))
    return tail_norm + coeff * measured_norm + coeff * e_norm
