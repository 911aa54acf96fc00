"""Greedy-like pursuit solvers for the cosparse analysis model.

Four solvers share the same skeleton: alternate cosupport selection with a
projection or least-squares update. The iterative-thresholding pair updates
through a gradient step; the matching-pursuit pair grows a candidate
cosupport from the residual correlation, solves restricted least squares,
then prunes. Each has a relaxed variant that trades the hard constraint
"selected analysis rows are zero" for a quadratic penalty, which is what
makes large problems (partial Fourier) tractable.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import (_matvec, _rmatvec, complement_projector,
                     constrained_least_squares, penalized_least_squares)
from .operators import cosupport_of, smallest_coefficients_cosupport
from .projections import ProjectionScheme, default_scheme, project

HARD_VARIANTS = ("aiht", "ahtp", "acosamp", "asp")
RELAXED_VARIANTS = ("rahtp", "racosamp", "rasp")
VARIANTS = HARD_VARIANTS + RELAXED_VARIANTS

DIVERGENCE_FACTOR = 1e12


class DivergenceError(RuntimeError):
    """Raised when the residual blows past the divergence guard."""


@dataclass
class MeasurementProblem:
    """An inverse problem y = M x + e.

    M may be a dense array or any object with matvec/rmatvec/shape. x_true
    and noise are optional bookkeeping for experiments.
    """

    M: object
    y: np.ndarray
    x_true: np.ndarray = None
    noise: np.ndarray = None


@dataclass
class SolverConfig:
    variant: str = None          # None = bound by the solver entry point
    step_rule: str = "adaptive"  # constant | optimal | adaptive
    mu: float = 1.0              # step size when step_rule=constant
    a_fraction: object = 1.0     # cosupport expansion factor, or "auto"
    lam: float = 1e3             # penalty weight for relaxed variants
    max_iters: int = 500
    stop: str = "default"        # default | residual_tol | relative_change | max_only
    residual_tol: float = 1e-6   # relative to ||y||
    change_tol: float = 1e-6     # relative residual change
    scheme: ProjectionScheme = None  # None = auto per operator kind
    ls_tol: float = 1e-8
    ls_max_iter: int = None

    def validate(self):
        if self.variant is not None and self.variant not in VARIANTS:
            raise ValueError("unknown solver variant: %r" % self.variant)
        if self.step_rule not in ("constant", "optimal", "adaptive"):
            raise ValueError("unknown step rule: %r" % self.step_rule)
        if self.step_rule == "constant" and not self.mu > 0:
            raise ValueError("constant step size must be positive")
        if self.a_fraction != "auto":
            a = float(self.a_fraction)
            if not 0 < a <= 1:
                raise ValueError("a_fraction must lie in (0, 1]")
        if self.variant in RELAXED_VARIANTS and not self.lam > 0:
            raise ValueError("penalty weight must be positive for relaxed variants")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class SolverResult:
    x_hat: np.ndarray
    cosupport: np.ndarray
    iterations: int
    residual_history: list
    converged: bool
    warnings: list = field(default_factory=list)


@dataclass
class StepState:
    """Inputs the step-size rules need at the top of an iteration."""

    M: object
    y: np.ndarray
    omega: object
    l: int
    scheme: ProjectionScheme
    x_prev: np.ndarray
    gradient: np.ndarray
    cosupport_prev: np.ndarray
    mu_constant: float = 1.0
    mu_max: float = 4.0
    eval_budget: int = 40


def step_size(rule, state):
    """Step size for the gradient step, per the configured rule.

    Returns (mu, warning-or-None). The adaptive rule restricts the gradient
    to the rows selected on it intersected with the previous cosupport and
    minimizes the residual along that direction in closed form; the optimal
    rule line-searches the full selection-then-projection objective.
    """
    if rule == "constant":
        return float(state.mu_constant), None
    if rule == "adaptive":
        sel = state.scheme.select(state.omega, state.gradient, state.l)
        lam_tilde = np.intersect1d(sel, state.cosupport_prev)
        qg = project(state.omega, lam_tilde, state.gradient)
        mqg = _matvec(state.M, qg)
        denom = float(mqg @ mqg)
        if denom == 0.0:
            return 0.0, "adaptive step stagnated: restricted gradient is in the null space of M"
        return float(qg @ qg) / denom, None
    if rule == "optimal":
        return _optimal_step(state), None
    raise ValueError("unknown step rule: %r" % rule)


def _optimal_step(state):
    # coarse grid then golden-section refinement; the objective re-runs
    # selection + projection per candidate, so it is only piecewise smooth
    def objective(mu):
        xg = state.x_prev + mu * state.gradient
        lam = state.scheme.select(state.omega, xg, state.l)
        xc = project(state.omega, lam, xg)
        r = state.y - _matvec(state.M, xc)
        return float(r @ r)

    n_grid = max(state.eval_budget - 15, 2)
    grid = np.linspace(state.mu_max / n_grid, state.mu_max, n_grid)
    vals = [objective(m) for m in grid]
    i = int(np.argmin(vals))
    best_mu, best_val = float(grid[i]), vals[i]
    lo = grid[i - 1] if i > 0 else grid[0] / 2.0
    hi = grid[i + 1] if i < n_grid - 1 else grid[-1]
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c = b - phi * (b - a)
    dpt = a + phi * (b - a)
    fc, fd = objective(c), objective(dpt)
    for _ in range(13):
        if fc < fd:
            b, dpt, fd = dpt, c, fc
            c = b - phi * (b - a)
            fc = objective(c)
            if fc < best_val:
                best_mu, best_val = c, fc
        else:
            a, c, fc = c, dpt, fd
            dpt = a + phi * (b - a)
            fd = objective(dpt)
            if fd < best_val:
                best_mu, best_val = dpt, fd
    return float(best_mu)


def _cosupport_projector(omega, rows):
    # structured kinds have cheap closed-form projections; dense kinds need
    # an SVD, so build that projector once instead of per application
    if omega.kind in ("identity", "dif-1d", "fused-lasso", "dif-2d", "unitary"):
        def q_apply(z):
            return project(omega, rows, z)
        return q_apply
    rows = np.unique(np.asarray(rows, dtype=int))
    if rows.size == 0:
        return lambda z: z.copy()
    return complement_projector(omega.row_submatrix(rows)).apply


def _masked_constraint(omega, rows):
    mask = np.zeros(omega.p)
    mask[np.asarray(rows, dtype=int)] = 1.0

    def c_apply(v):
        return omega.apply(v) * mask

    def c_adjoint(u):
        return omega.adjoint(u * mask)

    return c_apply, c_adjoint


def _restricted_lstsq(M, y, omega, rows, cfg, warnings):
    """argmin ||y - Mx|| with the selected analysis rows forced to zero
    (hard constraint), or penalized by cfg.lam for relaxed variants."""
    if cfg.variant in RELAXED_VARIANTS:
        c_apply, c_adjoint = _masked_constraint(omega, rows)
        res = penalized_least_squares(M, y, c_apply, c_adjoint, cfg.lam,
                                      tol=cfg.ls_tol, max_iter=cfg.ls_max_iter)
    else:
        res = constrained_least_squares(
            M, y, projector=_cosupport_projector(omega, rows),
            tol=cfg.ls_tol, max_iter=cfg.ls_max_iter)
    if res.stagnated:
        warnings.append("inner least-squares stagnated (residual %.3e after %d iterations)"
                        % (res.residual, res.iterations))
    return res.x


def _should_stop(cfg, r_prev, r_new, y_norm):
    res_ok = r_new <= cfg.residual_tol * y_norm
    change_ok = abs(r_prev - r_new) <= cfg.change_tol * max(r_prev, 1e-300)
    if cfg.stop == "default":
        return res_ok or change_ok
    if cfg.stop == "residual_tol":
        return res_ok
    if cfg.stop == "relative_change":
        return change_ok
    if cfg.stop == "max_only":
        return False
    raise ValueError("unknown stop rule: %r" % cfg.stop)


def _check_divergence(r_new, y_norm, variant):
    if r_new > DIVERGENCE_FACTOR * max(y_norm, 1e-300):
        raise DivergenceError(
            "%s diverged: residual %.3e exceeds %g x ||y||; "
            "step size too large" % (variant, r_new, DIVERGENCE_FACTOR))


def _resolve(problem, omega, l, cfg):
    cfg.validate()
    y = np.asarray(problem.y, dtype=float)
    scheme = cfg.scheme if cfg.scheme is not None else default_scheme(omega.kind)
    if not 0 <= l <= omega.p:
        raise ValueError("target cosparsity must lie in [0, %d]" % omega.p)
    return problem.M, y, scheme


def _iht_family(problem, omega, l, cfg, hard_projection):
    M, y, scheme = _resolve(problem, omega, l, cfg)
    y_norm = float(np.linalg.norm(y))
    x = np.zeros(omega.d)
    cosupport = np.arange(omega.p)  # the zero vector annihilates every row
    residuals = [y_norm]
    warnings = []
    converged = False
    iterations = 0
    for _ in range(cfg.max_iters):
        iterations += 1
        resid_vec = y - _matvec(M, x)
        g = _rmatvec(M, resid_vec)
        state = StepState(M=M, y=y, omega=omega, l=l, scheme=scheme,
                          x_prev=x, gradient=g, cosupport_prev=cosupport,
                          mu_constant=cfg.mu)
        mu, warn = step_size(cfg.step_rule, state)
        if warn:
            warnings.append(warn)
        x_g = x + mu * g
        cosupport = scheme.select(omega, x_g, l)
        if hard_projection:
            x = project(omega, cosupport, x_g)
        else:
            x = _restricted_lstsq(M, y, omega, cosupport, cfg, warnings)
        r_new = float(np.linalg.norm(y - _matvec(M, x)))
        _check_divergence(r_new, y_norm, cfg.variant)
        r_prev = residuals[-1]
        residuals.append(r_new)
        if _should_stop(cfg, r_prev, r_new, y_norm):
            converged = True
            break
    return SolverResult(x_hat=x, cosupport=cosupport, iterations=iterations,
                        residual_history=residuals, converged=converged,
                        warnings=warnings)


def _expansion_count(a_fraction, l, p):
    if a_fraction == "auto":
        target = 2 * l - p  # matches the doubled support expansion at p = d
    else:
        target = float(a_fraction) * l
    return int(min(max(round(target), 1), p))


def _pursuit_family(problem, omega, l, cfg, hard_projection):
    M, y, scheme = _resolve(problem, omega, l, cfg)
    y_norm = float(np.linalg.norm(y))
    x = np.zeros(omega.d)
    cosupport = np.arange(omega.p)
    y_resid = y.copy()
    residuals = [y_norm]
    warnings = []
    converged = False
    iterations = 0
    al = _expansion_count(cfg.a_fraction, l, omega.p)
    for _ in range(cfg.max_iters):
        iterations += 1
        g = _rmatvec(M, y_resid)
        lam_delta = scheme.select(omega, g, al)
        lam_tilde = np.intersect1d(cosupport, lam_delta)
        if lam_tilde.size == 0:
            warnings.append("empty cosupport intersection at iteration %d; "
                            "falling back to the new candidate rows" % iterations)
            lam_tilde = lam_delta
        w = _restricted_lstsq(M, y, omega, lam_tilde, cfg, warnings)
        cosupport = scheme.select(omega, w, l)
        if hard_projection:
            x = project(omega, cosupport, w)
        else:
            x = _restricted_lstsq(M, y, omega, cosupport, cfg, warnings)
        y_resid = y - _matvec(M, x)
        r_new = float(np.linalg.norm(y_resid))
        _check_divergence(r_new, y_norm, cfg.variant)
        r_prev = residuals[-1]
        residuals.append(r_new)
        if _should_stop(cfg, r_prev, r_new, y_norm):
            converged = True
            break
    return SolverResult(x_hat=x, cosupport=cosupport, iterations=iterations,
                        residual_history=residuals, converged=converged,
                        warnings=warnings)


def aiht(problem, omega, l, cfg=None):
    """Iterative hard thresholding, analysis flavor: gradient step, cosupport
    selection, then plain projection onto the selected null space."""
    cfg = _with_variant(cfg, "aiht")
    return _iht_family(problem, omega, l, cfg, hard_projection=True)


def ahtp(problem, omega, l, cfg=None):
    """Hard thresholding pursuit: like aiht but the update solves least
    squares restricted to the selected cosupport (penalized for rahtp)."""
    cfg = _with_variant(cfg, "ahtp", allow={"ahtp", "rahtp"})
    return _iht_family(problem, omega, l, cfg, hard_projection=False)


def acosamp(problem, omega, l, cfg=None):
    """Compressive-sampling-style pursuit: expand the cosupport from the
    residual correlation, solve restricted LS, prune by selection, project."""
    cfg = _with_variant(cfg, "acosamp", allow={"acosamp", "racosamp"})
    return _pursuit_family(problem, omega, l, cfg, hard_projection=True)


def asp(problem, omega, l, cfg=None):
    """Subspace-pursuit flavor: as acosamp but the final per-iteration
    estimate re-solves least squares on the pruned cosupport."""
    cfg = _with_variant(cfg, "asp", allow={"asp", "rasp"})
    return _pursuit_family(problem, omega, l, cfg, hard_projection=False)


def solve(problem, omega, l, cfg):
    """Dispatch on cfg.variant (hard and relaxed names both accepted)."""
    cfg.validate()
    if cfg.variant is None:
        raise ValueError("cfg.variant is required for solve()")
    base = cfg.variant[1:] if cfg.variant in RELAXED_VARIANTS else cfg.variant
    return {"aiht": aiht, "ahtp": ahtp, "acosamp": acosamp, "asp": asp}[base](
        problem, omega, l, cfg)


def _with_variant(cfg, default, allow=None):
    if cfg is None:
        cfg = SolverConfig()
    if allow is None:
        allow = {default}
    if cfg.variant is None:
        cfg.variant = default
    elif cfg.variant not in allow:
        raise ValueError("config variant %r does not match this solver" % cfg.variant)
    return cfg


def targeted_cosparsity(kind, d, m, l):
    """Effective cosparsity to hand a solver so the cosupport constraint can
    identify a unique signal from m measurements.

    kind 'general-position' assumes any d rows are independent; kind 'dif'
    uses the tighter count for difference operators. Raises when the
    measurement budget is too small for any positive target.
    """
    if kind == "general-position":
        if m > d:
            raise ValueError("general-position rule expects m <= d")
        val = min(d - m // 2, l)
    elif kind == "dif":
        arg = 2 * d - m - 1.5
        if arg <= 0:
            raise ValueError("insufficient measurements for the dif rule")
        val = math.ceil(min((-1.0 / math.sqrt(2.0) + math.sqrt(arg)) ** 2, l))
    else:
        raise ValueError("unknown targeted-cosparsity kind: %r" % kind)
    if val <= 0:
        raise ValueError("insufficient measurements: nonpositive target cosparsity")
    return int(val)


# ---------------------------------------------------------------------------
# synthesis references (support-based counterparts used as oracles when the
# analysis operator is the identity or, after conjugation, any unitary)

def _support_select(v, k):
    """Indices of the k largest |entries|: complement of the (d-k)-smallest
    selection so both sides of the equivalence share one tie-break."""
    d = v.shape[0]
    from .operators import make_identity
    cosup = smallest_coefficients_cosupport(make_identity(d), v, d - k)
    return np.setdiff1d(np.arange(d), cosup)


def _mask_projector(d, support):
    keep = np.zeros(d, dtype=bool)
    keep[np.asarray(support, dtype=int)] = True

    def q_apply(z):
        out = z.copy()
        out[~keep] = 0.0
        return out

    return q_apply


def _support_lstsq(M, y, d, support, cfg, warnings):
    res = constrained_least_squares(M, y, projector=_mask_projector(d, support),
                                    tol=cfg.ls_tol, max_iter=cfg.ls_max_iter)
    if res.stagnated:
        warnings.append("inner least-squares stagnated (residual %.3e after %d iterations)"
                        % (res.residual, res.iterations))
    return res.x


def reference_synthesis(variant, y, M, k, cfg=None):
    """Textbook IHT/HTP/CoSaMP/SP on y = Mx with k-sparse x.

    These exist as oracles for the unitary-case equivalence: with the
    identity analysis operator and target cosparsity d - k, each analysis
    solver reproduces its synthesis counterpart iterate for iterate.
    """
    if cfg is None:
        cfg = SolverConfig(variant="aiht", step_rule="constant", mu=1.0)
    variant = variant.lower()
    y = np.asarray(y, dtype=float)
    d = M.shape[1]
    if not 0 <= k <= d:
        raise ValueError("sparsity k must lie in [0, %d]" % d)
    y_norm = float(np.linalg.norm(y))
    warnings = []
    residuals = [y_norm]
    converged = False
    iterations = 0
    x = np.zeros(d)
    if variant in ("iht", "htp"):
        support = np.array([], dtype=int)
        for _ in range(cfg.max_iters):
            iterations += 1
            g = _rmatvec(M, y - _matvec(M, x))
            mu = _synthesis_step(cfg, M, y, x, g, support, k)
            x_g = x + mu * g
            support = _support_select(x_g, k)
            if variant == "iht":
                x = _mask_projector(d, support)(x_g)
            else:
                x = _support_lstsq(M, y, d, support, cfg, warnings)
            r_new = float(np.linalg.norm(y - _matvec(M, x)))
            _check_divergence(r_new, y_norm, variant)
            r_prev = residuals[-1]
            residuals.append(r_new)
            if _should_stop(cfg, r_prev, r_new, y_norm):
                converged = True
                break
    elif variant in ("cosamp", "sp"):
        a = 2 if variant == "cosamp" else 1
        support = np.array([], dtype=int)
        y_resid = y.copy()
        for _ in range(cfg.max_iters):
            iterations += 1
            g = _rmatvec(M, y_resid)
            t_delta = _support_select(g, min(a * k, d))
            t_union = np.union1d(support, t_delta)
            w = _support_lstsq(M, y, d, t_union, cfg, warnings)
            support = _support_select(w, k)
            if variant == "cosamp":
                x = _mask_projector(d, support)(w)
            else:
                x = _support_lstsq(M, y, d, support, cfg, warnings)
            y_resid = y - _matvec(M, x)
            r_new = float(np.linalg.norm(y_resid))
            _check_divergence(r_new, y_norm, variant)
            r_prev = residuals[-1]
            residuals.append(r_new)
            if _should_stop(cfg, r_prev, r_new, y_norm):
                converged = True
                break
    else:
        raise ValueError("unknown synthesis variant: %r" % variant)
    cosupport = np.setdiff1d(np.arange(d), support)
    return SolverResult(x_hat=x, cosupport=cosupport, iterations=iterations,
                        residual_history=residuals, converged=converged,
                        warnings=warnings)


def _synthesis_step(cfg, M, y, x, g, support_prev, k):
    d = g.shape[0]
    if cfg.step_rule == "constant":
        return float(cfg.mu)
    if cfg.step_rule == "adaptive":
        sel = _support_select(g, k)
        t_tilde = np.union1d(sel, support_prev)
        qg = _mask_projector(d, t_tilde)(g)
        mqg = _matvec(M, qg)
        denom = float(mqg @ mqg)
        if denom == 0.0:
            return 0.0
        return float(qg @ qg) / denom
    # optimal rule through the shared line search on the synthesis objective
    from .operators import make_identity

    state = StepState(M=M, y=y, omega=make_identity(d), l=d - k,
                      scheme=ProjectionScheme("thresholding"), x_prev=x,
                      gradient=g, cosupport_prev=np.setdiff1d(np.arange(d), support_prev),
                      mu_constant=cfg.mu)
    return _optimal_step(state)


def result_record(result, variant, x_true=None):
    """Flat JSON-shaped summary of a solver run."""
    rec = {
        "variant": variant,
        "iterations": int(result.iterations),
        "converged": bool(result.converged),
        "final_residual": float(result.residual_history[-1]),
        "cosupport_size": int(len(result.cosupport)),
        "warnings": list(result.warnings),
    }
    if x_true is not None:
        x_true = np.asarray(x_true, dtype=float)
        denom = float(np.linalg.norm(x_true))
        err = float(np.linalg.norm(result.x_hat - x_true))
        rec["recovery_error"] = err
        rec["relative_error"] = err / denom if denom > 0 else err
    return rec
