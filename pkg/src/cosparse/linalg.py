"""Shared linear-algebra primitives.

Orthogonal projectors onto constraint null spaces, least squares restricted
to those subspaces, and a power-iteration estimate of the largest singular
value. Everything here is deterministic: fixed start vectors, no randomized
ranges, so repeated runs give identical floats.
"""

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg


def as_vector(x, name="x"):
    """Validate and return a finite 1-D float array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError("%s must be one-dimensional, got shape %s" % (name, (arr.shape,)))
    if not np.all(np.isfinite(arr)):
        raise ValueError("%s contains NaN or Inf entries" % name)
    return arr


def as_matrix(a, name="matrix"):
    """Validate and return a finite 2-D float array."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise ValueError("%s must be two-dimensional, got shape %s" % (name, (arr.shape,)))
    if not np.all(np.isfinite(arr)):
        raise ValueError("%s contains NaN or Inf entries" % name)
    return arr


def _matvec(M, x):
    if hasattr(M, "matvec"):
        return M.matvec(x)
    return M @ x


def _rmatvec(M, y):
    if hasattr(M, "rmatvec"):
        return M.rmatvec(y)
    return M.T @ y


class SubspaceProjector:
    """Orthogonal projector stored through an orthonormal basis.

    With ``complement=False`` the map is z -> B B^T z, the projection onto
    span(B). With ``complement=True`` it is z -> z - B B^T z, the projection
    onto the orthogonal complement of span(B). The second form lets an
    identity projector be represented with an empty basis.
    """

    def __init__(self, basis, complement=False):
        basis = np.asarray(basis, dtype=float)
        if basis.ndim != 2:
            raise ValueError("basis must be a 2-D array of column vectors")
        if basis.shape[1] > 0:
            gram = basis.T @ basis
            if np.max(np.abs(gram - np.eye(basis.shape[1]))) > 1e-8:
                raise ValueError("basis columns are not orthonormal")
        self.basis = basis
        self.complement = bool(complement)
        self.dimension = basis.shape[0]

    def apply(self, z):
        z = np.asarray(z, dtype=float)
        proj = self.basis @ (self.basis.T @ z)
        return z - proj if self.complement else proj

    __call__ = apply

    @property
    def subspace_dim(self):
        """Dimension of the subspace this projector maps onto."""
        ncols = self.basis.shape[1]
        return self.dimension - ncols if self.complement else ncols

    def matrix(self):
        """Materialize the projector as a dense d x d matrix."""
        gram = self.basis @ self.basis.T
        if self.complement:
            return np.eye(self.dimension) - gram
        return gram


def largest_singular_value(M, tol=1e-10, max_iter=1000):
    """Largest singular value via power iteration on the Gram operator.

    Starts from the all-ones vector for reproducibility; if that start lies
    in the null space the iteration falls back to coordinate vectors. A zero
    matrix returns 0.0. Raises RuntimeError if the Rayleigh quotient has not
    settled to relative tolerance ``tol`` within ``max_iter`` sweeps.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    m, n = M.shape
    starts = [np.ones(n) / np.sqrt(n)]
    starts.extend(np.eye(n)[i] for i in range(n))
    v = None
    for cand in starts:
        if np.linalg.norm(_matvec(M, cand)) > 0:
            v = cand
            break
    if v is None:
        return 0.0
    v = v / np.linalg.norm(v)
    sigma_sq = 0.0
    for _ in range(max_iter):
        w = _rmatvec(M, _matvec(M, v))
        new_sigma_sq = float(v @ w)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            # iterate fell into the null space; the current estimate is exact
            return float(np.sqrt(max(new_sigma_sq, 0.0)))
        v = w / norm_w
        if abs(new_sigma_sq - sigma_sq) <= tol * max(new_sigma_sq, 1e-300):
            return float(np.sqrt(new_sigma_sq))
        sigma_sq = new_sigma_sq
    raise RuntimeError(
        "power iteration did not converge within %d iterations" % max_iter
    )


def complement_projector(omega_rows, rank_tol=1e-10):
    """Projector onto the null space of a stack of constraint rows.

    The row space is identified by SVD; singular values below
    ``rank_tol * sigma_max`` are treated as zero, so linearly dependent rows
    are handled. An empty stack yields the identity projector.
    """
    rows = np.asarray(omega_rows, dtype=float)
    if rows.ndim != 2:
        raise ValueError("omega_rows must be 2-D (rows x signal dimension)")
    q, d = rows.shape
    if q == 0:
        return SubspaceProjector(np.zeros((d, 0)), complement=True)
    _, s, vt = np.linalg.svd(rows, full_matrices=True)
    cutoff = rank_tol * s[0] if s.size else 0.0
    rank = int(np.sum(s > cutoff))
    return SubspaceProjector(vt[rank:].T)


@dataclass
class LeastSquaresResult:
    """Solution of a constrained or penalized least-squares problem.

    ``stagnated`` flags a conjugate-gradient run that hit its iteration cap
    before reaching the requested residual; the best iterate is still
    returned in ``x``.
    """

    x: np.ndarray
    iterations: int
    residual: float
    converged: bool
    stagnated: bool


def _run_cg(apply_op, b, x0, tol, max_iter):
    n = b.shape[0]
    op = LinearOperator((n, n), matvec=apply_op, dtype=float)
    count = {"it": 0}

    def _cb(_):
        count["it"] += 1

    try:
        x, info = cg(op, b, x0=x0, rtol=tol, atol=0.0, maxiter=max_iter, callback=_cb)
    except TypeError:  # older scipy spells the relative tolerance `tol`
        x, info = cg(op, b, x0=x0, tol=tol, atol=0.0, maxiter=max_iter, callback=_cb)
    resid = float(np.linalg.norm(b - apply_op(x)))
    return x, count["it"], resid, info == 0


def constrained_least_squares(M, y, omega_rows=None, tol=1e-8, max_iter=None,
                              projector=None):
    """Minimize ||y - M x|| subject to the constraint rows annihilating x.

    Solved by conjugate gradients on the normal equations restricted to the
    feasible subspace: the operator is v -> Q M^T M Q v with Q the projector
    onto {x : omega_rows @ x = 0}. Pass ``projector`` (any callable z -> Qz)
    to skip the SVD construction; structured operators supply closed forms.

    The normal-equation residual of the returned point is at most
    ``tol * ||Q M^T y||`` unless CG stagnated, in which case the result
    carries ``stagnated=True`` and the best iterate found.
    """
    y = as_vector(y, "y")
    if projector is None:
        if omega_rows is None:
            raise ValueError("either omega_rows or projector is required")
        rows = np.asarray(omega_rows, dtype=float)
        if rows.ndim != 2:
            raise ValueError("omega_rows must be 2-D")
        projector = complement_projector(rows)
    q_apply = projector.apply if hasattr(projector, "apply") else projector

    b = q_apply(_rmatvec(M, y))
    d = b.shape[0]
    if max_iter is None:
        max_iter = min(10 * d, 2000)

    def apply_op(v):
        return q_apply(_rmatvec(M, _matvec(M, q_apply(v))))

    x, iters, resid, ok = _run_cg(apply_op, b, np.zeros(d), tol, max_iter)
    x = q_apply(x)  # keep the iterate exactly feasible
    return LeastSquaresResult(x=x, iterations=iters, residual=resid,
                              converged=ok, stagnated=not ok)


def penalized_least_squares(M, y, constraint_apply, constraint_adjoint, lam,
                            tol=1e-8, max_iter=None, x0=None):
    """Minimize ||y - M x||^2 + lam * ||A x||^2 for a constraint map A.

    Conjugate gradients on (M^T M + lam A^T A) x = M^T y. ``constraint_apply``
    and ``constraint_adjoint`` implement A and A^T; a warm start ``x0`` is
    accepted since iterative solvers call this repeatedly.
    """
    y = np.asarray(y, dtype=float)
    if lam <= 0:
        raise ValueError("penalty weight must be positive")
    b = _rmatvec(M, y)
    d = b.shape[0]
    if max_iter is None:
        max_iter = min(10 * d, 2000)
    if x0 is None:
        x0 = np.zeros(d)

    def apply_op(v):
        return _rmatvec(M, _matvec(M, v)) + lam * constraint_adjoint(constraint_apply(v))

    x, iters, resid, ok = _run_cg(apply_op, b, x0, tol, max_iter)
    return LeastSquaresResult(x=x, iterations=iters, residual=resid,
                              converged=ok, stagnated=not ok)
