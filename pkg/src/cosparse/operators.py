"""Analysis operators and cosupport bookkeeping.

An analysis operator maps a length-d signal to p analysis coefficients; the
model tracks which coefficients are zero (the cosupport). Structured kinds
(finite differences, fused-lasso stack, identity) are applied matrix-free;
dense and unitary kinds carry an explicit payload.
"""

import io

import numpy as np

from .linalg import as_matrix, as_vector

STRUCTURED_KINDS = ("identity", "dif-1d", "dif-2d", "fused-lasso")
DENSE_KINDS = ("dense", "unitary")


class AnalysisOperator:
    """A p x d analysis operator with matrix-free apply/adjoint.

    kind is one of {dense, unitary, identity, dif-1d, dif-2d, fused-lasso}.
    dif-2d operators carry grid_shape=(h, w) and act on raster-flattened
    images (row-major).
    """

    def __init__(self, kind, d, p, matrix=None, grid_shape=None):
        if kind not in STRUCTURED_KINDS + DENSE_KINDS:
            raise ValueError("unknown operator kind: %r" % kind)
        self.kind = kind
        self.d = int(d)
        self.p = int(p)
        self.grid_shape = grid_shape
        self._matrix = matrix

    @property
    def shape(self):
        return (self.p, self.d)

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise ValueError("expected signal of length %d, got %s" % (self.d, x.shape))
        if self.kind == "identity":
            return x.copy()
        if self.kind == "dif-1d":
            return np.diff(x)
        if self.kind == "fused-lasso":
            return np.concatenate([np.diff(x), x])
        if self.kind == "dif-2d":
            h, w = self.grid_shape
            img = x.reshape(h, w)
            horiz = (img[:, 1:] - img[:, :-1]).ravel()
            vert = (img[1:, :] - img[:-1, :]).ravel()
            return np.concatenate([horiz, vert])
        return self._matrix @ x

    def adjoint(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape != (self.p,):
            raise ValueError("expected coefficients of length %d, got %s" % (self.p, z.shape))
        if self.kind == "identity":
            return z.copy()
        if self.kind == "dif-1d":
            return _diff_adjoint(z, self.d)
        if self.kind == "fused-lasso":
            return _diff_adjoint(z[:self.d - 1], self.d) + z[self.d - 1:]
        if self.kind == "dif-2d":
            h, w = self.grid_shape
            out = np.zeros((h, w))
            zh = z[:h * (w - 1)].reshape(h, w - 1)
            zv = z[h * (w - 1):].reshape(h - 1, w)
            out[:, 1:] += zh
            out[:, :-1] -= zh
            out[1:, :] += zv
            out[:-1, :] -= zv
            return out.ravel()
        return self._matrix.T @ z

    def row(self, i):
        """Row i of the operator as a dense length-d vector."""
        if not 0 <= i < self.p:
            raise IndexError("row index %d out of range [0, %d)" % (i, self.p))
        if self.kind in DENSE_KINDS:
            return self._matrix[i].copy()
        out = np.zeros(self.d)
        if self.kind == "identity":
            out[i] = 1.0
        elif self.kind == "dif-1d":
            out[i] = -1.0
            out[i + 1] = 1.0
        elif self.kind == "fused-lasso":
            if i < self.d - 1:
                out[i] = -1.0
                out[i + 1] = 1.0
            else:
                out[i - (self.d - 1)] = 1.0
        else:  # dif-2d
            h, w = self.grid_shape
            nh = h * (w - 1)
            if i < nh:
                r, c = divmod(i, w - 1)
                out[r * w + c] = -1.0
                out[r * w + c + 1] = 1.0
            else:
                r, c = divmod(i - nh, w)
                out[r * w + c] = -1.0
                out[(r + 1) * w + c] = 1.0
        return out

    def row_submatrix(self, rows):
        """Dense |rows| x d submatrix of the selected rows."""
        rows = np.asarray(rows, dtype=int)
        if rows.ndim != 1:
            raise ValueError("rows must be a 1-D index array")
        if self.kind in DENSE_KINDS:
            return self._matrix[rows].copy() if rows.size else np.zeros((0, self.d))
        out = np.zeros((rows.size, self.d))
        for k, r in enumerate(rows):
            out[k] = self.row(int(r))
        return out

    def as_matrix(self):
        """Materialize the full p x d matrix."""
        if self.kind in DENSE_KINDS:
            return self._matrix.copy()
        return self.row_submatrix(np.arange(self.p))


def _diff_adjoint(z, d):
    out = np.zeros(d)
    out[1:] += z
    out[:-1] -= z
    return out


def make_identity(d):
    if d < 1:
        raise ValueError("signal dimension must be at least 1")
    return AnalysisOperator("identity", d, d)


def make_1d_dif(d):
    """First-order difference operator: coefficient i is x[i+1] - x[i]."""
    if d < 2:
        raise ValueError("1-D difference operator needs d >= 2")
    return AnalysisOperator("dif-1d", d, d - 1)


def make_fused_lasso(d):
    """Stack of the 1-D difference operator over the identity (p = 2d-1)."""
    if d < 2:
        raise ValueError("fused-lasso operator needs d >= 2")
    return AnalysisOperator("fused-lasso", d, 2 * d - 1)


def make_2d_dif(h, w):
    """Horizontal then vertical differences of an h x w image, raster order."""
    if h < 2 or w < 2:
        raise ValueError("2-D difference operator needs h, w >= 2")
    p = h * (w - 1) + w * (h - 1)
    return AnalysisOperator("dif-2d", h * w, p, grid_shape=(h, w))


def make_dense(matrix):
    matrix = as_matrix(matrix, "operator matrix")
    p, d = matrix.shape
    return AnalysisOperator("dense", d, p, matrix=matrix)


def make_unitary(matrix):
    """Dense operator validated to have orthonormal rows and columns (p = d)."""
    matrix = as_matrix(matrix, "operator matrix")
    p, d = matrix.shape
    if p != d:
        raise ValueError("unitary operator must be square, got %dx%d" % (p, d))
    if np.max(np.abs(matrix.T @ matrix - np.eye(d))) > 1e-8:
        raise ValueError("matrix columns are not orthonormal")
    return AnalysisOperator("unitary", d, p, matrix=matrix)


def make_random_tight_frame(p, d, seed):
    """Seeded Gaussian draw orthonormalized (polar factor) so that the
    columns are orthonormal: adjoint(apply(x)) == x for every x."""
    if p < d:
        raise ValueError("tight frame needs p >= d")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((p, d))
    u, _, vt = np.linalg.svd(a, full_matrices=False)
    frame = u @ vt
    kind = "unitary" if p == d else "dense"
    return AnalysisOperator(kind, d, p, matrix=frame)


def default_zero_tol(coeffs):
    """Relative zero threshold for floating-point analysis coefficients."""
    peak = float(np.max(np.abs(coeffs))) if coeffs.size else 0.0
    return 1e-9 * peak


def cosupport_of(omega, v, zero_tol=None):
    """Indices of (near-)zero analysis coefficients of v.

    zero_tol=None uses a relative default suited to computed vectors; pass 0
    for exact synthetic signals.
    """
    if zero_tol is not None and zero_tol < 0:
        raise ValueError("zero_tol must be nonnegative")
    coeffs = omega.apply(as_vector(v, "v"))
    if zero_tol is None:
        zero_tol = default_zero_tol(coeffs)
    return np.flatnonzero(np.abs(coeffs) <= zero_tol)


def smallest_coefficients_cosupport(omega, z, l):
    """The l indices with smallest |analysis coefficient|.

    Ties at the cutoff are resolved toward the lowest index. If more than l
    coefficients are exactly zero, all zero indices are returned (the result
    then has more than l entries).
    """
    if not 0 <= l <= omega.p:
        raise ValueError("l must lie in [0, %d], got %d" % (omega.p, l))
    coeffs = np.abs(omega.apply(as_vector(z, "z")))
    zeros = np.flatnonzero(coeffs == 0.0)
    if zeros.size > l:
        return zeros
    order = np.argsort(coeffs, kind="stable")
    return np.sort(order[:l])


def cosparsity(omega, x, zero_tol=None):
    """Number of analysis coefficients at or below the zero threshold."""
    return int(cosupport_of(omega, x, zero_tol).size)


def corank(omega, cosupport, rank_tol=1e-10):
    """Numerical rank of the cosupport row submatrix."""
    cosupport = np.asarray(cosupport, dtype=int)
    if cosupport.size == 0:
        return 0
    sub = omega.row_submatrix(cosupport)
    s = np.linalg.svd(sub, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


def save_operator_csv(omega, path):
    """Serialize an operator as CSV: a `p,d` header line then one row of d
    comma-separated values per operator row."""
    mat = omega.as_matrix()
    with open(path, "w") as fh:
        fh.write("%d,%d\n" % (omega.p, omega.d))
        for r in mat:
            fh.write(",".join("%.17g" % v for v in r) + "\n")


def load_operator_csv(path):
    """Load a dense operator written by save_operator_csv.

    Blank lines and lines starting with '#' are ignored.
    """
    with open(path) as fh:
        lines = [ln.strip() for ln in fh]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError("empty operator file: %s" % path)
    header = lines[0].split(",")
    if len(header) != 2:
        raise ValueError("expected `p,d` header in %s" % path)
    p, d = int(header[0]), int(header[1])
    body = "\n".join(lines[1:])
    mat = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
    if mat.shape != (p, d):
        raise ValueError(
            "operator body is %s but header declares %s" % (mat.shape, (p, d)))
    return make_dense(mat)
