"""Forward operators with exact adjoints under weighted inner products.

Every operator is backed by a matrix K (dense or sparse) acting on
coefficient arrays, together with the quadrature weights of its domain X and
range Y. The adjoint is represented on the X grid so that the duality pairing

    <A x, lam>_Y = <x, A* lam>_X

holds exactly: ``A* lam = (K^T (w_y * lam)) / w_x``. For the trapezoid
discretization of an integral operator this reproduces the continuous adjoint
kernel application ``(A* lam)(s') = int k(s, s') lam(s) ds``.
"""

import csv

import numpy as np
import scipy.sparse as sp

from .spaces import WeightedVector, as_values, unit_weights, trapezoid_weights, wnorm


class ForwardOperator:
    """Bounded linear map A : X -> Y between weighted grid spaces.

    Parameters
    ----------
    matrix : (m, n) ndarray or scipy sparse matrix
        Coefficient representation of A.
    x_weights, y_weights : arrays, optional
        Quadrature weights of X and Y; default all ones.
    kind : str
        One of 'dense', 'integral', 'projector' (informational).
    """

    def __init__(self, matrix, x_weights=None, y_weights=None, kind="dense"):
        self.matrix = matrix
        m, n = matrix.shape
        self.shape = (m, n)
        self.x_weights = unit_weights(n) if x_weights is None else np.asarray(x_weights, float)
        self.y_weights = unit_weights(m) if y_weights is None else np.asarray(y_weights, float)
        if self.x_weights.shape != (n,) or self.y_weights.shape != (m,):
            raise ValueError("weight lengths do not match operator shape")
        self.kind = kind
        self._norm = None

    # raw coefficient-level products; apply/adjoint_apply wrap these
    def matvec(self, values):
        return np.asarray(self.matrix @ values)

    def rmatvec(self, values):
        return np.asarray(self.matrix.T @ (self.y_weights * values)) / self.x_weights

    def apply(self, x):
        """A x as an element of Y."""
        v = as_values(x)
        if v.shape != (self.shape[1],):
            raise ValueError(f"expected input of length {self.shape[1]}, got {v.shape}")
        return WeightedVector(self.matvec(v), self.y_weights)

    def adjoint_apply(self, lam):
        """A* lam represented on the X grid (duality pairing uses X weights)."""
        v = as_values(lam)
        if v.shape != (self.shape[0],):
            raise ValueError(f"expected input of length {self.shape[0]}, got {v.shape}")
        return WeightedVector(self.rmatvec(v), self.x_weights)

    def norm(self, iters=200, seed=0):
        """Cached power-method estimate of ||A|| in the weighted L2 norms."""
        if self._norm is None:
            self._norm = estimate_norm(self, iters=iters, seed=seed)
        return self._norm

    def norm_y(self, values):
        return wnorm(self.y_weights, values)


def estimate_norm(op, iters=200, seed=0):
    """Power-method estimate of the operator norm of A in the weighted L2
    spaces, i.e. the largest generalized singular value.

    Runs `iters` iterations of the power method on A*A (self-adjoint and
    positive in the X inner product) and returns the square root of the final
    Rayleigh quotient, which is nondecreasing in `iters` for a fixed seed and
    never exceeds the true norm.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    m, n = op.shape
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    rayleigh = 0.0
    for _ in range(iters):
        bv = op.rmatvec(op.matvec(v))
        vv = np.dot(op.x_weights * v, v)
        rayleigh = np.dot(op.x_weights * bv, v) / vv
        nrm = np.sqrt(np.dot(op.x_weights * bv, bv))
        if nrm == 0.0:
            return 0.0
        v = bv / nrm
    return float(np.sqrt(max(rayleigh, 0.0)))


def norm_l1_to_l2(op):
    """Exact norm of A as a map from weighted-L1 X into weighted-L2 Y.

    Equals the largest Y-norm over the columns of the continuous kernel,
    i.e. max_j ||A e_j||_Y / ||e_j||_L1. Used for stability bounds when the
    regularizer is strongly convex with respect to the L1 norm.
    """
    K = op.matrix.toarray() if sp.issparse(op.matrix) else np.asarray(op.matrix)
    col_norms = np.sqrt(op.y_weights @ (K * K))  # ||K[:, j]||_{L2(w_y)}
    return float(np.max(col_norms / op.x_weights))


def build_integral_operator(kernel, grid_n, y_weights=None):
    """Trapezoidal discretization of (Ax)(s) = int_0^1 k(s, s') x(s') ds'.

    The grid is uniform on [0, 1] with grid_n nodes; the X side carries
    trapezoid weights so L1/L2 norms of densities are quadrature-exact.
    `kernel` is evaluated vectorized on the (s_i, s'_j) mesh.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    s = np.linspace(0.0, 1.0, grid_n)
    w = trapezoid_weights(grid_n)
    K = kernel(s[:, None], s[None, :]) * w[None, :]
    yw = w if y_weights is None else np.asarray(y_weights, float)
    op = ForwardOperator(K, x_weights=w, y_weights=yw, kind="integral")
    op.grid = s
    return op


def siddon_lengths(image_n, point, direction):
    """Exact intersection lengths of one ray with the pixels of an
    image_n x image_n unit-pixel image centered at the origin.

    The ray is point + s * direction with `direction` normalized internally.
    Returns (cols, lengths) where cols are flat pixel indices in row-major
    order (row 0 at the top, y decreasing with row index).
    """
    n = image_n
    half = n / 2.0
    d = np.asarray(direction, float)
    d = d / np.hypot(d[0], d[1])
    p = np.asarray(point, float)

    # clip the ray to the image square
    s_lo, s_hi = -np.inf, np.inf
    for axis in range(2):
        if abs(d[axis]) < 1e-14:
            if not (-half <= p[axis] <= half):
                return np.empty(0, dtype=np.int64), np.empty(0)
        else:
            a = (-half - p[axis]) / d[axis]
            b = (half - p[axis]) / d[axis]
            s_lo = max(s_lo, min(a, b))
            s_hi = min(s_hi, max(a, b))
    if not s_lo < s_hi:
        return np.empty(0, dtype=np.int64), np.empty(0)

    crossings = [np.array([s_lo, s_hi])]
    planes = np.arange(n + 1) - half
    for axis in range(2):
        if abs(d[axis]) >= 1e-14:
            crossings.append((planes - p[axis]) / d[axis])
    s = np.unique(np.concatenate(crossings))
    s = s[(s >= s_lo - 1e-12) & (s <= s_hi + 1e-12)]
    lengths = np.diff(s)
    keep = lengths > 1e-12
    mids = (s[:-1] + 0.5 * lengths)[keep]
    lengths = lengths[keep]

    xm = p[0] + mids * d[0]
    ym = p[1] + mids * d[1]
    j = np.clip(np.floor(xm + half), 0, n - 1).astype(np.int64)
    i = np.clip(np.floor(half - ym), 0, n - 1).astype(np.int64)
    return i * n + j, lengths


def parallel_beam_matrix(image_n, angles_deg, offsets):
    """Sparse parallel-beam system matrix with one row per (angle, offset).

    For projection angle theta the rays run along (-sin, cos)(theta) and the
    ray with detector offset t passes through t * (cos, sin)(theta). Entries
    are exact line-pixel intersection lengths in pixel units.
    """
    rows, cols, vals = [], [], []
    n_det = len(offsets)
    for a_idx, theta in enumerate(np.deg2rad(np.asarray(angles_deg, float))):
        direction = (-np.sin(theta), np.cos(theta))
        base = np.array([np.cos(theta), np.sin(theta)])
        for d_idx, t in enumerate(offsets):
            c, l = siddon_lengths(image_n, t * base, direction)
            rows.append(np.full(c.size, a_idx * n_det + d_idx, dtype=np.int64))
            cols.append(c)
            vals.append(l)
    m = len(angles_deg) * n_det
    K = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(m, image_n * image_n),
    )
    return K


def build_parallel_beam(image_n, n_angles, n_detectors):
    """Parallel-beam projector: n_angles angles evenly spaced over
    [1, 180] degrees, n_detectors rays per angle spanning sqrt(2) * image_n."""
    if min(image_n, n_angles, n_detectors) < 1:
        raise ValueError("image_n, n_angles, n_detectors must be >= 1")
    angles = np.linspace(1.0, 180.0, n_angles)
    span = np.sqrt(2.0) * image_n
    if n_detectors == 1:
        offsets = np.array([0.0])
    else:
        offsets = np.linspace(-span / 2, span / 2, n_detectors)
    K = parallel_beam_matrix(image_n, angles, offsets)
    op = ForwardOperator(K, kind="projector")
    op.image_shape = (image_n, image_n)
    op.angles_deg = angles
    op.offsets = offsets
    return op


def dense_from_csv(path, x_weights=None, y_weights=None):
    """Load a dense operator from a comma-separated matrix file."""
    K = np.loadtxt(path, delimiter=",", ndmin=2)
    return ForwardOperator(K, x_weights=x_weights, y_weights=y_weights, kind="dense")


def save_coo_csv(op, path):
    """Export the operator matrix as coordinate triplets `row,col,value`."""
    K = sp.coo_matrix(op.matrix)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["row", "col", "value"])
        for r, c, v in zip(K.row, K.col, K.data):
            writer.writerow([int(r), int(c), repr(float(v))])
