"""Elliptical mask density model and its analytic sensitivities.

A mask ``j`` contributes the logistic factor ``s_ij = 1 / (1 + exp(-alpha d_ij))``
where ``d_ij`` is the signed elliptical measure of cell centroid ``i``.
Negative masks remove material: ``rho_i = prod_j s_ij ** eta``.
Positive masks deposit material: ``rho_i = (1 - prod_j s_ij) ** eta``.

Design variables are stored flat, five per mask: ``x, y, a, b, theta``.
Circular masks use the same layout with ``b`` tied to ``a`` and ``theta``
frozen at 0; their ``b``/``theta`` sensitivities are reported as zero and the
``a`` sensitivity is the total derivative ``-2 (X^2 + Y^2) / a^3``.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit, log_expit

N_PARAMS = 5
PARAM_NAMES = ("x", "y", "a", "b", "theta")

NEGATIVE = "negative"
POSITIVE = "positive"


@dataclass(frozen=True)
class EllipticalMask:
    x: float
    y: float
    a: float
    b: float
    theta: float = 0.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"semi-axes must be positive, got a={self.a}, b={self.b}")


@dataclass(frozen=True, eq=False)
class MaskSet:
    """A set of masks sharing polarity and the global ``alpha``, ``eta``.

    ``params`` has shape ``(M, 5)``; rows are ``x, y, a, b, theta``.
    """

    params: np.ndarray
    polarity: str = NEGATIVE
    alpha: float = 6.0
    eta: float = 3.0
    circular: bool = False

    def __post_init__(self):
        p = np.array(self.params, dtype=float).reshape(-1, N_PARAMS)
        if self.circular:
            p[:, 3] = p[:, 2]
            p[:, 4] = 0.0
        object.__setattr__(self, "params", p)
        if self.polarity not in (NEGATIVE, POSITIVE):
            raise ValueError(f"polarity must be 'negative' or 'positive', got {self.polarity!r}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.eta >= 1:
            raise ValueError(f"eta must be >= 1, got {self.eta}")
        if np.any(p[:, 2] <= 0) or np.any(p[:, 3] <= 0):
            raise ValueError("mask semi-axes must be positive")

    @classmethod
    def from_masks(cls, masks, **kwargs):
        params = np.array([[m.x, m.y, m.a, m.b, m.theta] for m in masks], dtype=float)
        return cls(params.reshape(-1, N_PARAMS), **kwargs)

    def __len__(self):
        return len(self.params)

    @property
    def masks(self):
        return [EllipticalMask(*row) for row in self.params]

    @property
    def vector(self):
        return self.params.ravel().copy()

    def with_vector(self, x):
        return replace(self, params=np.asarray(x, dtype=float).reshape(-1, N_PARAMS))

    def with_alpha(self, alpha):
        return replace(self, alpha=float(alpha))

    def subset(self, keep):
        return replace(self, params=self.params[np.asarray(keep)])


def wrap_angle(theta):
    """Map angles to ``[-pi, pi]``."""
    return (np.asarray(theta) + np.pi) % (2 * np.pi) - np.pi


def _local_coords(params, points):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    dx = pts[:, 0:1] - params[None, :, 0]
    dy = pts[:, 1:2] - params[None, :, 1]
    c = np.cos(params[:, 4])[None, :]
    s = np.sin(params[:, 4])[None, :]
    X = dx * c + dy * s
    Y = -dx * s + dy * c
    return X, Y, c, s


def signed_measure(mask, point):
    """``(X/a)^2 + (Y/b)^2 - 1``: negative inside, zero on, positive outside."""
    p = np.array([[mask.x, mask.y, mask.a, mask.b, mask.theta]])
    X, Y, _, _ = _local_coords(p, point)
    return float(((X / mask.a) ** 2 + (Y / mask.b) ** 2 - 1.0)[0, 0])


def measure_matrix(params, points):
    """Signed measures ``d`` of shape ``(n_points, M)``."""
    X, Y, _, _ = _local_coords(params, points)
    return (X / params[:, 2]) ** 2 + (Y / params[:, 3]) ** 2 - 1.0


def measure_partials(params, points, circular=False):
    """``d`` and its partials w.r.t. ``x, y, a, b, theta``.

    Returns ``d`` with shape ``(n, M)`` and ``dd`` with shape ``(n, M, 5)``.
    """
    X, Y, c, s = _local_coords(params, points)
    a = params[:, 2][None, :]
    b = params[:, 3][None, :]
    d = (X / a) ** 2 + (Y / b) ** 2 - 1.0
    dd = np.zeros(d.shape + (N_PARAMS,))
    dd[..., 0] = -2 * (X / a) * (c / a) + 2 * (Y / b) * (s / b)
    dd[..., 1] = -2 * (X / a) * (s / a) - 2 * (Y / b) * (c / b)
    if circular:
        dd[..., 2] = -2 * (X**2 + Y**2) / a**3
    else:
        dd[..., 2] = -2 * X**2 / a**3
        dd[..., 3] = -2 * Y**2 / b**3
        dd[..., 4] = 2 * X * Y / a**2 - 2 * X * Y / b**2
    return d, dd


def _densities(masks, d):
    """Densities and the per-mask chain coefficient ``d rho / d d_ij``."""
    alpha, eta = masks.alpha, masks.eta
    n = d.shape[0]
    if d.shape[1] == 0:
        rho = np.ones(n) if masks.polarity == NEGATIVE else np.zeros(n)
        return rho, np.zeros_like(d)
    log_s = log_expit(alpha * d)
    one_minus_s = expit(-alpha * d)
    log_prod = log_s.sum(axis=1)
    if masks.polarity == NEGATIVE:
        rho = np.exp(eta * log_prod)
        coef = eta * alpha * rho[:, None] * one_minus_s
    else:
        prod = np.exp(log_prod)
        q = -np.expm1(log_prod)  # 1 - prod without cancellation
        rho = q**eta
        coef = -eta * q[:, None] ** (eta - 1) * prod[:, None] * alpha * one_minus_s
    return rho, coef


def density(masks, points):
    """Mask densities at ``points`` (shape ``(n, 2)``)."""
    d = measure_matrix(masks.params, points)
    return _densities(masks, d)[0]


def density_negative(masks, point):
    if masks.polarity != NEGATIVE:
        raise ValueError("density_negative requires a negative MaskSet")
    return float(density(masks, point)[0])


def density_positive(masks, point):
    if masks.polarity != POSITIVE:
        raise ValueError("density_positive requires a positive MaskSet")
    return float(density(masks, point)[0])


def density_jacobian(masks, points):
    """Densities and ``d rho_i / d psi_j`` with shape ``(n, M, 5)``."""
    d, dd = measure_partials(masks.params, points, masks.circular)
    rho, coef = _densities(masks, d)
    return rho, coef[..., None] * dd


def density_gradient(masks, point, j):
    """Five partials of the density at ``point`` w.r.t. mask ``j``."""
    _, jac = density_jacobian(masks, point)
    return jac[0, j]


def density_vjp(masks, points, v):
    """``sum_i v_i d rho_i / d psi`` as a flat vector of length ``5 M``.

    ``v`` may also have shape ``(n, k)``; the result then has shape
    ``(k, 5 M)`` and the measure partials are computed only once.
    """
    d, dd = measure_partials(masks.params, points, masks.circular)
    _, coef = _densities(masks, d)
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        return np.einsum("nm,nmk->mk", v[:, None] * coef, dd).ravel()
    out = np.einsum("nq,nm,nmk->qmk", v, coef, dd, optimize=True)
    return out.reshape(v.shape[1], -1)


@dataclass(frozen=True, eq=False)
class DensityField:
    """Per-cell mask densities and the void floor used for stiffness."""

    rho: np.ndarray
    rho_min: float = 1e-3

    @property
    def stiffness_factor(self):
        return self.rho_min + self.rho * (1.0 - self.rho_min)

    def binary(self, threshold=0.5):
        return self.rho > threshold


def evaluate_field(grid, masks, rho_min=1e-3):
    return DensityField(density(masks, grid.centroids), rho_min)


def debug_density(params, points, alphas, etas, polarity=NEGATIVE):
    """Densities with per-mask ``alpha_j`` and ``eta_j``; diagnostics only."""
    d = measure_matrix(np.asarray(params, dtype=float).reshape(-1, N_PARAMS), points)
    alphas = np.broadcast_to(np.asarray(alphas, dtype=float), (d.shape[1],))
    etas = np.broadcast_to(np.asarray(etas, dtype=float), (d.shape[1],))
    log_s = log_expit(alphas * d)
    if polarity == NEGATIVE:
        return np.exp((etas * log_s).sum(axis=1))
    # the positive form only admits a single exponent; use the first
    return (-np.expm1(log_s.sum(axis=1))) ** etas[0] if len(etas) else np.zeros(len(d))


def evenly_spread(n_x, n_y, bounds, a, b=None, theta=0.0):
    """Mask parameters for an ``n_x`` x ``n_y`` lattice over ``bounds``."""
    xmin, ymin, xmax, ymax = bounds
    b = a if b is None else b
    xs = xmin + (np.arange(n_x) + 0.5) * (xmax - xmin) / n_x
    ys = ymin + (np.arange(n_y) + 0.5) * (ymax - ymin) / n_y
    gx, gy = np.meshgrid(xs, ys)
    m = gx.size
    return np.column_stack([gx.ravel(), gy.ravel(), np.full(m, a), np.full(m, b), np.full(m, theta)])


def parameter_bounds(n_masks, bounds, lower_axis, upper_axis, margin):
    """Box bounds on the flat parameter vector.

    Centers may leave the domain by ``margin``; angles live in ``[-2 pi, 2 pi]``
    so the optimizer can rotate through ``+-pi`` without hitting a wall.
    """
    xmin, ymin, xmax, ymax = bounds
    lo = np.array([xmin - margin, ymin - margin, lower_axis, lower_axis, -2 * np.pi])
    hi = np.array([xmax + margin, ymax + margin, upper_axis, upper_axis, 2 * np.pi])
    return np.tile(lo, n_masks), np.tile(hi, n_masks)
