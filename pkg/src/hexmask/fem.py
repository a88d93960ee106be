"""Plane-stress finite elements on the honeycomb and adjoint sensitivities.

Every cell is the same regular hexagon, so one 12x12 stiffness ``K0`` built
from Wachspress shape functions serves the whole mesh. Cell ``i`` contributes
``(rho_min + rho_i (1 - rho_min)) K0``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import maskfield


class AnalysisError(RuntimeError):
    """Raised when the stiffness system cannot be solved."""


def hexagon_vertices(cs):
    ang = np.deg2rad(30.0 + 60.0 * np.arange(6))
    return cs * np.column_stack([np.cos(ang), np.sin(ang)])


def wachspress(vertices, x):
    """Wachspress shape functions and gradients on a convex polygon.

    Parameters
    ----------
    vertices : ndarray, shape (n, 2)
        Counter-clockwise polygon vertices.
    x : ndarray, shape (2,)
        Evaluation point strictly inside the polygon.

    Returns
    -------
    phi : ndarray, shape (n,)
    dphi : ndarray, shape (n, 2)
    """
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    edge = np.roll(v, -1, axis=0) - v  # edge i runs v_i -> v_{i+1}
    normal = np.column_stack([edge[:, 1], -edge[:, 0]])
    normal /= np.linalg.norm(normal, axis=1)[:, None]
    h = np.einsum("ij,ij->i", v - x, normal)  # distance to edge i
    prev = np.arange(n) - 1
    cross = normal[prev, 0] * normal[:, 1] - normal[prev, 1] * normal[:, 0]
    w = cross / (h[prev] * h)
    R = normal[prev] / h[prev][:, None] + normal / h[:, None]
    phi = w / w.sum()
    dphi = phi[:, None] * (R - phi @ R)
    return phi, dphi


def _triangle_rule():
    # interior 3-point rule, exact for quadratics; avoids the vertices where
    # Wachspress gradients are singular in floating point
    bary = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
    return bary, np.full(3, 1 / 3)


def hexagon_quadrature(cs):
    """Points and weights from 6 centroid-fan triangles, 3 points each."""
    v = hexagon_vertices(cs)
    bary, wts = _triangle_rule()
    pts, ws = [], []
    for k in range(6):
        tri = np.array([[0.0, 0.0], v[k], v[(k + 1) % 6]])
        a, b = tri[1] - tri[0], tri[2] - tri[0]
        area = 0.5 * abs(a[0] * b[1] - a[1] * b[0])
        pts.append(bary @ tri)
        ws.append(wts * area)
    return np.vstack(pts), np.concatenate(ws)


def plane_stress_matrix(E, nu):
    return E / (1 - nu**2) * np.array([[1, nu, 0], [nu, 1, 0], [0, 0, (1 - nu) / 2]])


def element_stiffness(cs, E=1.0, nu=0.3, thickness=1.0):
    """12x12 plane-stress stiffness of a solid regular hexagon.

    Dofs are ordered ``(u_x, u_y)`` per local node, nodes counter-clockwise
    from the 30 degree vertex.
    """
    if not E > 0:
        raise ValueError(f"E must be positive, got {E}")
    if not 0 <= nu < 0.5:
        raise ValueError(f"nu must lie in [0, 0.5), got {nu}")
    if not cs > 0 or not thickness > 0:
        raise ValueError("cell size and thickness must be positive")
    D = plane_stress_matrix(E, nu)
    verts = hexagon_vertices(cs)
    K = np.zeros((12, 12))
    for x, w in zip(*hexagon_quadrature(cs)):
        _, dphi = wachspress(verts, x)
        B = np.zeros((3, 12))
        B[0, 0::2] = dphi[:, 0]
        B[1, 1::2] = dphi[:, 1]
        B[2, 0::2] = dphi[:, 1]
        B[2, 1::2] = dphi[:, 0]
        K += w * thickness * B.T @ D @ B
    return 0.5 * (K + K.T)


@dataclass(frozen=True, eq=False)
class FEModel:
    """Linear elastic model on a honeycomb mesh.

    ``output_dof``/``output_sign`` select the mechanism output displacement
    ``D = sign * u[output_dof]``. ``springs`` maps dof index to an added
    diagonal stiffness.
    """

    grid: object
    fixed_dofs: np.ndarray
    loads: np.ndarray
    E: float = 1.0
    nu: float = 0.3
    thickness: float = 1.0
    rho_min: float = 1e-3
    output_dof: int = None
    output_sign: float = 1.0
    springs: dict = field(default_factory=dict)

    def __post_init__(self):
        K0 = element_stiffness(self.grid.cs, self.E, self.nu, self.thickness)
        object.__setattr__(self, "K0", K0)
        edofs = np.empty((self.grid.n_cells, 12), dtype=int)
        edofs[:, 0::2] = 2 * self.grid.cell_nodes
        edofs[:, 1::2] = 2 * self.grid.cell_nodes + 1
        object.__setattr__(self, "edofs", edofs)
        ndof = 2 * self.grid.n_nodes
        fixed = np.unique(np.asarray(self.fixed_dofs, dtype=int))
        if fixed.size and (fixed.min() < 0 or fixed.max() >= ndof):
            raise ValueError("fixed dof out of range")
        object.__setattr__(self, "fixed_dofs", fixed)
        f = np.asarray(self.loads, dtype=float)
        if f.shape != (ndof,):
            raise ValueError(f"load vector must have length {ndof}")
        object.__setattr__(self, "loads", f)
        free = np.setdiff1d(np.arange(ndof), fixed)
        object.__setattr__(self, "free_dofs", free)
        object.__setattr__(self, "_rows", np.repeat(edofs, 12, axis=1).ravel())
        object.__setattr__(self, "_cols", np.tile(edofs, (1, 12)).ravel())

    @property
    def n_dofs(self):
        return 2 * self.grid.n_nodes

    def output_vector(self):
        if self.output_dof is None:
            raise ValueError("model has no output dof; mechanism objective undefined")
        l = np.zeros(self.n_dofs)
        l[self.output_dof] = self.output_sign
        return l


@dataclass(eq=False)
class SolveResult:
    u: np.ndarray
    compliance: float
    factor: object = field(repr=False)
    output_disp: float = None
    strain_energy_density: np.ndarray = field(default=None, repr=False)

    def solve(self, rhs, model):
        """Solve ``K x = rhs`` reusing the factorization (adjoint loads)."""
        x = np.zeros(model.n_dofs)
        x[model.free_dofs] = self.factor.solve(rhs[model.free_dofs])
        return x


def assemble(model, stiffness_factor):
    data = (np.asarray(stiffness_factor)[:, None] * model.K0.ravel()[None, :]).ravel()
    K = sp.coo_matrix((data, (model._rows, model._cols)), shape=(model.n_dofs,) * 2).tocsc()
    if model.springs:
        idx = np.array(list(model.springs), dtype=int)
        K = K + sp.csc_matrix((np.array(list(model.springs.values()), dtype=float), (idx, idx)), shape=K.shape)
    return K


def _check_rigid_modes(model):
    """Raise unless supports and springs suppress all three rigid motions."""
    held = np.union1d(model.fixed_dofs, np.array(list(model.springs), dtype=int))
    xy = model.grid.nodes - model.grid.nodes.mean(axis=0)
    modes = np.zeros((model.n_dofs, 3))
    modes[0::2, 0] = 1.0
    modes[1::2, 1] = 1.0
    modes[0::2, 2] = -xy[:, 1]
    modes[1::2, 2] = xy[:, 0]
    if np.linalg.matrix_rank(modes[held], tol=1e-9 * max(1.0, np.abs(xy).max())) < 3:
        raise AnalysisError("supports leave a rigid-body motion unconstrained")


def assemble_solve(model, field):
    """Assemble ``K`` from the density field and solve ``K u = f``."""
    if model.fixed_dofs.size < 3:
        raise AnalysisError("at least 3 constrained dofs are needed to remove rigid-body motion")
    _check_rigid_modes(model)
    K = assemble(model, field.stiffness_factor)
    free = model.free_dofs
    Kff = K[free][:, free].tocsc()
    try:
        lu = splu(Kff, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise AnalysisError(f"stiffness matrix is singular: {exc}") from exc
    u = np.zeros(model.n_dofs)
    u[free] = lu.solve(model.loads[free])
    if not np.all(np.isfinite(u)):
        raise AnalysisError("non-finite displacements")
    res = SolveResult(u=u, compliance=0.5 * float(model.loads @ u), factor=lu)
    if model.output_dof is not None:
        res.output_disp = float(model.output_vector() @ u)
    return res


def element_energies(model, u, v=None):
    """``u_e^T K0 v_e`` per cell (``v`` defaults to ``u``)."""
    ue = u[model.edofs]
    ve = ue if v is None else v[model.edofs]
    return np.einsum("ni,ij,nj->n", ue, model.K0, ve)


def strain_energy_density(model, result, field):
    """Per-cell ``0.5 u_e^T K_e u_e`` normalized by its maximum."""
    sed = 0.5 * field.stiffness_factor * element_energies(model, result.u)
    peak = sed.max()
    return sed / peak if peak > 0 else sed


COMPLIANCE = "compliance"
MECHANISM = "mechanism"


def objective_density_gradient(model, field, kind=COMPLIANCE, scale=1.0, result=None):
    """Objective and its gradient w.r.t. the cell densities ``rho``.

    Compliance: ``0.5 f^T u``. Mechanism: ``-S D / (0.5 f^T u)`` with the
    adjoint ``K lam = l`` for ``D = l^T u``.
    """
    if result is None:
        result = assemble_solve(model, field)
    dk = 1.0 - field.rho_min  # d(stiffness factor)/d rho
    e_uu = element_energies(model, result.u)
    dSE = -0.5 * dk * e_uu
    SE = result.compliance
    if kind == COMPLIANCE:
        return scale * SE, scale * dSE, result
    if kind != MECHANISM:
        raise ValueError(f"unknown objective kind {kind!r}")
    l = model.output_vector()
    lam = result.solve(l, model)
    D = float(l @ result.u)
    dD = -dk * element_energies(model, result.u, lam)
    phi = -scale * D / SE
    dphi = -scale * (dD * SE - D * dSE) / SE**2
    return phi, dphi, result


def objective_and_gradient(model, masks, kind=COMPLIANCE, scale=1.0):
    """Objective and its gradient w.r.t. the flat mask parameter vector."""
    fld = maskfield.evaluate_field(model.grid, masks, model.rho_min)
    phi, dphi_drho, result = objective_density_gradient(model, fld, kind, scale)
    grad = maskfield.density_vjp(masks, model.grid.centroids, dphi_drho)
    return phi, grad


def node_dofs(nodes, direction):
    """Dof indices of ``nodes`` in ``'x'``, ``'y'`` or ``'xy'``."""
    nodes = np.atleast_1d(np.asarray(nodes, dtype=int))
    out = []
    if "x" in direction:
        out.append(2 * nodes)
    if "y" in direction:
        out.append(2 * nodes + 1)
    return np.sort(np.concatenate(out)) if out else np.array([], dtype=int)
