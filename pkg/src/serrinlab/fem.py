"""Weighted-Laplacian assembly and SPD linear solves on a ``Mesh``."""

from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from serrinlab.errors import SolverError
from serrinlab.mesh import EdgeQuadrature, Mesh

log = logging.getLogger(__name__)


class Assembler:
    """Scatters element matrices into a fixed CSR pattern.

    Summation uses ``np.bincount`` in a fixed entry order, so assembly is
    bit-reproducible.
    """

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        n = mesh.n_dofs
        cells = mesh.cells
        rows = np.repeat(cells[:, :, None], 4, axis=2).ravel()
        cols = np.repeat(cells[:, None, :], 4, axis=1).ravel()
        edge_parts = []
        for edge in (mesh.inner, mesh.outer):
            er = np.repeat(edge.dofs[:, :, None], 2, axis=2).ravel()
            ec = np.repeat(edge.dofs[:, None, :], 2, axis=1).ravel()
            edge_parts.append((er, ec))
        keys = [rows * n + cols] + [er * n + ec for er, ec in edge_parts]
        all_keys = np.concatenate(keys)
        uniq, inverse = np.unique(all_keys, return_inverse=True)
        sizes = np.cumsum([0] + [k.size for k in keys])
        self._cell_slot = inverse[sizes[0]:sizes[1]]
        self._edge_slot = {
            "inner": inverse[sizes[1]:sizes[2]],
            "outer": inverse[sizes[2]:sizes[3]],
        }
        self.nnz = uniq.size
        self.indices = (uniq % n).astype(np.int32)
        row_of = uniq // n
        self.indptr = np.searchsorted(row_of, np.arange(n + 1)).astype(np.int32)
        self.n = n

    def element_stiffness(self, coeff: np.ndarray) -> np.ndarray:
        q = self.mesh.quad
        return np.einsum("cq,cqad,cqbd->cab", coeff * q.weights, q.grads, q.grads, optimize=True)

    def matrix(self, coeff: np.ndarray, boundary: dict | None = None) -> sp.csr_matrix:
        """K[coeff] plus boundary mass terms ``{'inner'|'outer': edge_coeff (nedge, nq)}``."""
        data = np.bincount(
            self._cell_slot, weights=self.element_stiffness(coeff).ravel(), minlength=self.nnz
        )
        for name, ecoeff in (boundary or {}).items():
            edge: EdgeQuadrature = getattr(self.mesh, name)
            me = np.einsum("eq,qa,qb->eab", ecoeff * edge.weights, edge.shape, edge.shape)
            data += np.bincount(self._edge_slot[name], weights=me.ravel(), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))


def gradients(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Physical gradient of the bilinear field at every cell quadrature point."""
    return np.einsum("ca,cqad->cqd", u[mesh.cells], mesh.quad.grads)


def edge_values(edge: EdgeQuadrature, u: np.ndarray) -> np.ndarray:
    return u[edge.dofs] @ edge.shape.T


def edge_load(mesh: Mesh, edge: EdgeQuadrature, density) -> np.ndarray:
    """Load vector of int_edge density * phi_j dS."""
    vals = np.broadcast_to(density, edge.weights.shape) * edge.weights
    contrib = vals[:, :, None] * edge.shape[None, :, :]
    return np.bincount(edge.dofs.ravel(), weights=contrib.sum(axis=1).ravel(), minlength=mesh.n_dofs)


def _amg_preconditioner(A):
    """Smoothed-aggregation V-cycle.

    pyamg seeds its spectral-radius estimates from numpy's global RNG, so the
    setup runs under a fixed seed (and restores the caller's state) to keep
    the hierarchy bit-reproducible.
    """
    import pyamg

    state = np.random.get_state()
    try:
        np.random.seed(0)
        ml = pyamg.smoothed_aggregation_solver(A, symmetry="symmetric")
    finally:
        np.random.set_state(state)
    return ml.aspreconditioner(cycle="V")


def solve_spd(A: sp.csr_matrix, b: np.ndarray, x0: np.ndarray, method: str, rtol: float):
    """Solve ``A x = b`` for SPD ``A``. Returns (x, iterations)."""
    if b.size == 0:
        return b.copy(), 0
    if method == "direct":
        try:
            x = spla.spsolve(A.tocsc(), b)
        except RuntimeError as exc:
            raise SolverError(f"direct solve failed: {exc}") from exc
        if not np.all(np.isfinite(x)):
            raise SolverError("singular linear system")
        return x, 0
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverError("system matrix has a non-positive diagonal entry")
    if method == "cg-amg":
        M = _amg_preconditioner(A)
    elif method == "cg-jacobi":
        inv = 1.0 / diag
        M = spla.LinearOperator(A.shape, matvec=lambda r: inv * r, dtype=float)
    else:
        raise SolverError(f"unknown linear solver {method!r}")
    count = [0]

    def _cb(_):
        count[0] += 1

    x, info = spla.cg(A, b, x0=x0, rtol=rtol, atol=0.0, maxiter=20 * A.shape[0], M=M, callback=_cb)
    if info != 0 or not np.all(np.isfinite(x)):
        raise SolverError(f"conjugate gradients failed (info={info}); system may be singular")
    return x, count[0]
