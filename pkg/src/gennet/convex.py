"""Internal convex subsets given per epsilon, and projection onto them.

A ConvexSetNet holds one closed convex set per grid index; projection of
a vector net is the net of componentwise Euclidean projections.  Boxes,
lower-bound (obstacle) sets and affine subspaces are projected in closed
form; halfspace intersections use Dykstra's alternating projections with
correction terms, iterated to tolerance.  The variational
characterization Re<u - P(u), w - P(u)> <= 0 for w in C is exposed as a
residual against a finite probe set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, EmptySet, GridMismatch, NoConvergence, ProbeNotInSet
from .gennum import EpsGrid, GenScalar, NumericPolicy
from .hilbert import GenVector

KINDS = ("box", "obstacle_lower_bound", "affine_subspace", "halfspaces")

_DYKSTRA_MAX_SWEEPS = 20000


@dataclass(frozen=True)
class ConvexSetNet:
    """Per-epsilon convex constraint descriptor.

    data layout by kind:
      box                  {"lower": (K,d), "upper": (K,d)}
      obstacle_lower_bound {"lower": (K,d)}          (+inf implicit above)
      affine_subspace      {"basis": (K,d,r), "offset": (K,d),
                            "onb": (K,d,r)}          (onb cached at build)
      halfspaces           {"rows": (K,m,d), "offsets": (K,m)}  A x <= b
    """

    grid: EpsGrid
    dim: int
    kind: str
    data: dict

    @classmethod
    def box(cls, grid: EpsGrid, lower, upper) -> "ConvexSetNet":
        lower = _per_eps(lower, grid)
        upper = _per_eps(upper, grid)
        if lower.shape != upper.shape:
            raise DimMismatch("box bounds differ in shape")
        if np.any(lower > upper):
            raise EmptySet("box has lower > upper somewhere")
        return cls(grid, lower.shape[1], "box", {"lower": lower, "upper": upper})

    @classmethod
    def obstacle(cls, grid: EpsGrid, lower) -> "ConvexSetNet":
        lower = _per_eps(lower, grid)
        if not np.all(lower < np.inf):
            raise EmptySet("obstacle bound is +inf somewhere")
        return cls(grid, lower.shape[1], "obstacle_lower_bound", {"lower": lower})

    @classmethod
    def affine(cls, grid: EpsGrid, basis, offset=None, tol: float = 1e-12) -> "ConvexSetNet":
        """Affine subspace offset + span(rows of basis), per grid point.

        ``basis`` is (r, d) for one spanning set shared by all grid
        points or (K, r, d) for per-point spans.
        """
        basis = np.asarray(basis, dtype=float)
        if basis.ndim == 2:  # constant basis across eps
            basis = np.tile(basis, (grid.K, 1, 1))
        if basis.ndim != 3 or basis.shape[0] != grid.K:
            raise DimMismatch("basis must have shape (r, d) or (K, r, d)")
        d = basis.shape[2]
        if offset is None:
            offset = np.zeros((grid.K, d))
        else:
            offset = _per_eps(offset, grid)
        cols = np.swapaxes(basis, 1, 2)
        onb = np.zeros_like(cols)
        for i in range(grid.K):
            q, r = np.linalg.qr(cols[i])
            keep = np.abs(np.diag(r)) > tol * max(1.0, np.abs(r).max())
            onb[i, :, : keep.sum()] = q[:, keep]
        return cls(grid, d, "affine_subspace",
                   {"basis": basis, "offset": offset, "onb": onb})

    @classmethod
    def halfspaces(cls, grid: EpsGrid, rows, offsets) -> "ConvexSetNet":
        rows = np.asarray(rows, dtype=float)
        offsets = np.asarray(offsets, dtype=float)
        if rows.ndim == 2:
            rows = np.tile(rows, (grid.K, 1, 1))
            offsets = np.tile(offsets, (grid.K, 1))
        if rows.ndim != 3 or rows.shape[0] != grid.K or offsets.shape != rows.shape[:2]:
            raise DimMismatch("halfspace rows must be (K, m, d), offsets (K, m)")
        return cls(grid, rows.shape[2], "halfspaces", {"rows": rows, "offsets": offsets})

    # -- per-sample geometry -------------------------------------------------

    def project_sample(self, k: int, x: np.ndarray, tol_abs: float) -> np.ndarray:
        """Euclidean projection of one sample onto the k-th set (0-based k)."""
        if self.kind == "box":
            return np.clip(x, self.data["lower"][k], self.data["upper"][k])
        if self.kind == "obstacle_lower_bound":
            return np.maximum(x, self.data["lower"][k])
        if self.kind == "affine_subspace":
            q = self.data["onb"][k]
            p = self.data["offset"][k]
            return p + q @ (q.T @ (x - p))
        return self._dykstra(k, x, tol_abs)

    def violation(self, k: int, x: np.ndarray) -> float:
        """How far the sample is from the k-th set (0 inside)."""
        if self.kind == "box":
            lo, up = self.data["lower"][k], self.data["upper"][k]
            return float(max(np.max(lo - x, initial=0.0), np.max(x - up, initial=0.0)))
        if self.kind == "obstacle_lower_bound":
            return float(np.max(self.data["lower"][k] - x, initial=0.0))
        if self.kind == "affine_subspace":
            return float(np.linalg.norm(x - self.project_sample(k, x, 0.0)))
        rows, offs = self.data["rows"][k], self.data["offsets"][k]
        return float(np.max(rows @ x - offs, initial=0.0))

    def contains(self, k: int, x: np.ndarray, tol: float) -> bool:
        return self.violation(k, x) <= tol

    def batched_projector(self):
        """A callable projecting all grid samples at once, or None.

        Only the pointwise kinds (box, obstacle) admit this; the
        iterative solvers use it to avoid a per-sample Python loop in
        their inner iteration.
        """
        if self.kind == "box":
            lo, up = self.data["lower"], self.data["upper"]
            return lambda z: np.clip(z, lo, up)
        if self.kind == "obstacle_lower_bound":
            lo = self.data["lower"]
            return lambda z: np.maximum(z, lo)
        return None

    def _dykstra(self, k: int, x0: np.ndarray, tol_abs: float) -> np.ndarray:
        rows = self.data["rows"][k]
        offs = self.data["offsets"][k]
        sqn = np.sum(rows * rows, axis=1)
        x = x0.astype(float).copy()
        corr = np.zeros_like(rows)
        tol = max(tol_abs, 1e-14)
        for _ in range(_DYKSTRA_MAX_SWEEPS):
            x_prev = x.copy()
            for i in range(rows.shape[0]):
                if sqn[i] == 0.0:
                    continue
                y = x + corr[i]
                excess = rows[i] @ y - offs[i]
                xi = y - (max(excess, 0.0) / sqn[i]) * rows[i]
                corr[i] = y - xi
                x = xi
            if (self.violation(k, x) <= tol
                    and np.linalg.norm(x - x_prev) <= tol * (1.0 + np.linalg.norm(x))):
                return x
        raise NoConvergence(
            f"Dykstra stalled at grid index k={k + 1}",
            residual=self.violation(k, x),
        )


def _per_eps(arr, grid: EpsGrid) -> np.ndarray:
    """Broadcast constant-in-eps data (d,) to (K, d)."""
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        arr = np.tile(arr, (grid.K, 1))
    if arr.ndim != 2 or arr.shape[0] != grid.K:
        raise DimMismatch("per-eps data must have shape (K, d)")
    return arr


def _check_compat(C: ConvexSetNet, u: GenVector):
    if not C.grid.same_as(u.grid):
        raise GridMismatch("set and vector on different grids")
    if C.dim != u.dim:
        raise DimMismatch(f"set dim {C.dim} != vector dim {u.dim}")


def project_point(C: ConvexSetNet, u: GenVector, policy: NumericPolicy) -> GenVector:
    """Net of componentwise Euclidean projections of u onto C."""
    _check_compat(C, u)
    if u.field_tag != "real":
        raise DimMismatch("projection implemented for real vector nets")
    out = np.empty_like(u.samples)
    for k in range(u.grid.K):
        out[k] = C.project_sample(k, u.samples[k], policy.tol_abs)
    return GenVector(u.grid, out, "real")


def characterization_residual(C: ConvexSetNet, u: GenVector, v: GenVector,
                              probes, policy: NumericPolicy) -> GenScalar:
    """max over probes w of Re<u_k - v_k, w_k - v_k>, per grid index.

    Nonpositive samples (up to tolerance) certify v = P_C(u) against the
    probe set; probes must lie in C per epsilon.
    """
    _check_compat(C, u)
    probes = list(probes)
    member_tol = 100.0 * policy.tol_abs
    for w in probes:
        _check_compat(C, w)
        for k in range(C.grid.K):
            x = w.samples[k]
            if not C.contains(k, x, member_tol * (1.0 + np.linalg.norm(x))):
                raise ProbeNotInSet(f"probe outside set at grid index k={k + 1}")
    res = np.full(C.grid.K, -np.inf)
    for w in probes:
        vals = np.sum((u.samples - v.samples) * np.conj(w.samples - v.samples), axis=1).real
        res = np.maximum(res, vals)
    if not probes:
        res = np.zeros(C.grid.K)
    return GenScalar(C.grid, res, "real")


def midpoint_closure_check(C: ConvexSetNet, pairs, policy: NumericPolicy) -> bool:
    """Do all midpoints (c1+c2)/2 lie in C per epsilon (membership to tol)?

    Pair elements are taken at face value (membership of the endpoints is
    not enforced), so handing in points of a nonconvex union exposes the
    failure of C + C <= 2C for whatever C's data actually describes.
    """
    member_tol = 100.0 * policy.tol_abs
    for c1, c2 in pairs:
        _check_compat(C, c1)
        _check_compat(C, c2)
        mid = 0.5 * (c1.samples + c2.samples)
        for k in range(C.grid.K):
            if not C.contains(k, mid[k], member_tol * (1.0 + np.linalg.norm(mid[k]))):
                return False
    return True
