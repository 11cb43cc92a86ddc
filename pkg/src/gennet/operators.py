"""Basic linear operators and functionals as matrix/covector nets.

A basic operator acts componentwise, (Tu)_k = T_k u_k, and its adjoint
is the net of conjugate transposes.  The operator norm net collects the
per-sample spectral norms (largest singular values); a basic functional
is represented exactly by the conjugate of its covector net, with sample
norms equal to the per-sample functional norms.  Structural flags
(isometric, unitary, self-adjoint, projection) are decided by testing
the defining matrix identity's defect net for negligibility — with a
floating-point floor, since the defects of computed nets carry rounding
noise far above eps_k**q_neg at the small end of the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimMismatch, GridMismatch
from .gennum import EpsGrid, GenScalar, NumericPolicy, _tail_positions
from .hilbert import GenVector

_REAL = "real"
_COMPLEX = "complex"


@dataclass(frozen=True)
class BasicOperator:
    """A net of d_out x d_in matrices over a shared EpsGrid."""

    grid: EpsGrid
    samples: np.ndarray  # (K, d_out, d_in)
    field_tag: str = field(default=_REAL)

    def __post_init__(self):
        arr = np.asarray(self.samples)
        if arr.ndim != 3 or arr.shape[0] != self.grid.K:
            raise ValueError("samples must have shape (K, d_out, d_in)")
        if self.field_tag == _REAL:
            if np.iscomplexobj(arr):
                if np.any(arr.imag != 0.0):
                    raise ValueError("real-tagged operator has imaginary entries")
                arr = arr.real
            arr = arr.astype(float, copy=True)
        else:
            arr = arr.astype(complex, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def dims(self):
        return (int(self.samples.shape[1]), int(self.samples.shape[2]))

    @property
    def is_square(self) -> bool:
        return self.samples.shape[1] == self.samples.shape[2]

    @classmethod
    def constant(cls, matrix, grid: EpsGrid) -> "BasicOperator":
        matrix = np.asarray(matrix)
        tag = _COMPLEX if np.iscomplexobj(matrix) else _REAL
        return cls(grid, np.tile(matrix, (grid.K, 1, 1)), tag)

    @classmethod
    def identity(cls, grid: EpsGrid, dim: int) -> "BasicOperator":
        return cls.constant(np.eye(dim), grid)

    def compose(self, other: "BasicOperator") -> "BasicOperator":
        """Net of matrix products self_k @ other_k."""
        if not self.grid.same_as(other.grid):
            raise GridMismatch("operators on different grids")
        if self.dims[1] != other.dims[0]:
            raise DimMismatch(f"cannot compose {self.dims} with {other.dims}")
        tag = _COMPLEX if _COMPLEX in (self.field_tag, other.field_tag) else _REAL
        return BasicOperator(self.grid, self.samples @ other.samples, tag)

    def __sub__(self, other: "BasicOperator") -> "BasicOperator":
        if not self.grid.same_as(other.grid):
            raise GridMismatch("operators on different grids")
        if self.dims != other.dims:
            raise DimMismatch(f"dims {self.dims} != {other.dims}")
        tag = _COMPLEX if _COMPLEX in (self.field_tag, other.field_tag) else _REAL
        return BasicOperator(self.grid, self.samples - other.samples, tag)

    def to_json(self) -> dict:
        d_out, d_in = self.dims
        if self.field_tag == _COMPLEX:
            samples = [[[[z.real, z.imag] for z in row] for row in mat]
                       for mat in self.samples]
        else:
            samples = self.samples.tolist()
        return {"K": self.grid.K, "d_out": d_out, "d_in": d_in,
                "field": self.field_tag, "samples": samples}


@dataclass(frozen=True)
class BasicFunctional:
    """A net of covectors: u |-> row_k . u_k per sample."""

    grid: EpsGrid
    samples: np.ndarray  # (K, d)
    field_tag: str = field(default=_REAL)

    def __post_init__(self):
        arr = np.asarray(self.samples)
        if arr.ndim != 2 or arr.shape[0] != self.grid.K:
            raise ValueError("samples must have shape (K, d)")
        if self.field_tag == _REAL:
            arr = arr.astype(float, copy=True)
        else:
            arr = arr.astype(complex, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def dim(self) -> int:
        return int(self.samples.shape[1])

    def __call__(self, u: GenVector) -> GenScalar:
        if not self.grid.same_as(u.grid):
            raise GridMismatch("functional and vector on different grids")
        if self.dim != u.dim:
            raise DimMismatch(f"functional dim {self.dim} != vector dim {u.dim}")
        vals = np.sum(self.samples * u.samples, axis=1)
        tag = _COMPLEX if _COMPLEX in (self.field_tag, u.field_tag) else _REAL
        if tag == _REAL:
            vals = vals.real
        return GenScalar(self.grid, vals, tag)


def apply(T: BasicOperator, u: GenVector) -> GenVector:
    """Componentwise matrix-vector product (Tu)_k = T_k u_k."""
    if not T.grid.same_as(u.grid):
        raise GridMismatch("operator and vector on different grids")
    if T.dims[1] != u.dim:
        raise DimMismatch(f"operator expects dim {T.dims[1]}, got {u.dim}")
    out = np.einsum("kij,kj->ki", T.samples, u.samples)
    tag = _COMPLEX if _COMPLEX in (T.field_tag, u.field_tag) else _REAL
    if tag == _REAL:
        out = out.real
    return GenVector(u.grid, out, tag)


def adjoint(T: BasicOperator) -> BasicOperator:
    """Net of conjugate transposes: <Tu, v> = <u, T*v> per sample."""
    return BasicOperator(T.grid, np.conj(np.transpose(T.samples, (0, 2, 1))),
                         T.field_tag)


def op_norm_net(T: BasicOperator) -> GenScalar:
    """Per-sample spectral norm (largest singular value)."""
    svals = np.linalg.svd(T.samples, compute_uv=False)
    return GenScalar(T.grid, svals[:, 0] if svals.ndim == 2 else svals, _REAL)


def riesz_representer(f: BasicFunctional) -> GenVector:
    """The vector net c with f(v) = <v, c> and ||c_k|| = ||f_k|| exactly."""
    return GenVector(f.grid, np.conj(f.samples), f.field_tag)


def defect_threshold(grid: EpsGrid, policy: NumericPolicy, scale: float = 1.0) -> np.ndarray:
    """Tail thresholds for negligibility of *computed* nets.

    max(eps_k**q_neg, tol_abs * scale): the exact negligibility bound,
    floored at the floating tolerance so that rounding noise on an
    O(scale) computation does not defeat an identity that holds in exact
    arithmetic.
    """
    pos = _tail_positions(grid, policy)
    return np.maximum(grid.values[pos] ** policy.q_neg, policy.tol_abs * scale)


def _defect_negligible(net: np.ndarray, grid: EpsGrid, policy: NumericPolicy,
                       scale: float) -> bool:
    """Entrywise negligibility of a (K, ...) defect net on the tail."""
    pos = _tail_positions(grid, policy)
    mags = np.abs(net[pos]).reshape(policy.tail, -1).max(axis=1)
    return bool(np.all(mags <= defect_threshold(grid, policy, scale)))


def classify_operator(T: BasicOperator, policy: NumericPolicy) -> dict:
    """Structural flags from defining identities on defect nets.

    isometric    T*T - I negligible
    unitary      isometric and TT* - I negligible
    self_adjoint T - T* negligible
    projection   self_adjoint and TT - T negligible

    A rectangular operator may still be isometric (orthonormal columns);
    the unitary/self-adjoint/projection flags are properties only square
    matrices can have and report False for non-square dims.
    """
    d_out, d_in = T.dims
    Ts = adjoint(T)
    scale = float(max(1.0, np.max(np.abs(T.samples)) ** 2))
    eye_in = np.eye(d_in)
    tst = Ts.compose(T).samples - eye_in
    flags = {"isometric": _defect_negligible(tst, T.grid, policy, scale)}
    if not T.is_square:
        for name in ("unitary", "self_adjoint", "projection"):
            flags[name] = False
        return flags
    tts = T.compose(Ts).samples - eye_in
    flags["unitary"] = flags["isometric"] and _defect_negligible(tts, T.grid, policy, scale)
    sa = T.samples - Ts.samples
    flags["self_adjoint"] = _defect_negligible(sa, T.grid, policy, scale)
    idem = T.compose(T).samples - T.samples
    flags["projection"] = flags["self_adjoint"] and _defect_negligible(
        idem, T.grid, policy, scale)
    return flags
