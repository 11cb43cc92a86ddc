"""Finitely generated submodules: interleaved Gram-Schmidt and friends.

Orthogonalizing a generator set over the generalized scalars cannot
simply divide by norms — a generator may vanish on part of the grid and
dominate elsewhere.  The interleaved recursion partitions the grid into
blocks S_j on which the j-th generator has the largest sample norm
(earlier j wins ties, minus previously claimed blocks), projects the
remaining generators off the dominant one there, recurses, and sums the
per-block outputs.  Each output is then normalized to have idempotent
norm: unit length on its support set, zero off it.

The normalization is where the finite-scale analogue of the beta-type
pathology is caught: a norm net whose support (samples >= eps**m_inv)
is nonempty but dies out before the tail window has no certifiable
uniform scale — neither invertible nor zero with respect to any
tail-visible split — and raises MixedScaleGenerator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, GridMismatch, InvalidBasis, MixedScaleGenerator
from .gennum import EpsGrid, GenScalar, IndexSet, NumericPolicy, _tail_positions
from .hilbert import GenVector, inner, lincomb, rnorm
from .operators import BasicFunctional, BasicOperator

# residuals this far below the pre-projection sample norm are treated as
# exact zeros (they are rounding noise, not a smaller-scale component)
_FLUSH_REL = 1e-12


@dataclass(frozen=True)
class GeneratorSet:
    """A list of generators sharing one grid and dimension."""

    gens: tuple

    def __post_init__(self):
        gens = tuple(self.gens)
        if not gens:
            raise ValueError("need at least one generator")
        g0 = gens[0]
        for g in gens[1:]:
            if not g.grid.same_as(g0.grid):
                raise GridMismatch("generators on different grids")
            if g.dim != g0.dim:
                raise DimMismatch("generators of different dimensions")
        object.__setattr__(self, "gens", gens)

    @property
    def grid(self) -> EpsGrid:
        return self.gens[0].grid

    @property
    def dim(self) -> int:
        return self.gens[0].dim


@dataclass(frozen=True)
class OrthoBasis:
    """Mutually orthogonal vectors with idempotent norms e_S."""

    vecs: tuple
    supports: tuple

    def __post_init__(self):
        object.__setattr__(self, "vecs", tuple(self.vecs))
        object.__setattr__(self, "supports", tuple(self.supports))
        if len(self.vecs) != len(self.supports):
            raise InvalidBasis("one support per basis vector required")

    def __len__(self) -> int:
        return len(self.vecs)

    def validate(self, policy: NumericPolicy):
        """Check the orthogonality and idempotent-norm invariants."""
        for j, (w, S) in enumerate(zip(self.vecs, self.supports)):
            norms = rnorm(w).samples
            mask = S.mask()
            scale = 1.0
            if np.any(np.abs(norms[mask] - 1.0) > 100 * policy.tol_abs):
                raise InvalidBasis(f"vector {j} is not unit length on its support")
            if np.any(norms[~mask] > 100 * policy.tol_abs):
                raise InvalidBasis(f"vector {j} is nonzero off its support")
            for i in range(j):
                ip = np.abs(inner(self.vecs[i], w).samples)
                if np.any(ip > 100 * policy.tol_abs * scale):
                    raise InvalidBasis(f"vectors {i} and {j} are not orthogonal")

    def to_json(self) -> dict:
        return {
            "vectors": [w.to_json() for w in self.vecs],
            "supports": [sorted(S.members) for S in self.supports],
        }


def idempotent_normalize(u: GenVector, policy: NumericPolicy):
    """Rescale u to unit sample norm on its support set.

    The support is the tail-extended pointwise set
    S = {k : ||u_k|| >= eps_k**m_inv}; on S the result has unit sample
    norm, off S it is zero, and u = rnorm(u) * w up to negligibility.

    Raises MixedScaleGenerator when the norm net has no uniform scale:
    either a tail sample falls in the open gap between the
    invertibility and negligibility thresholds (possible only when
    q_neg > m_inv), or the support is nonempty yet misses the tail
    window entirely, so no invertible-or-zero split is certifiable on
    the asymptotic window (the beta pathology at finite scale).

    Returns (w, S).
    """
    norms = rnorm(u).samples
    eps = u.grid.values
    support = norms >= eps ** policy.m_inv
    tail = _tail_positions(u.grid, policy)
    in_gap = (~support[tail]) & (norms[tail] > eps[tail] ** policy.q_neg)
    if np.any(in_gap):
        raise MixedScaleGenerator(
            (tail[in_gap] + 1).tolist(),
            "tail samples fall between the invertibility and negligibility scales",
        )
    if np.any(support) and not np.any(support[tail]):
        raise MixedScaleGenerator(
            (np.nonzero(support)[0] + 1).tolist(),
            "norm support dies out before the tail window (no uniform scale)",
        )
    scale = np.where(support, norms, np.inf)
    w = GenVector(u.grid, u.samples / scale[:, None], u.field_tag)
    return w, IndexSet.from_mask(support)


def _gs_at_point(vectors, order, eps_k, m_inv):
    """The interleaved recursion at one grid point.

    ``vectors`` maps generator index -> current sample vector.  Picks
    the dominant generator (largest norm, lowest index on ties), keeps
    it as its own output, projects the others off it, and recurses on
    what is left.  A dominant norm below eps_k**m_inv means every
    remaining generator is below the invertibility scale here: they are
    all treated as zero at this point (their supports exclude it).
    """
    out = {}
    remaining = list(order)
    vecs = dict(vectors)
    threshold = eps_k ** m_inv
    while remaining:
        norms = [np.linalg.norm(vecs[j]) for j in remaining]
        best = int(np.argmax(norms))  # argmax returns the first (lowest j) on ties
        dom = remaining[best]
        dom_norm = norms[best]
        if dom_norm < threshold:
            for j in remaining:
                out[j] = np.zeros_like(vecs[j])
            return out
        v = vecs[dom]
        out[dom] = v
        remaining.remove(dom)
        vv = np.real(np.sum(v * np.conj(v)))
        for j in remaining:
            coeff = np.sum(vecs[j] * np.conj(v)) / vv
            before = np.linalg.norm(vecs[j])
            res = vecs[j] - coeff * v
            if np.linalg.norm(res) <= _FLUSH_REL * before:
                res = np.zeros_like(res)
            vecs[j] = res
    return out


def interleaved_gram_schmidt(g: GeneratorSet, policy: NumericPolicy) -> OrthoBasis:
    """Orthogonalize a generator set blockwise across the grid.

    Implements the grid-pointwise recursion described in the module
    docstring and idempotent-normalizes each assembled output; outputs
    with empty support (dropped-to-zero generators) are discarded, which
    also performs the reduction to at most dim generators.  The result
    spans the same submodule: every input generator reconstructs from
    the output basis sample by sample.

    Raises MixedScaleGenerator if any assembled output has no uniform
    scale (see idempotent_normalize).
    """
    m = len(g.gens)
    grid = g.grid
    order = list(range(m))
    raw = np.zeros((m, grid.K, g.dim),
                   dtype=complex if any(v.field_tag == "complex" for v in g.gens) else float)
    for k in range(grid.K):
        at_k = {j: g.gens[j].samples[k] for j in order}
        out = _gs_at_point(at_k, order, grid.values[k], policy.m_inv)
        for j in order:
            raw[j, k] = out[j]
    vecs, supports = [], []
    tag = "complex" if np.iscomplexobj(raw) else "real"
    for j in order:
        w, S = idempotent_normalize(GenVector(grid, raw[j], tag), policy)
        if len(S) == 0:
            continue
        vecs.append(w)
        supports.append(S)
    return OrthoBasis(vecs, supports)


def project_submodule(B: OrthoBasis, v: GenVector) -> GenVector:
    """P_M(v) = sum_j <v, w_j> w_j for the submodule M spanned by B."""
    if not len(B):
        return GenVector.zero(v.grid, v.dim, v.field_tag)
    coeffs = [inner(v, w) for w in B.vecs]
    return lincomb(coeffs, list(B.vecs))


def submodule_projection_operator(B: OrthoBasis, grid: EpsGrid, dim: int) -> BasicOperator:
    """Materialize P_M as a matrix net sum_j w_j w_j^*."""
    tag = "complex" if any(w.field_tag == "complex" for w in B.vecs) else "real"
    P = np.zeros((grid.K, dim, dim), dtype=complex if tag == "complex" else float)
    for w in B.vecs:
        P += np.einsum("ki,kj->kij", w.samples, np.conj(w.samples))
    return BasicOperator(grid, P, tag)


@dataclass(frozen=True)
class SubmoduleClassification:
    closed_edged: bool
    basis: OrthoBasis | None
    diagnostics: dict

    def to_json(self) -> dict:
        out = {"closed_edged": self.closed_edged, "diagnostics": self.diagnostics}
        if self.basis is not None:
            out["basis"] = self.basis.to_json()
        return out


def classify_submodule(g: GeneratorSet, policy: NumericPolicy) -> SubmoduleClassification:
    """Closed-and-edged verdict via Gram-Schmidt plus normalization.

    The verdict is policy-relative: closed_edged is true iff every
    orthogonalized generator normalizes to an idempotent norm; a
    MixedScaleGenerator failure is folded into the diagnostics instead
    of raised.
    """
    try:
        basis = interleaved_gram_schmidt(g, policy)
    except MixedScaleGenerator as err:
        return SubmoduleClassification(
            closed_edged=False,
            basis=None,
            diagnostics={"offending_indices": err.indices, "reason": str(err)},
        )
    return SubmoduleClassification(closed_edged=True, basis=basis, diagnostics={})


def extend_functional(values, B: OrthoBasis) -> BasicFunctional:
    """Extend f, given by its values on the basis, to u -> f(P_M(u)).

    ``values`` lists one GenScalar f(w_j) per basis vector; the
    extension's covector net is sum_j f_j,k * conj(w_j,k), so it agrees
    with f on the submodule and kills its orthogonal complement.
    """
    values = list(values)
    if len(values) != len(B):
        raise InvalidBasis(f"{len(values)} values for {len(B)} basis vectors")
    if not values:
        raise InvalidBasis("empty basis cannot carry a functional")
    grid = B.vecs[0].grid
    dim = B.vecs[0].dim
    tag = "real"
    if any(w.field_tag == "complex" for w in B.vecs) or any(
            f.field_tag == "complex" for f in values):
        tag = "complex"
    rows = np.zeros((grid.K, dim), dtype=complex if tag == "complex" else float)
    for f_j, w in zip(values, B.vecs):
        rows += f_j.samples[:, None] * np.conj(w.samples)
    return BasicFunctional(grid, rows, tag)
