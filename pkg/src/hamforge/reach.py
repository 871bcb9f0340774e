"""Achievable-set characterization for zeroth-order average Hamiltonians.

The reachable set of time-averaged toggled perturbations is the convex
hull of conjugated perturbation vectors.  This module samples that hull
(Haar via QR for full unitary algebras, a group random walk otherwise),
rotates it so the target direction is the first coordinate, and bounds
the achievable scaling factor range [s-, s+] with two linear programs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .liealg import CSubspace, LieAlgebraBasis, contains
from .opcore import Operator, SubspaceError, expm_herm_generator, vectorize


# ---------------------------------------------------------------------------
# random unitaries

def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary from a QR-decomposed complex Ginibre matrix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    lam = d / np.abs(d)
    return q * lam


def random_unitary_qr(dim: int, rng: np.random.Generator) -> Operator:
    if dim < 1:
        raise ValueError("dim must be >= 1")
    n = max(int(round(np.log2(dim))), 0)
    u = haar_unitary(dim, rng)
    if 2 ** n != dim:
        raise ValueError("operator dimensions must be powers of two")
    return Operator(u, max(n, 1))


def _expm_antiherm_raw(g: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(1j * g)
    return (v * np.exp(-1j * w)) @ v.conj().T


def _walk_unitaries(
    gstack: np.ndarray,
    n_burn: int,
    n_thin: int,
    n_sample: int,
    rng: np.random.Generator,
):
    """Raw random-walk samples on e^{g_pri}: left-multiply exp(sum p_h h)."""
    x = np.eye(gstack.shape[-1], dtype=complex)

    def move(x):
        p = rng.standard_normal(gstack.shape[0])
        return _expm_antiherm_raw(np.tensordot(p, gstack, axes=(0, 0))) @ x

    for _ in range(n_burn):
        x = move(x)
    out = []
    for _ in range(n_sample):
        for _ in range(n_thin):
            x = move(x)
        out.append(x)
    return out


def random_unitary_walk(
    g: LieAlgebraBasis,
    n_burn: int,
    n_thin: int,
    n_sample: int,
    rng: np.random.Generator,
) -> list[Operator]:
    mats = _walk_unitaries(g.basis.stack(), n_burn, n_thin, n_sample, rng)
    return [Operator(m, g.n_qubits) for m in mats]


# ---------------------------------------------------------------------------
# linear programming (dense two-phase simplex, Bland's rule)

@dataclass(frozen=True)
class LPResult:
    status: str                    # 'optimal' | 'infeasible' | 'unbounded'
    x: np.ndarray | None = None
    value: float | None = None


def _pivot(t: np.ndarray, basis: list[int], row: int, col: int):
    t[row] /= t[row, col]
    for i in range(t.shape[0]):
        if i != row and t[i, col] != 0.0:
            t[i] -= t[i, col] * t[row]
    basis[row] = col


def _run_phase(t: np.ndarray, basis: list[int], ncols: int, tol: float) -> str:
    """Maximize with the reduced-cost row stored last; Bland's rule."""
    m = t.shape[0] - 1
    for _ in range(50000):
        enter = -1
        for j in range(ncols):
            if t[-1, j] > tol:
                enter = j
                break
        if enter < 0:
            return "optimal"
        leave, best, best_var = -1, np.inf, np.inf
        for i in range(m):
            a = t[i, enter]
            if a > tol:
                ratio = t[i, -1] / a
                if ratio < best - 1e-12 or (abs(ratio - best) <= 1e-12 and basis[i] < best_var):
                    leave, best, best_var = i, ratio, basis[i]
        if leave < 0:
            return "unbounded"
        _pivot(t, basis, leave, enter)
    raise RuntimeError("simplex failed to terminate")


def lp_solve(
    objective: np.ndarray,
    eq_matrix: np.ndarray,
    eq_rhs: np.ndarray,
    nonneg: bool = True,
    box: np.ndarray | None = None,
    tol: float = 1e-9,
) -> LPResult:
    """Maximize objective @ x subject to eq_matrix @ x = eq_rhs, x >= 0.

    ``box`` optionally adds upper bounds x_i <= box_i (slack rows).  For
    free variables (nonneg=False) each x_i is split into a difference of
    two nonnegative parts.  Infeasibility is certified by a nonzero
    phase-1 optimum; unbounded rays are reported distinctly.
    """
    c0 = np.asarray(objective, dtype=float)
    a = np.atleast_2d(np.asarray(eq_matrix, dtype=float)).copy()
    b = np.asarray(eq_rhs, dtype=float).copy()
    nx = c0.size
    if a.shape != (b.size, nx):
        raise ValueError("inconsistent LP shapes")
    split = not nonneg
    if split and box is not None:
        raise ValueError("box bounds require nonneg variables")
    c = c0.copy()
    if split:
        a = np.hstack([a, -a])
        c = np.concatenate([c, -c])
    if box is not None:
        ub = np.asarray(box, dtype=float)
        a = np.vstack(
            [
                np.hstack([a, np.zeros((a.shape[0], nx))]),
                np.hstack([np.eye(nx), np.eye(nx)]),
            ]
        )
        b = np.concatenate([b, ub])
        c = np.concatenate([c, np.zeros(nx)])
    nvar = a.shape[1]
    m = a.shape[0]
    neg = b < 0
    a[neg] *= -1.0
    b[neg] *= -1.0

    # phase 1: artificial basis, maximize -sum(artificials)
    t = np.zeros((m + 1, nvar + m + 1))
    t[:m, :nvar] = a
    t[:m, nvar : nvar + m] = np.eye(m)
    t[:m, -1] = b
    basis = list(range(nvar, nvar + m))
    t[-1, :nvar] = a.sum(axis=0)
    t[-1, -1] = b.sum()
    status = _run_phase(t, basis, nvar, tol)
    if status != "optimal" or t[-1, -1] > 1e-7 * max(1.0, np.abs(b).sum()):
        return LPResult("infeasible")
    # drive remaining artificials out of the basis (redundant rows stay inert)
    for i in range(m):
        if basis[i] >= nvar:
            j = next((jj for jj in range(nvar) if abs(t[i, jj]) > tol), None)
            if j is not None:
                _pivot(t, basis, i, j)

    # phase 2 with the real objective
    t2 = np.zeros((m + 1, nvar + 1))
    t2[:m, :nvar] = t[:m, :nvar]
    t2[:m, -1] = t[:m, -1]
    t2[-1, :nvar] = c
    for i in range(m):
        if basis[i] < nvar and t2[-1, basis[i]] != 0.0:
            t2[-1] -= t2[-1, basis[i]] * t2[i]
    status = _run_phase(t2, basis, nvar, tol)
    if status == "unbounded":
        return LPResult("unbounded")
    xfull = np.zeros(nvar)
    for i in range(m):
        if basis[i] < nvar:
            xfull[basis[i]] = t2[i, -1]
    if box is not None:
        xfull = xfull[: nvar - nx]
    x = (xfull[:nx] - xfull[nx:]) if split else xfull[:nx]
    return LPResult("optimal", x, float(c0 @ x))


# ---------------------------------------------------------------------------
# vertex sets and scale ranges

@dataclass(frozen=True)
class VertexSet:
    """Transformed conjugation vertices v^j = T (+)_w |u_j^dag H_w u_j>>_w."""

    vertices: np.ndarray          # (J, m_total), unit rows
    transform: np.ndarray         # (m_total, m_total) orthogonal
    target_norm: float
    sample_count: int
    component_norms: tuple = ()   # per-component ||H_pert^w|| before joint scaling


@dataclass(frozen=True)
class ScaleRange:
    s_minus: float
    s_plus: float
    achievable: bool
    samples_used: int
    convergence_history: list = field(default_factory=list)


def _completion_from_direction(t0: np.ndarray) -> np.ndarray:
    """Orthogonal matrix whose first row is t0 (unit), rest Gram-Schmidt."""
    m = t0.size
    rows = [t0]
    for k in range(m):
        v = np.zeros(m)
        v[k] = 1.0
        for u in rows:
            v = v - (u @ v) * u
        n = np.linalg.norm(v)
        if n > 1e-10:
            rows.append(v / n)
        if len(rows) == m:
            break
    return np.stack(rows)


def _pick_sampler(g: LieAlgebraBasis, sampler: str) -> str:
    if sampler != "auto":
        return sampler
    d = 2 ** g.n_qubits
    return "qr" if g.dim >= d * d - 1 else "walk"


def sample_vertices(
    g: LieAlgebraBasis,
    components,
    j_samples: int,
    sampler: str = "auto",
    rng: np.random.Generator | None = None,
    n_burn: int = 100,
    n_thin: int = 10,
) -> VertexSet:
    """Build the vertex set for a list of (H_pert_w, C_w, H_target_w)."""
    rng = rng or np.random.default_rng()
    mode = _pick_sampler(g, sampler)
    stacks = [c.basis.stack() for (_, c, _) in components]
    perts = [np.asarray(vectorize(h, c.basis), dtype=float) for (h, c, _) in components]
    targets = []
    for (_, c, ht) in components:
        if ht is None:
            targets.append(np.zeros(len(c.basis)))
        else:
            ok, resid = contains(c, ht, 1e-7)
            if not ok:
                raise SubspaceError(
                    f"target outside subspace (residual {resid:.3e})"
                )
            targets.append(np.asarray(vectorize(ht, c.basis), dtype=float))
    pcat = np.concatenate(perts)
    alpha = 1.0 / np.linalg.norm(pcat)
    tcat = np.concatenate(targets)
    tnorm = np.linalg.norm(tcat)
    if tnorm == 0.0:
        raise ValueError("all-zero target; nothing to scale against")
    tmat = _completion_from_direction(tcat / tnorm)

    dim = 2 ** g.n_qubits
    if mode == "qr":
        us = [haar_unitary(dim, rng) for _ in range(j_samples)]
    else:
        us = _walk_unitaries(g.basis.stack(), n_burn, n_thin, j_samples, rng)
    hmats = [np.asarray(h.entries) for (h, _, _) in components]
    rows = np.empty((j_samples, tcat.size))
    for j, u in enumerate(us):
        parts = []
        for w, stack in enumerate(stacks):
            m = u.conj().T @ hmats[w] @ u
            coeff = np.einsum("aij,ij->a", stack.conj(), m)
            resid = np.linalg.norm(m - np.tensordot(coeff, stack, axes=(0, 0)))
            if resid > 1e-6 * max(np.linalg.norm(m), 1e-300):
                raise SubspaceError(
                    "conjugated perturbation leaves its subspace; "
                    "the sampler wandered outside e^{g_pri}"
                )
            parts.append(coeff.real)
        rows[j] = tmat @ (alpha * np.concatenate(parts))
    return VertexSet(
        rows, tmat, tnorm, j_samples,
        tuple(float(np.linalg.norm(v)) for v in perts),
    )


def _scale_lps(vertices: np.ndarray, tol: float = 1e-9):
    """Solve LP+ / LP- on the current vertex rows; None if infeasible."""
    j, m = vertices.shape
    v1 = vertices[:, 0]
    ones = np.ones(j)
    a_rows = [np.concatenate([ones, [0.0, 0.0]])]
    b = [1.0]
    for k in range(1, m):
        a_rows.append(np.concatenate([vertices[:, k], [0.0, 0.0]]))
        b.append(0.0)
    a_rows.append(np.concatenate([v1, [1.0, 0.0]]))   # v1.x + s1 = 1
    b.append(1.0)
    a_rows.append(np.concatenate([v1, [0.0, -1.0]]))  # v1.x - s2 = -1
    b.append(-1.0)
    a = np.stack(a_rows)
    out = []
    for sign in (+1.0, -1.0):
        c = np.concatenate([sign * v1, [0.0, 0.0]])
        res = lp_solve(c, a, np.asarray(b), tol=tol)
        out.append(sign * res.value if res.status == "optimal" else None)
    return out  # [s_plus, s_minus]


def find_scale_range(
    g: LieAlgebraBasis,
    components,
    j_samples: int,
    sampler: str = "auto",
    rng: np.random.Generator | None = None,
    batch: int = 200,
    converge_tol: float = 1e-3,
    n_burn: int = 100,
    n_thin: int = 10,
    measure_component: int | None = None,
) -> ScaleRange:
    """Range of achievable scaling factors along the (normalized) target.

    Vertices accumulate in batches; the search stops early once both ends
    of the range move less than ``converge_tol`` over the last batch, and
    is capped at ``j_samples``.  Both LPs infeasible means the target
    direction is not achievable at any scale.

    By default s is measured against the jointly normalized direct-sum
    perturbation.  ``measure_component`` (0-based index) instead reports
    s relative to that component's own norm, the natural convention when
    the other components are decoupled (their targets zero); with it the
    decoupling corollary reads as equality of s-ranges.
    """
    rng = rng or np.random.default_rng()
    mtot = sum(len(c.basis) for (_, c, _) in components)
    if j_samples < mtot + 1:
        import warnings

        warnings.warn("fewer samples than subspace dimension + 1: degenerate hull")
    vs = sample_vertices(g, components, j_samples, sampler, rng, n_burn, n_thin)
    history = []
    s_plus = s_minus = None
    used = 0
    for k in range(batch, j_samples + batch, batch):
        k = min(k, j_samples)
        if k == used:
            break
        cur = _scale_lps(vs.vertices[:k])
        history.append((k, cur[1], cur[0]))
        prev_plus, prev_minus = s_plus, s_minus
        s_plus, s_minus = cur[0], cur[1]
        used = k
        if (
            prev_plus is not None
            and s_plus is not None
            and prev_minus is not None
            and s_minus is not None
            and abs(s_plus - prev_plus) < converge_tol
            and abs(s_minus - prev_minus) < converge_tol
            and k >= mtot + 1
        ):
            break
    if s_plus is None and s_minus is None:
        return ScaleRange(np.nan, np.nan, False, used, history)
    rescale = 1.0
    if measure_component is not None:
        joint = float(np.sqrt(sum(n * n for n in vs.component_norms)))
        rescale = joint / vs.component_norms[measure_component]
        history = [(k, sm * rescale, sp * rescale) for (k, sm, sp) in history]
    return ScaleRange(float(s_minus) * rescale, float(s_plus) * rescale, True, used, history)


def hull_volume_diagnostic(vertices: VertexSet, batch: int):
    """Convex-hull volume of the first k vertices for k = batch, 2batch, ...

    A saturating volume indicates the sampler has covered the reachable
    set.  Degenerate (flat) point sets report volume 0.  Refuses subspace
    dimensions above 6 where exact hulls are combinatorially infeasible;
    use the range-stabilization history of find_scale_range instead.
    """
    pts = vertices.vertices
    dim = pts.shape[1]
    if dim > 6:
        raise ValueError(
            "hull volume limited to subspace dimension <= 6; "
            "use find_scale_range convergence_history for larger spaces"
        )
    from scipy.spatial import ConvexHull, QhullError

    out = []
    for k in range(batch, pts.shape[0] + batch, batch):
        k = min(k, pts.shape[0])
        if k <= dim:
            out.append((k, 0.0))
        else:
            try:
                out.append((k, float(ConvexHull(pts[:k]).volume)))
            except QhullError:
                out.append((k, 0.0))
        if k == pts.shape[0]:
            break
    return out
