"""Controllability machinery: Lie closure and minimal toggling subspaces.

`find_lie_algebra` computes an orthonormal basis of the smallest real Lie
algebra containing i*{generators}; `find_c_subspace` computes the minimal
real operator subspace containing every nested commutator of algebra
elements with a perturbation, which is also the span swept out by
conjugating the perturbation with the generated group.

Linear independence is decided by the rank of the stacked vectorized
operators, maintained incrementally: a candidate is independent when its
residual after projecting onto the orthonormalized row space exceeds the
singular-value threshold max(dims) * eps_machine * sigma_max (here
sigma_max = 1 because rows are unit-normalized).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .opcore import Operator, OperatorBasis, gram_schmidt

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class LieAlgebraBasis:
    basis: OperatorBasis           # anti-Hermitian elements
    generator_count: int
    closure_depth: int             # nesting rounds performed

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def n_qubits(self) -> int:
        return self.basis.n_qubits


@dataclass(frozen=True)
class CSubspace:
    basis: OperatorBasis           # Hermitian elements
    pert_label: str = ""

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def n_qubits(self) -> int:
        return self.basis.n_qubits


class _RowSpace:
    """Incrementally orthonormalized span of vectorized operators."""

    def __init__(self, length: int, tol: float):
        self.q = np.zeros((0, length), dtype=complex)
        self.tol = tol
        self.thresh = max(1, length) * _EPS  # rank threshold at sigma_max = 1

    def try_add(self, m: np.ndarray) -> bool:
        """Add the operator if independent; return whether it was added."""
        v = m.ravel().astype(complex)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return False
        v = v / nv
        for _ in range(2):
            if len(self.q):
                v = v - self.q.conj() @ v @ self.q
        r = np.linalg.norm(v)
        if r <= max(self.tol, self.thresh):
            return False
        self.q = np.vstack([self.q, v / r])
        return True


def _traceless(m: np.ndarray) -> np.ndarray:
    d = m.shape[0]
    return m - (np.trace(m) / d) * np.eye(d)


def find_lie_algebra(generators, tol: float = 1e-7) -> LieAlgebraBasis:
    """Orthonormal basis of the real Lie algebra generated by i*{H_i}.

    Round-based closure: each round commutes the newest elements with the
    seed set only, appending independent results, and stops once a round
    adds nothing or the 2^{2N}-1 dimension cap is reached.  Identity
    components of the generators are stripped first; they commute with
    everything and act on states only as a global phase.
    """
    generators = list(generators)
    if not generators:
        raise ValueError("empty generator list")
    n = generators[0].n_qubits
    if any(g.n_qubits != n for g in generators):
        raise ValueError("generators on different qubit counts")
    cap = 4 ** n - 1

    rows = _RowSpace(4 ** n, tol)
    seeds: list[np.ndarray] = []
    elements: list[np.ndarray] = []
    for g in generators:
        m = 1j * _traceless(np.asarray(g.entries))
        seeds.append(m)
        if rows.try_add(m):
            elements.append(m)

    current = list(elements)
    depth = 0
    while current and len(elements) < cap:
        new: list[np.ndarray] = []
        for h in current:
            for g in seeds:
                c = h @ g - g @ h
                if rows.try_add(c):
                    new.append(c)
                    if len(elements) + len(new) >= cap:
                        break
            else:
                continue
            break
        elements.extend(new)
        current = new
        depth += 1

    ops = [Operator(m, n) for m in elements]
    basis = gram_schmidt(ops, tol=1e-12, label="g_pri")
    return LieAlgebraBasis(basis, generator_count=len(generators), closure_depth=depth)


def find_c_subspace(
    g: LieAlgebraBasis,
    h_pert: Operator,
    tol: float = 1e-7,
    extra_seeds: tuple[Operator, ...] = (),
    label: str = "",
) -> CSubspace:
    """Orthonormal basis of span{ [g_1, ... [g_L, H_pert] ...], L >= 0 }.

    The first returned element is parallel to H_pert (Gram-Schmidt keeps
    the seed direction).  ``extra_seeds`` extends the computation to a
    time-dependent perturbation: the subspace then contains the span of
    all listed operators and their nested commutators.
    """
    if not h_pert.is_hermitian(1e-8):
        raise ValueError("H_pert must be Hermitian")
    n = h_pert.n_qubits
    if g.n_qubits != n:
        raise ValueError("algebra and perturbation dimension mismatch")
    cap = 4 ** n
    gstack = g.basis.stack()

    rows = _RowSpace(4 ** n, tol)
    elements: list[np.ndarray] = []
    for seed in (h_pert, *extra_seeds):
        m = np.asarray(seed.entries)
        if rows.try_add(m):
            elements.append(m)

    current = list(elements)
    while current and len(elements) < cap:
        new: list[np.ndarray] = []
        for b in current:
            for e in gstack:
                c = e @ b - b @ e
                if rows.try_add(c):
                    new.append(c)
                    if len(elements) + len(new) >= cap:
                        break
            else:
                continue
            break
        elements.extend(new)
        current = new

    ops = [Operator(m, n) for m in elements]
    basis = gram_schmidt(ops, tol=1e-12, label=label or "C")
    return CSubspace(basis, pert_label=label)


def contains(space, x: Operator, tol: float = 1e-7) -> tuple[bool, float]:
    """Membership test by projection; returns (in_span, residual norm)."""
    basis = space.basis if hasattr(space, "basis") else space
    stack = basis.stack()
    m = np.asarray(x.entries)
    if stack.shape[1] != m.shape[0]:
        raise ValueError("dimension mismatch")
    c = np.einsum("aij,ij->a", stack.conj(), m)
    resid = float(np.linalg.norm(m - np.tensordot(c, stack, axes=(0, 0))))
    scale = max(float(np.linalg.norm(m)), 1e-300)
    return resid <= tol * scale, resid
