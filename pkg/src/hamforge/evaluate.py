"""Sequence evaluation: exact propagators, Monte-Carlo averaged channels,
fidelities, orthogonality, relaxation, landscapes and stroboscopic runs.

A `ParameterDistribution` attaches to either a control-model parameter
(including the multiplicative drive amplitude) or an internal Hamiltonian
term coefficient.  Each Monte-Carlo draw fixes one isochromat; its exact
unitary is turned into a Pauli transfer matrix, and the sample mean of
those orthogonal matrices is the average CPTP map.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .controlsys import ControlModel, ControlSequence
from .opcore import Operator

__all__ = [
    "ParameterDistribution",
    "Superoperator",
    "LandscapeGrid",
    "EvaluationSetup",
    "pauli_basis_stack",
    "ptm",
    "simulate_total_unitary",
    "overlap_fidelity",
    "average_cptp",
    "average_gate_fidelity",
    "orthogonality",
    "apply_depolarizing",
    "landscape",
    "stroboscopic_evolve",
    "evaluation_report",
]


@dataclass(frozen=True)
class ParameterDistribution:
    """One dispersed parameter; kind in {uniform, normal, half_normal,
    point, grid} with the matching args tuple."""

    name: str
    kind: str
    args: tuple
    applies_to: str = ""      # "model:<param>" or "term:<term name>"

    def __post_init__(self):
        k, a = self.kind, self.args
        if k == "uniform":
            if not a[0] < a[1]:
                raise ValueError(f"uniform({a}): need a < b")
        elif k in ("normal", "half_normal"):
            if a[-1] <= 0:
                raise ValueError(f"{k}{a}: sigma must be positive")
        elif k not in ("point", "grid"):
            raise ValueError(f"unknown distribution kind {k!r}")

    def sample(self, rng: np.random.Generator) -> float:
        a = self.args
        if self.kind == "uniform":
            return float(rng.uniform(a[0], a[1]))
        if self.kind == "normal":
            return float(rng.normal(a[0], a[1]))
        if self.kind == "half_normal":
            return float(abs(rng.normal(0.0, a[0])))
        if self.kind == "point":
            return float(a[0])
        return float(rng.choice(np.asarray(a[0])))

    def nominal(self) -> float:
        a = self.args
        if self.kind == "uniform":
            return 0.5 * (a[0] + a[1])
        if self.kind == "normal":
            return float(a[0])
        if self.kind == "half_normal":
            return 0.0
        if self.kind == "point":
            return float(a[0])
        return float(np.asarray(a[0]).ravel()[0])


@dataclass(frozen=True)
class Superoperator:
    """d^2 x d^2 real transfer matrix in the normalized Hermitian basis
    {1, sigma...}/sqrt(d), identity first."""

    dim_h: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        d2 = self.dim_h ** 2
        if m.shape != (d2, d2):
            raise ValueError("superoperator shape mismatch")
        first = np.zeros(d2)
        first[0] = 1.0
        if np.abs(m[0] - first).max() > 1e-9:
            raise ValueError("map is not trace preserving")


@dataclass(frozen=True)
class LandscapeGrid:
    axis1: str
    axis2: str
    values1: np.ndarray
    values2: np.ndarray
    fidelity: np.ndarray      # (len(values1), len(values2))


# ---------------------------------------------------------------------------
# Pauli transfer matrices

_P1 = {
    "i": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli_basis_stack(n_qubits: int) -> np.ndarray:
    """(d^2, d, d) normalized Pauli strings, identity first, then
    lexicographic in (i, x, y, z) per site."""
    d = 2 ** n_qubits
    mats = []
    for combo in itertools.product("ixyz", repeat=n_qubits):
        m = np.array([[1.0 + 0j]])
        for c in combo:
            m = np.kron(m, _P1[c])
        mats.append(m / np.sqrt(d))
    return np.stack(mats)


def ptm(u: np.ndarray | Operator, stack: np.ndarray) -> np.ndarray:
    """Real transfer matrix R_ab = <<P_a|U P_b U^dag>> of a unitary."""
    um = u.entries if isinstance(u, Operator) else np.asarray(u)
    conj = np.einsum("ij,bjk,lk->bil", um, stack, um.conj())
    return np.einsum("ail,bli->ab", stack, conj).real


# ---------------------------------------------------------------------------
# evaluation setup

@dataclass(frozen=True)
class EvaluationSetup:
    """System + model context for exact simulation under concrete or
    dispersed parameters."""

    n_qubits: int
    channels: tuple
    dt: float
    model: ControlModel
    term_names: tuple[str, ...]
    term_mats: np.ndarray            # (n_terms, d, d), unit-coefficient matrices
    term_coeffs: np.ndarray          # nominal coefficients, rad/s
    distributions: tuple[ParameterDistribution, ...] = ()

    def axis_ops(self, fld) -> np.ndarray:
        from .opcore import pauli_op

        d = 2 ** self.n_qubits
        ops = []
        for qubits, axis in fld.axes:
            m = np.zeros((d, d), dtype=complex)
            for q in qubits:
                m += pauli_op([(q, axis)], 1.0, self.n_qubits).entries
            ops.append(m)
        return np.stack(ops)

    def split_params(self, values: dict):
        """Partition a {dist name: value} draw into model params and term
        coefficient overrides."""
        model_params, term_over = {}, {}
        by_name = {dd.name: dd for dd in self.distributions}
        for key, val in values.items():
            dd = by_name[key]
            target = dd.applies_to
            if target.startswith("model:"):
                model_params[target.split(":", 1)[1]] = val
            elif target.startswith("term:"):
                term_over[target.split(":", 1)[1]] = val
            else:
                raise ValueError(f"distribution {key} has no applies_to target")
        return model_params, term_over


def _resolved_model(setup: EvaluationSetup, model_params: dict) -> ControlModel:
    m = setup.model
    for name, val in model_params.items():
        m = m.with_param(name, val)
    return m


def _total_hamiltonians(setup, seq, model_params, term_over):
    model = _resolved_model(setup, model_params)
    fld = model.field(seq)
    ops = setup.axis_ops(fld)
    h = np.einsum("kq,kab->qab", fld.b, ops)
    coeffs = setup.term_coeffs.copy()
    for name, val in term_over.items():
        coeffs[setup.term_names.index(name)] = val
    if len(coeffs):
        h = h + np.einsum("t,tab->ab", coeffs, setup.term_mats)
    return h, fld.delta_t


def simulate_total_unitary(
    seq: ControlSequence,
    setup: EvaluationSetup,
    params: dict | None = None,
) -> Operator:
    """Exact total propagator at concrete parameter values (params maps
    distribution names to values; omitted ones sit at their nominal)."""
    from . import toggling as tg

    values = {dd.name: dd.nominal() for dd in setup.distributions}
    values.update(params or {})
    model_params, term_over = setup.split_params(values)
    h, delta_t = _total_hamiltonians(setup, seq, model_params, term_over)
    u = tg.expm_batch(h, delta_t)
    acc = np.eye(h.shape[-1], dtype=complex)
    for q in range(u.shape[0]):
        acc = u[q] @ acc
    return Operator(acc, setup.n_qubits)


def overlap_fidelity(u: Operator | np.ndarray, u0: Operator | np.ndarray) -> float:
    """|Tr(U^dag U0)| / Tr(U0^dag U0); global-phase free."""
    um = u.entries if isinstance(u, Operator) else np.asarray(u)
    t = u0.entries if isinstance(u0, Operator) else np.asarray(u0)
    return float(abs(np.sum(um.conj() * t)) / np.real(np.sum(t.conj() * t)))


def _mc_unitaries(seq, setup, n_mc, rng):
    """Sampled exact unitaries; batches the eigh when only term
    coefficients and the drive amplitude are dispersed."""
    from . import toggling as tg

    draws = [
        {dd.name: dd.sample(rng) for dd in setup.distributions}
        for _ in range(n_mc)
    ]
    fast = all(
        dd.applies_to.startswith("term:") or dd.applies_to == "model:amplitude"
        for dd in setup.distributions
    )
    d = 2 ** setup.n_qubits
    if fast:
        fld = setup.model.field(seq)
        ops = setup.axis_ops(fld)
        h_ctrl = np.einsum("kq,kab->qab", fld.b, ops)
        qn = h_ctrl.shape[0]
        hh = np.empty((n_mc, qn, d, d), dtype=complex)
        for s, values in enumerate(draws):
            model_params, term_over = setup.split_params(values)
            amp = 1.0 + model_params.get("amplitude", setup.model.amp_factor - 1.0)
            coeffs = setup.term_coeffs.copy()
            for name, val in term_over.items():
                coeffs[setup.term_names.index(name)] = val
            hh[s] = amp * h_ctrl
            if len(coeffs):
                hh[s] += np.einsum("t,tab->ab", coeffs, setup.term_mats)
        u = tg.expm_batch(hh.reshape(-1, d, d), fld.delta_t).reshape(n_mc, qn, d, d)
        out = np.empty((n_mc, d, d), dtype=complex)
        for s in range(n_mc):
            acc = np.eye(d, dtype=complex)
            for q in range(qn):
                acc = u[s, q] @ acc
            out[s] = acc
        return out
    out = np.empty((n_mc, d, d), dtype=complex)
    for s, values in enumerate(draws):
        out[s] = simulate_total_unitary(seq, setup, values).entries
    return out


def average_cptp(
    seq: ControlSequence,
    setup: EvaluationSetup,
    n_mc: int,
    rng: np.random.Generator,
    t_dep: float | None = None,
) -> Superoperator:
    """Monte-Carlo mean of per-isochromat transfer matrices, optionally
    composed with the depolarizing relaxation channel."""
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    stack = pauli_basis_stack(setup.n_qubits)
    us = _mc_unitaries(seq, setup, n_mc, rng)
    acc = np.zeros((stack.shape[0], stack.shape[0]))
    for s in range(n_mc):
        acc += ptm(us[s], stack)
    sup = Superoperator(2 ** setup.n_qubits, acc / n_mc)
    if t_dep is not None:
        sup = apply_depolarizing(sup, seq.t_seq, t_dep)
    return sup


def average_gate_fidelity(avg: Superoperator, u0: Operator | np.ndarray) -> float:
    """State-averaged gate fidelity via the process-fidelity identity
    F = (d F_pro + 1)/(d + 1), F_pro = Tr(R0^T R)/d^2."""
    d = avg.dim_h
    stack = pauli_basis_stack(int(round(np.log2(d))))
    r0 = ptm(u0, stack)
    f_pro = float(np.sum(r0 * avg.matrix)) / d ** 2
    return (d * f_pro + 1.0) / (d + 1.0)


def orthogonality(avg: Superoperator) -> float:
    """R = Tr(L^T L)/dim(L); 1 for unitary channels, smaller for
    depolarizing-like averaged error content."""
    m = avg.matrix
    return float(np.sum(m * m) / m.shape[0])


def apply_depolarizing(avg: Superoperator, t_seq: float, t_dep: float) -> Superoperator:
    if t_dep <= 0:
        raise ValueError("depolarizing time must be positive")
    scale = np.exp(-t_seq / t_dep)
    m = avg.matrix.copy()
    m[1:, :] *= scale
    return Superoperator(avg.dim_h, m)


def landscape(
    seq: ControlSequence,
    setup: EvaluationSetup,
    axis1: tuple[str, np.ndarray],
    axis2: tuple[str, np.ndarray],
    u0: Operator | np.ndarray,
) -> LandscapeGrid:
    """Overlap fidelity of the exact propagator over a 2-parameter grid;
    axes name distributions from the setup."""
    name1, vals1 = axis1
    name2, vals2 = axis2
    vals1 = np.asarray(vals1, dtype=float)
    vals2 = np.asarray(vals2, dtype=float)
    if vals1.size == 0 or vals2.size == 0:
        raise ValueError("landscape axes must be non-empty")
    fid = np.empty((vals1.size, vals2.size))
    for i, v1 in enumerate(vals1):
        for j, v2 in enumerate(vals2):
            u = simulate_total_unitary(seq, setup, {name1: v1, name2: v2})
            fid[i, j] = overlap_fidelity(u, u0)
    return LandscapeGrid(name1, name2, vals1, vals2, fid)


def stroboscopic_evolve(
    initial_state: np.ndarray,
    seq: ControlSequence,
    setup: EvaluationSetup,
    params: dict | None,
    n_cycles: int,
) -> np.ndarray:
    """Survival probabilities |<psi0|U^n|psi0>|^2 for n = 0..n_cycles."""
    psi0 = np.asarray(initial_state, dtype=complex).ravel()
    nrm = np.linalg.norm(psi0)
    if abs(nrm - 1.0) > 1e-8:
        raise ValueError("initial state must be normalized")
    u = simulate_total_unitary(seq, setup, params).entries
    out = np.empty(n_cycles + 1)
    psi = psi0.copy()
    out[0] = 1.0
    for n in range(1, n_cycles + 1):
        psi = u @ psi
        out[n] = abs(np.vdot(psi0, psi)) ** 2
    return out


def evaluation_report(
    seq: ControlSequence,
    setup: EvaluationSetup,
    u0_total: Operator | np.ndarray,
    n_mc: int,
    rng_seed: int,
    t_dep: float | None = None,
) -> dict:
    """FoM summary: median/20th/80th-percentile per-sample average gate
    fidelity, the averaged map, and its orthogonality."""
    rng = np.random.default_rng(np.random.SeedSequence(rng_seed, spawn_key=(7,)))
    stack = pauli_basis_stack(setup.n_qubits)
    us = _mc_unitaries(seq, setup, n_mc, rng)
    d = 2 ** setup.n_qubits
    r0 = ptm(u0_total, stack)
    scale = np.exp(-seq.t_seq / t_dep) if t_dep else 1.0
    f_samples = np.empty(n_mc)
    acc = np.zeros((d * d, d * d))
    for s in range(n_mc):
        r = ptm(us[s], stack)
        rdep = r.copy()
        rdep[1:, :] *= scale
        acc += rdep
        f_pro = float(np.sum(r0 * rdep)) / d ** 2
        f_samples[s] = (d * f_pro + 1.0) / (d + 1.0)
    avg = Superoperator(d, acc / n_mc)
    return {
        "fom": average_gate_fidelity(avg, u0_total),
        "fom_median": float(np.median(f_samples)),
        "fom_p20": float(np.percentile(f_samples, 20)),
        "fom_p80": float(np.percentile(f_samples, 80)),
        "orthogonality": orthogonality(avg),
        "ptm": avg.matrix.ravel().tolist(),
        "n_mc": n_mc,
        "seed": rng_seed,
    }
