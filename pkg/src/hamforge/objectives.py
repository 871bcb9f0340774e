"""Cost-function library and the weighted total cost driving optimization.

Each objective is a nonnegative residual that vanishes exactly when its
condition holds: primary-unitary overlap, zeroth-order average
Hamiltonian against a target, first/second-order control-error averages,
the symmetrized cross pair, reversal-symmetry conditions killing a
Magnus order, and the commutator cross term between the error and
perturbation channels.  `CostPipeline` wires a control model, a
Hamiltonian partitioning and a term list into one callable f_tot(x)
suitable for the annealer; all unit-bearing residuals are divided by
fixed scales chosen at build time so the weighted sum mixes comparable
magnitudes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .controlsys import ControlModel, ControlSequence, model_param_derivative
from .liealg import CSubspace
from .opcore import Operator
from . import toggling as tg

KINDS = (
    "primary_unitary",
    "zeroth_order_target",
    "robustness_first",
    "robustness_second",
    "robustness_cross_pair",
    "higher_order_r",
    "effective_robustness",
)


@dataclass(frozen=True)
class ObjectiveTerm:
    kind: str
    weight: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if not (self.weight > 0 and np.isfinite(self.weight)):
            raise ValueError("weights must be positive and finite")
        need = {
            "robustness_first": ("error",),
            "robustness_second": ("errors",),
            "robustness_cross_pair": ("errors",),
            "effective_robustness": ("error",),
            "higher_order_r": ("order",),
        }
        for key in need.get(self.kind, ()):
            if key not in self.params:
                raise ValueError(f"{self.kind} term requires parameter {key!r}")


@dataclass(frozen=True)
class ObjectiveSpec:
    terms: tuple[ObjectiveTerm, ...]
    target_unitary: Operator | None = None
    target_vectors: dict = field(default_factory=dict)   # component -> |H_target>>


@dataclass(frozen=True)
class CostReport:
    labels: tuple[str, ...]
    values: tuple[float, ...]
    weights: tuple[float, ...]

    @property
    def total(self) -> float:
        return float(np.dot(self.values, self.weights))

    def as_dict(self) -> dict:
        return {l: v for l, v in zip(self.labels, self.values)}


# ---------------------------------------------------------------------------
# individual criteria

def primary_unitary_cost(u_final: Operator | np.ndarray, u_target: Operator | np.ndarray) -> float:
    """1 - |Tr(U U_target^dag)| / Tr(U_target U_target^dag); phase-free."""
    u = u_final.entries if isinstance(u_final, Operator) else u_final
    t = u_target.entries if isinstance(u_target, Operator) else u_target
    overlap = abs(np.sum(u * t.conj()))
    return float(1.0 - overlap / np.real(np.sum(t * t.conj())))


def zeroth_order_cost(c0: np.ndarray, target: np.ndarray, t_seq: float) -> float:
    """||c0 - target * T_seq|| / T_seq (target is |H_target>>, rad/s)."""
    return float(np.linalg.norm(c0 - np.asarray(target) * t_seq) / t_seq)


def robustness_first_cost(c0_err: np.ndarray) -> float:
    return float(np.linalg.norm(c0_err))


def robustness_second_cost(c0_err2: np.ndarray) -> float:
    return float(np.linalg.norm(c0_err2))


def robustness_cross_pair_cost(cross: np.ndarray) -> float:
    """Norm of the index-symmetrized ordered pair tensor c_ij + c_ji."""
    c = np.asarray(cross)
    return float(np.linalg.norm(c + c.T))


def higher_order_cost(cints: tg.CIntegralSet, r: int) -> float:
    """Reversal-symmetry residual whose vanishing kills the (r-1)th Magnus
    term: root-sum-square of |c_{i1..ir} + (-1)^{r-1} c_{ir..i1}| over all
    non-all-equal index tuples (the sign follows the antisymmetry of the
    nested-commutator kernel F_r)."""
    if r not in (2, 3):
        raise ValueError("order r must be 2 or 3")
    if cints.order < r:
        raise ValueError("integral set does not carry the requested order")
    m = len(cints.c0)
    if r == 2:
        c = cints.c1_matrix()
        diff = c - c.T
        return float(np.sqrt(max(np.sum(diff ** 2) - 0.0, 0.0)))
    c = cints.c2_tensor()
    diff = c + np.transpose(c, (2, 1, 0))
    mask = np.ones((m, m, m), dtype=bool)
    idx = np.arange(m)
    mask[idx, idx, idx] = False
    return float(np.linalg.norm(diff[mask]))


def effective_robustness_cost(c_cross: np.ndarray, comm_table: np.ndarray) -> float:
    """||sum_{s,l} c_cross[s,l] [h_err^l, h_pert^s]||_HS.

    comm_table[l, s] holds the commutator matrices; c_cross is indexed
    (pert, err) with the perturbation at the later time.
    """
    op = np.einsum("sl,lsij->ij", c_cross, comm_table)
    return float(np.linalg.norm(op))


# ---------------------------------------------------------------------------
# error channels

@dataclass(frozen=True)
class ErrorChannel:
    """One systematic-error direction of the control system.

    kind 'amplitude' is the multiplicative drive error dH = eps * H_c
    (per-step derivative equals the nominal control Hamiltonian, no
    differencing); kind 'model_param' differentiates the control-system
    map with respect to the named parameter, scaled by the parameter's
    natural magnitude so the expansion variable is dimensionless.
    """

    name: str
    kind: str                     # 'amplitude' | 'model_param'
    param: str = ""
    subspace: CSubspace | None = None

    def __post_init__(self):
        if self.kind not in ("amplitude", "model_param"):
            raise ValueError(f"unknown error kind {self.kind!r}")


@dataclass(frozen=True)
class PertComponent:
    """One perturbation component H_pert^w with its subspace and target."""

    matrix: np.ndarray            # reference operator, rad/s
    subspace: CSubspace
    target_vec: np.ndarray | None # |H_target>> in the subspace, rad/s, or None


# ---------------------------------------------------------------------------
# the pipeline

class CostPipeline:
    """Precompiled evaluation of f_tot over control vectors in [-1,1]^D.

    Deterministic and stateless per call; a single instance may be
    shared read-only across worker processes.
    """

    def __init__(
        self,
        n_qubits: int,
        channels,
        intervals: int,
        dt: float,
        model: ControlModel,
        pri_internal: np.ndarray | None,
        components: list[PertComponent],
        errors: list[ErrorChannel],
        spec: ObjectiveSpec,
        unit_scale: float | None = None,
        fd_step: float = 1e-4,
    ):
        from .controlsys import control_hamiltonians  # noqa: F401 (doc pointer)
        from .opcore import pauli_op

        self.n_qubits = n_qubits
        self.d = 2 ** n_qubits
        self.channels = tuple(channels)
        self.p_intervals = intervals
        self.dt = dt
        self.model = model
        self.spec = spec
        self.components = list(components)
        self.errors = {e.name: e for e in errors}
        self.fd_step = fd_step
        self.pri_internal = (
            np.zeros((self.d, self.d), dtype=complex) if pri_internal is None else pri_internal
        )

        scales = [abs(c.scale) for c in self.channels if c.role != "phase"]
        self.unit_scale = unit_scale or (max(scales) if scales else 1.0)
        self.err_scale = self.unit_scale * np.sqrt(self.d)

        # axis operators of the field rows, resolved on a probe run
        probe = ControlSequence(np.zeros((len(self.channels), intervals)), dt, self.channels)
        fld = model.field(probe)
        self.delta_t = fld.delta_t
        self.q_steps = fld.q_steps
        axis_ops = []
        for qubits, axis in fld.axes:
            m = np.zeros((self.d, self.d), dtype=complex)
            for q in qubits:
                m += pauli_op([(q, axis)], 1.0, n_qubits).entries
            axis_ops.append(m)
        self.axis_ops = np.stack(axis_ops)

        # per-component static data
        self.comp_stacks = [c.subspace.basis.stack() for c in self.components]
        self.comp_seed = [
            np.einsum("aij,ij->a", s.conj(), c.matrix)
            for s, c in zip(self.comp_stacks, self.components)
        ]
        self.comp_scale = []
        for c, seed in zip(self.components, self.comp_seed):
            if c.target_vec is not None and np.linalg.norm(c.target_vec) > 0:
                self.comp_scale.append(float(np.linalg.norm(c.target_vec)))
            else:
                self.comp_scale.append(float(np.linalg.norm(seed)))
        self.err_stacks = {
            name: e.subspace.basis.stack() for name, e in self.errors.items()
        }

        # commutator tables for effective robustness terms
        self.cross_tables = {}
        for term in spec.terms:
            if term.kind == "effective_robustness":
                w = term.params.get("component", 0)
                ename = term.params["error"]
                key = (w, ename)
                if key not in self.cross_tables:
                    se = self.err_stacks[ename]
                    sp = self.comp_stacks[w]
                    table = np.einsum("lab,sbc->lsac", se, sp) - np.einsum(
                        "sab,lbc->lsac", sp, se
                    )
                    self.cross_tables[key] = table

        self._plan()

    # -- requirement planning ------------------------------------------------

    def _plan(self):
        self.need_comp_order = [1] * len(self.components)
        self.need_err = {}         # name -> max order of error-space integrals
        self.need_cross = set()    # (component, error) pairs
        self.need_err_cross = set()  # ordered (j_later, j_earlier) error pairs
        self.need_second = []      # (j1, j2) pairs
        for term in self.spec.terms:
            p = term.params
            if term.kind == "higher_order_r":
                space = p.get("space", "pert")
                if space == "pert":
                    w = p.get("component", 0)
                    self.need_comp_order[w] = max(self.need_comp_order[w], p["order"])
                else:
                    self.need_err[space] = max(self.need_err.get(space, 1), p["order"])
            elif term.kind == "robustness_first":
                self.need_err.setdefault(p["error"], 1)
            elif term.kind == "robustness_cross_pair":
                j1, j2 = p["errors"]
                if j1 == j2:
                    self.need_err[j1] = max(self.need_err.get(j1, 1), 2)
                else:
                    # joint ordered tensors in both channel orders
                    self.need_err.setdefault(j1, 1)
                    self.need_err.setdefault(j2, 1)
                    self.need_err_cross.add((j1, j2))
                    self.need_err_cross.add((j2, j1))
            elif term.kind == "robustness_second":
                self.need_second.append(tuple(p["errors"]))
            elif term.kind == "effective_robustness":
                self.need_cross.add((p.get("component", 0), p["error"]))
                self.need_err.setdefault(p["error"], 1)

    # -- per-candidate evaluation ---------------------------------------------

    def sequence(self, x: np.ndarray) -> ControlSequence:
        v = np.asarray(x, dtype=float).reshape(len(self.channels), self.p_intervals)
        return ControlSequence(v, self.dt, self.channels)

    def _error_step_ops(self, name: str, seq, h_ctrl):
        e = self.errors[name]
        if e.kind == "amplitude":
            return h_ctrl
        sens = model_param_derivative(self.model, seq, e.param, self.fd_step)
        sens = sens * self.model.param_scale(e.param)
        return np.einsum("kq,kab->qab", sens, self.axis_ops)

    def _second_step_ops(self, j1: str, j2: str, seq):
        e1, e2 = self.errors[j1], self.errors[j2]
        if e1.kind == "amplitude" and e2.kind == "amplitude":
            return None  # dH = eps H_c is linear in eps
        if e1.kind == "amplitude" or e2.kind == "amplitude":
            # mixed amplitude x parameter: d2H = d(dH_param); amplitude scales it
            other = e2 if e1.kind == "amplitude" else e1
            sens = model_param_derivative(self.model, seq, other.param, self.fd_step)
            b2 = sens * self.model.param_scale(other.param)
        elif j1 == j2:
            p = e1.param
            v = self.model.params()[p]
            step = self.fd_step * self.model.param_scale(p)
            hi = self.model.with_param(p, v + step).field(seq).b
            lo = self.model.with_param(p, v - step).field(seq).b
            mid = self.model.field(seq).b
            b2 = (hi - 2 * mid + lo) / step ** 2 * self.model.param_scale(p) ** 2
        else:
            p1, p2 = e1.param, e2.param
            v1, v2 = self.model.params()[p1], self.model.params()[p2]
            s1 = self.fd_step * self.model.param_scale(p1)
            s2 = self.fd_step * self.model.param_scale(p2)
            pp = self.model.with_param(p1, v1 + s1).with_param(p2, v2 + s2).field(seq).b
            pm = self.model.with_param(p1, v1 + s1).with_param(p2, v2 - s2).field(seq).b
            mp = self.model.with_param(p1, v1 - s1).with_param(p2, v2 + s2).field(seq).b
            mm = self.model.with_param(p1, v1 - s1).with_param(p2, v2 - s2).field(seq).b
            b2 = (pp - pm - mp + mm) / (4 * s1 * s2)
            b2 = b2 * self.model.param_scale(p1) * self.model.param_scale(p2)
        return np.einsum("kq,kab->qab", b2, self.axis_ops)

    def _space_cache(self, stack, h_pri, u, cache):
        """Per-candidate eigen/toggle data for one subspace stack."""
        key = id(stack)
        if key not in cache:
            madj = tg.adjoint_matrix_batch(h_pri, stack)
            nu, vecs = np.linalg.eigh(madj)
            dq = _toggles_from_u(u, stack)
            cache[key] = (nu, vecs, dq, tg.prefix_toggles(dq))
        return cache[key]

    def evaluate(self, x: np.ndarray) -> CostReport:
        seq = self.sequence(x)
        fld = self.model.field(seq)
        dt = fld.delta_t
        h_ctrl = np.einsum("kq,kab->qab", fld.b, self.axis_ops)
        h_pri = h_ctrl + self.pri_internal

        u = tg.expm_batch(h_pri, dt)
        qn = u.shape[0]
        cache: dict = {}

        # component integral sets
        comp_sets = []
        for w, comp in enumerate(self.components):
            stack = self.comp_stacks[w]
            order = self.need_comp_order[w]
            nu, vecs, dq, e_prev = self._space_cache(stack, h_pri, u, cache)
            y = np.einsum("qba,b->qa", vecs.conj(), self.comp_seed[w].astype(complex))
            c0, c1, c2 = tg.batch_step_cints(nu, vecs, y, dt, order)
            t0, t1, t2 = tg.compose_batch(e_prev, c0, c1, c2)
            comp_sets.append(
                tg.CIntegralSet(
                    comp.subspace,
                    order,
                    t0,
                    t1.ravel() if t1 is not None else None,
                    t2.ravel() if t2 is not None else None,
                    qn * dt,
                )
            )

        # error-space integral sets plus caches for cross terms
        err_sets = {}
        err_step = {}
        for name, order in self.need_err.items():
            stack = self.err_stacks[name]
            eops = self._error_step_ops(name, seq, h_ctrl)
            nu, vecs, dq, e_prev = self._space_cache(stack, h_pri, u, cache)
            seeds = np.einsum("aij,qij->qa", stack.conj(), eops)
            y = np.einsum("qba,qb->qa", vecs.conj(), seeds.astype(complex))
            c0, c1, c2 = tg.batch_step_cints(nu, vecs, y, dt, order)
            t0, t1, t2 = tg.compose_batch(e_prev, c0, c1, c2)
            err_sets[name] = tg.CIntegralSet(
                self.errors[name].subspace,
                order,
                t0,
                t1.ravel() if t1 is not None else None,
                t2.ravel() if t2 is not None else None,
                qn * dt,
            )
            err_step[name] = (nu, vecs, y, c0, e_prev)

        # joint ordered tensors between distinct error channels
        err_cross = {}
        for (ja, jb) in self.need_err_cross:
            nu_a, v_a, y_a, c0_a, ep_a = err_step[ja]
            nu_b, v_b, y_b, c0_b, ep_b = err_step[jb]
            steps = tg.batch_step_cross(nu_a, v_a, y_a, nu_b, v_b, y_b, dt)
            err_cross[(ja, jb)] = tg.compose_cross_batch(steps, c0_a, c0_b, ep_a, ep_b)

        # cross integrals (component, error)
        cross = {}
        for (w, name) in self.need_cross:
            stack_p = self.comp_stacks[w]
            nu_p, v_p, dq_p, ep_p = self._space_cache(stack_p, h_pri, u, cache)
            y_p = np.einsum("qba,b->qa", v_p.conj(), self.comp_seed[w].astype(complex))
            c0_p = tg.batch_step_cints(nu_p, v_p, y_p, dt, 1)[0]
            nu_e, v_e, y_e, c0_e, ep_e = err_step[name]
            steps = tg.batch_step_cross(nu_p, v_p, y_p, nu_e, v_e, y_e, dt)
            cross[(w, name)] = tg.compose_cross_batch(steps, c0_p, c0_e, ep_p, ep_e)

        # second-derivative zeroth integrals
        second_c0 = {}
        for (j1, j2) in set(self.need_second):
            ops2 = self._second_step_ops(j1, j2, seq)
            if ops2 is None:
                second_c0[(j1, j2)] = None
                continue
            stack = self.err_stacks[j1]
            nu, vecs, dq, e_prev = self._space_cache(stack, h_pri, u, cache)
            seeds = np.einsum("aij,qij->qa", stack.conj(), ops2)
            y = np.einsum("qba,qb->qa", vecs.conj(), seeds.astype(complex))
            c0 = tg.batch_step_cints(nu, vecs, y, dt, 1)[0]
            t0, _, _ = tg.compose_batch(e_prev, c0)
            second_c0[(j1, j2)] = t0

        # final unitary only when some term needs it
        t_seq = qn * dt
        u_final = None

        labels, values, weights = [], [], []
        for term in self.spec.terms:
            p = term.params
            if term.kind == "primary_unitary":
                if u_final is None:
                    u_final = _final_unitary(u)
                val = primary_unitary_cost(u_final, self.spec.target_unitary.entries)
                label = "primary_unitary"
            elif term.kind == "zeroth_order_target":
                w = p.get("component", 0)
                tgt = self.components[w].target_vec
                tgt = np.zeros_like(comp_sets[w].c0) if tgt is None else tgt
                val = zeroth_order_cost(comp_sets[w].c0, tgt, t_seq) / self.comp_scale[w]
                label = f"zeroth_order[{w}]"
            elif term.kind == "robustness_first":
                name = p["error"]
                val = robustness_first_cost(err_sets[name].c0) / (t_seq * self.err_scale)
                label = f"robustness_first[{name}]"
            elif term.kind == "robustness_second":
                j1, j2 = p["errors"]
                c0 = second_c0[(j1, j2)]
                val = 0.0 if c0 is None else robustness_second_cost(c0) / (t_seq * self.err_scale)
                label = f"robustness_second[{j1},{j2}]"
            elif term.kind == "robustness_cross_pair":
                j1, j2 = p["errors"]
                if j1 == j2:
                    val = robustness_cross_pair_cost(err_sets[j1].c1_matrix())
                else:
                    # symmetrized over index order and channel order
                    va = robustness_cross_pair_cost(err_cross[(j1, j2)])
                    vb = robustness_cross_pair_cost(err_cross[(j2, j1)])
                    val = float(np.hypot(va, vb))
                val = val / (t_seq * self.err_scale) ** 2
                label = f"robustness_cross_pair[{j1},{j2}]"
            elif term.kind == "higher_order_r":
                space = p.get("space", "pert")
                r = p["order"]
                if space == "pert":
                    w = p.get("component", 0)
                    scale = self.comp_scale[w] * t_seq
                    val = higher_order_cost(comp_sets[w], r) / scale ** r
                    label = f"higher_order[{w},r={r}]"
                else:
                    scale = self.err_scale * t_seq
                    val = higher_order_cost(err_sets[space], r) / scale ** r
                    label = f"higher_order[{space},r={r}]"
            else:  # effective_robustness
                w = p.get("component", 0)
                name = p["error"]
                table = self.cross_tables[(w, name)]
                val = effective_robustness_cost(cross[(w, name)], table) / (
                    t_seq ** 2 * self.comp_scale[w] * self.err_scale * 2.0
                )
                label = f"effective_robustness[{w},{name}]"
            labels.append(label)
            values.append(val)
            weights.append(term.weight)
        return CostReport(tuple(labels), tuple(values), tuple(weights))

    def __call__(self, x: np.ndarray) -> float:
        return self.evaluate(x).total

    # -- evaluation-time helpers ----------------------------------------------

    def propagation(self, x: np.ndarray) -> tg.PrimaryPropagation:
        seq = self.sequence(x)
        fld = self.model.field(seq)
        h_pri = np.einsum("kq,kab->qab", fld.b, self.axis_ops) + self.pri_internal
        u = tg.expm_batch(h_pri, fld.delta_t)
        pre = np.empty_like(u)
        acc = np.eye(u.shape[-1], dtype=complex)
        for q in range(u.shape[0]):
            acc = u[q] @ acc
            pre[q] = acc
        return tg.PrimaryPropagation(u, pre)


def _toggles_from_u(u: np.ndarray, stack: np.ndarray) -> np.ndarray:
    conj = np.einsum("qji,ajk,qkl->qail", u.conj(), stack, u)
    return np.ascontiguousarray(
        np.einsum("bij,qaij->qba", stack.conj(), conj).real
    )


def _final_unitary(u_steps: np.ndarray) -> np.ndarray:
    acc = np.eye(u_steps.shape[-1], dtype=complex)
    for q in range(u_steps.shape[0]):
        acc = u_steps[q] @ acc
    return acc


def total_cost(
    seq: ControlSequence | np.ndarray,
    model: ControlModel,
    spec: ObjectiveSpec,
    pipeline: CostPipeline,
) -> CostReport:
    """Score one sequence; `pipeline` carries the prepared context (its
    model and spec must match the arguments)."""
    if model is not pipeline.model or spec is not pipeline.spec:
        raise ValueError("pipeline was built for a different model/objective spec")
    x = seq.values if isinstance(seq, ControlSequence) else np.asarray(seq)
    return pipeline.evaluate(x.ravel())
