"""Scratch driver used while calibrating the robust-Hadamard annealing
stages; kept runnable for reproducing the tuning sweeps."""
import sys
import time

import numpy as np

from hamforge import toggling as tg
from hamforge.controlsys import Channel, ControlSequence, IdealModel
from hamforge.liealg import find_c_subspace, find_lie_algebra
from hamforge.objectives import (
    CostPipeline,
    ErrorChannel,
    ObjectiveSpec,
    ObjectiveTerm,
    PertComponent,
)
from hamforge.opcore import Operator, pauli_op
from hamforge.optimizer import GSAConfig, gsa_minimize, restart_rng

SX = pauli_op([(1, "x")], 1.0, 1)
SY = pauli_op([(1, "y")], 1.0, 1)
SZ = pauli_op([(1, "z")], 1.0, 1)
G = find_lie_algebra([SX, SY])
C = find_c_subspace(G, SZ)
W1MAX = 2 * np.pi * 20e6
CH = (Channel("amp", (1,), "amp", W1MAX), Channel("ph", (1,), "phase", np.pi))
HAD = Operator(np.array([[1, 1], [1, -1]]) / np.sqrt(2), 1)


def build(weights, ho3=False):
    terms = [
        ObjectiveTerm("primary_unitary", weights[0]),
        ObjectiveTerm("zeroth_order_target", weights[1], {"component": 0}),
        ObjectiveTerm("robustness_first", weights[2], {"error": "eps"}),
        ObjectiveTerm("higher_order_r", weights[3], {"order": 2, "space": "pert", "component": 0}),
        ObjectiveTerm("higher_order_r", weights[4], {"order": 2, "space": "eps"}),
        ObjectiveTerm("effective_robustness", weights[5], {"error": "eps", "component": 0}),
    ]
    if ho3:
        terms.append(
            ObjectiveTerm("higher_order_r", weights[6], {"order": 3, "space": "pert", "component": 0})
        )
    spec = ObjectiveSpec(tuple(terms), target_unitary=HAD)
    comp = PertComponent(SZ.entries.copy(), C, np.zeros(3))
    err = ErrorChannel("eps", "amplitude", subspace=C)
    return CostPipeline(1, CH, 35, 1e-8, IdealModel(), None, [comp], [err], spec)


def grid_fidelity(pipe, x, n=9):
    seq = ControlSequence(x.reshape(2, 35), 1e-8, CH)
    fld = IdealModel().field(seq)
    hc = np.einsum("kq,kab->qab", fld.b, pipe.axis_ops)
    worst = 1.0
    for eps in np.linspace(-0.05, 0.05, n):
        for dw in np.linspace(-2 * np.pi * 2.5e6, 2 * np.pi * 2.5e6, n):
            htot = (1 + eps) * hc + dw * SZ.entries
            u = tg.expm_batch(htot, fld.delta_t)
            acc = np.eye(2, dtype=complex)
            for q in range(35):
                acc = u[q] @ acc
            worst = min(worst, abs(np.sum(acc.conj() * HAD.entries)) / 2)
    return worst


def run(tag, weights, seed, stages, qv=2.3, qa=-5.0, ho3=False):
    pipe = build(weights, ho3)
    t0 = time.time()
    rng = restart_rng(seed, 0)
    x = rng.uniform(-1, 1, 70)
    for (tmax, temp0) in stages:
        cfg = GSAConfig(
            q_v=qv, q_a=qa, t0=temp0, t_max=tmax, e_target=1e-9,
            dimension=70, master_seed=seed, schedule="standard",
        )
        res = gsa_minimize(pipe, x, cfg, rng)
        x = res.best_x
    rep = pipe.evaluate(x)
    gf = grid_fidelity(pipe, x)
    print(
        f"{tag} seed={seed}: E={rep.total:.5f} gridF={gf:.5f} t={time.time()-t0:.0f}s  "
        + " ".join("%.1e" % v for v in rep.values),
        flush=True,
    )
    return gf, x


if __name__ == "__main__":
    which = sys.argv[1] if len(sys.argv) > 1 else "D"
    if which == "D":
        stages = [(50000, 5.0)] + [(10000, t) for t in (0.5, 0.1, 0.02, 4e-3, 8e-4, 1.6e-4)]
        for seed in (1, 2):
            run("D[20,4,1,4,0.5,1]", (20, 4, 1, 4, 0.5, 1), seed, stages)
    elif which == "E":
        stages = [(40000, 5.0)] + [(8000, t) for t in (0.5, 0.1, 0.02, 4e-3, 8e-4, 1.6e-4, 3e-5, 6e-6)]
        for seed in (1, 2, 3):
            run("E[30,6,1,6,0.5,1]", (30, 6, 1, 6, 0.5, 1), seed, stages)
