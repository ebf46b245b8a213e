"""Independent grid-search oracle for small acceptance problems.

Nothing here touches the LP assembly: constraint values and the objective
are evaluated from the network primitives alone (flows by tree
elimination, voltages from flows, polygon reach from flows), and the
acceptance vector is enumerated on a regular grid.  The affine maps are
built by probing those primitives at unit acceptance vectors.
"""

import numpy as np

from gridclear.ders import gamma_price
from gridclear.network import (
    build_matrices,
    flows_from_injections,
    head_injection,
    lindistflow_voltages,
)


def constraint_and_objective_maps(network, population, params):
    """Affine maps g(a) = g0 + G a (feasible iff g <= 0) and f(a) = f0 + w a."""
    m = build_matrices(network)
    n = population.n
    p_fix, q_fix = network.fixed_injections()
    beta, delta, gamma = params.polygon()
    apothem = -gamma[0]
    s_line = np.concatenate([l.s_max for l in network.lines]) if network.n else np.zeros(0)
    scale = network.s_base_kva * params.delta_t_hours

    def evaluate(a):
        p = p_fix + (population.scatter_p() @ a if n else 0.0)
        q = q_fix + (population.scatter_q() @ a if n else 0.0)
        p_flow, q_flow = flows_from_injections(m, p, q)
        v = lindistflow_voltages(m, network.v0, p_flow, q_flow)
        p0, q0 = head_injection(m, p_flow, q_flow)
        rows = [v - network.v_max, network.v_min - v]
        for e in range(len(beta)):
            rows.append(beta[e] * p_flow + delta[e] * q_flow - apothem * s_line)
            rows.append(beta[e] * p0 + delta[e] * q0 - apothem * network.s0_max)
        cost = params.m_cents_per_kwh * scale * p0.sum()
        return np.concatenate(rows), cost

    g0, f0 = evaluate(np.zeros(n))
    G = np.zeros((len(g0), n))
    w = np.array([gamma_price(d, params.big_m_cents) * d.volume_kw * params.delta_t_hours
                  for d in population.ders])
    for j in range(n):
        gj, fj = evaluate(np.eye(n)[j])
        G[:, j] = gj - g0
        w[j] += fj - f0
    return g0, G, f0, w


def grid_search(network, population, params, step=0.05, feas_tol=1e-9,
                chunk=200_000):
    """Best objective in cents over the acceptance grid {0, step, ..., 1}^n.

    Returns (objective, alpha) or (None, None) when no grid point is
    feasible.  Ties resolve to the lexicographically first point.
    """
    n = population.n
    g0, G, f0, w = constraint_and_objective_maps(network, population, params)
    levels = np.round(np.arange(0.0, 1.0 + step / 2, step), 12)
    k = len(levels)
    total = k**n
    best_obj, best_alpha = None, None
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        digits = np.empty((n, len(idx)), dtype=int)
        rem = idx
        for j in range(n - 1, -1, -1):
            digits[j] = rem % k
            rem = rem // k
        grid = levels[digits]  # (n, points)
        feas = np.all(g0[:, None] + G @ grid <= feas_tol, axis=0)
        if not feas.any():
            continue
        objs = f0 + w @ grid[:, feas]
        j = int(np.argmin(objs))
        if best_obj is None or objs[j] < best_obj - 1e-12:
            best_obj = float(objs[j])
            best_alpha = grid[:, feas][:, j].copy()
    return best_obj, best_alpha
