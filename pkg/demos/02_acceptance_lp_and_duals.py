"""The aggregation LP: polygonal flow limits, shadow prices, cutoff prices.

Solves the acceptance problem for three resources on a short feeder and
reads the answer back through its dual variables: the balance-row duals
price energy at every bus-phase, and a resource's cutoff (qualification)
price is a direct function of the duals at its own bus.
"""

import numpy as np

from gridclear import (
    Der,
    DerPopulation,
    TdopfParams,
    assemble,
    kkt_residuals,
    load_network,
    qualification_price,
    solve,
)

R_OHM = [
    [0.4576, 0.1560, 0.1535],
    [0.1560, 0.4666, 0.1580],
    [0.1535, 0.1580, 0.4615],
]
X_OHM = [
    [1.0780, 0.5017, 0.3849],
    [0.5017, 1.0482, 0.4236],
    [0.3849, 0.4236, 1.0651],
]


def line(frm, to, scale=1.0, s_max=2000.0):
    return {"from": frm, "to": to, "phases": "abc",
            "r_ohm": (np.array(R_OHM) * scale).tolist(),
            "x_ohm": (np.array(X_OHM) * scale).tolist(),
            "s_max_kva": s_max}


DOC = {
    "schema": "gridclear-feeder/1",
    "base": {"s_base_kva": 1000.0, "v_base_kv": 2.401, "v0_pu": 1.03,
             "v_min_pu": 0.95, "v_max_pu": 1.05, "s0_max_kva": 5000.0},
    "buses": [
        {"id": 0, "phases": "abc"},
        {"id": 1, "phases": "abc",
         "fixed_p_kw": {"a": -60.0, "b": -45.0, "c": -30.0}},
        {"id": 2, "phases": "abc",
         "fixed_p_kw": {"a": -40.0}, "fixed_q_kvar": {"a": -15.0}},
    ],
    "lines": [line(0, 1), line(1, 2, scale=2.0)],
}

DERS = [
    Der(id="dryer", bus=2, phases=("a",), side="bid", price=18.0,
        volume_kw=-30.0, power_factor=0.9),
    Der(id="ev", bus=1, phases=("b",), side="bid", price=11.0,
        volume_kw=-50.0, power_factor=0.95),
    Der(id="pv", bus=2, phases=("a",), side="offer", price=6.0,
        volume_kw=40.0, power_factor=0.9),
]


def main():
    net = load_network(DOC)
    pop = DerPopulation.from_ders(DERS, net)
    params = TdopfParams()  # m = 2.5 c/kWh, M = 1000 c, 12-gon limits, 1 h

    problem = assemble(net, pop, params)
    rows_ub, cols = problem.a_ub.shape
    print(f"LP size: {cols} variables, {problem.a_eq.shape[0]} equality rows, "
          f"{rows_ub} inequality rows")
    print(f"of the inequality rows, {params.polygon_edges} half-planes "
          f"approximate each |S| disc (apothem factor cos(pi/E) = "
          f"{np.cos(np.pi / params.polygon_edges):.4f})")

    sol = solve(problem)
    print(f"\nstatus: {sol.status}, objective {sol.objective_cents:.2f} cents")
    for d in pop.ders:
        print(f"  {d.id:5s} {d.side:5s} alpha = {sol.alpha[d.id]:.4f}")

    residuals = kkt_residuals(problem, sol)
    print(f"optimality residuals, worst family: {max(residuals.values()):.2e}")

    # balance-row duals at bus 2, in cents/kWh once rescaled
    scale = net.s_base_kva * params.delta_t_hours
    print("\nreal-power shadow price at bus 2 (c/kWh):")
    for ph in "abc":
        r = net.row_of(2, ph)
        print(f"  phase {ph}: {-sol.lambda_p[r] / scale:8.3f}")

    print("\ncutoff prices (stated price on the wrong side disqualifies):")
    for d in pop.ders:
        cut = qualification_price(d, sol.lambda_p, sol.lambda_q,
                                  params.big_m_cents, net.s_base_kva,
                                  params.delta_t_hours)
        rel = ">=" if d.side == "bid" else "<="
        print(f"  {d.id:5s} stated {d.price:6.2f}  cutoff {cut:8.2f}  "
              f"qualified if stated {rel} cutoff")


if __name__ == "__main__":
    main()
