"""The auction networks are feasible and individually rational by construction.

No projection step, no penalty term: allocation heads pass through
softmaxes (with a dummy "no one" agent), and payments are a learned
fraction of realized value. Randomizing the weights cannot break either
property, which this script checks the blunt way.
"""

import numpy as np

from mechlearn import AuctionSpec, RegretNetModel, check_feasibility, utility


def crank(spec: AuctionSpec, rounds: int, rng: np.random.Generator) -> None:
    model = RegretNetModel(spec, hidden=(32, 32), rng=np.random.default_rng(0))
    worst_feas, worst_ir = 0.0, 0.0
    for _ in range(rounds):
        state = {k: rng.normal(0.0, 2.0, size=v.shape) for k, v in model.state_dict().items()}
        model.load_state_dict(state)
        bids = rng.uniform(0.0, 1.0, size=(256, spec.n_agents, spec.m_items))
        z = model.allocation(bids)
        p = model.payment(bids, z)
        worst_feas = max(worst_feas, check_feasibility(z.data, spec.demand_kind))
        worst_ir = max(worst_ir, float(-utility(bids, z.data, p.data).min()))
    print(f"{spec.demand_kind:12s} worst feasibility violation {worst_feas:.2e}   "
          f"worst IR violation {worst_ir:.2e}")
    assert worst_feas <= 1e-6 and worst_ir <= 1e-9


def main():
    rng = np.random.default_rng(99)
    crank(AuctionSpec(2, 3, "additive"), rounds=20, rng=rng)
    crank(AuctionSpec(2, 3, "unit_demand"), rounds=20, rng=rng)

    # unit demand additionally caps each agent's row at one item total
    spec = AuctionSpec(3, 4, "unit_demand")
    model = RegretNetModel(spec, hidden=(16, 16), rng=np.random.default_rng(1))
    bids = rng.uniform(size=(100, 3, 4))
    z = model.allocation(bids).data
    print(f"unit demand: max per-agent mass {z.sum(axis=2).max():.4f} (cap 1)")
    print(f"unit demand: max per-item mass  {z.sum(axis=1).max():.4f} (cap 1)")


if __name__ == "__main__":
    main()
