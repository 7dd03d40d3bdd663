"""Auction plumbing: specs, valuation draws, feasibility, and the Myerson yardstick.

A single-item auction with i.i.d. U[0,1] bidders has a known optimal
mechanism (second price with reserve 0.5), so its expected revenue is an
analytic anchor the learned mechanisms get compared against. For n=2 that
expectation is 5/12.
"""

import numpy as np

from mechlearn import (
    AuctionSpec,
    ValuationModel,
    check_feasibility,
    itemwise_myerson_revenue,
    revenue,
    sample_bids,
    utility,
)


def main():
    spec = AuctionSpec(n_agents=2, m_items=1)
    vmodel = ValuationModel(low=0.0, high=1.0)
    rng = np.random.default_rng(2024)

    bids = sample_bids(spec, vmodel, count=200_000, rng=rng)
    print(f"sampled {len(bids)} profiles, shape {bids.values.shape}")

    rev = itemwise_myerson_revenue(bids.values, reserve=0.5)
    exact = 5.0 / 12.0
    print(f"myerson revenue      {rev:.6f}")
    print(f"analytic 5/12        {exact:.6f}")
    print(f"relative error       {abs(rev - exact) / exact:.4%}")
    assert abs(rev - exact) / exact < 0.01

    # reserve 0 degrades to plain second price; E[min(v1,v2)] = 1/3
    rev0 = itemwise_myerson_revenue(bids.values, reserve=0.0)
    print(f"no-reserve revenue   {rev0:.6f}  (second price, expects 1/3)")

    # feasibility is a worst-case violation measure, 0 for honest allocations
    z = rng.dirichlet(np.ones(spec.n_agents + 1), size=(64, spec.m_items))
    z = np.moveaxis(z[..., : spec.n_agents], 1, 2)  # drop the slack agent
    print(f"feasibility slack    {check_feasibility(z, 'additive'):.2e}")

    # utility bookkeeping: value of what you won minus what you paid
    values = bids.values[:64]
    payments = 0.5 * (values * z).sum(axis=2)
    u = utility(values, z, payments)
    print(f"mean utility         {u.mean():.4f}")
    print(f"mean revenue         {revenue(payments):.4f}")


if __name__ == "__main__":
    main()
