"""Allocation scoring rules, plurality labeling, probit label noise, and pca.

Three rules ship, all oriented so that larger is better:

  tvf      penalizes items allocated differently across item pairs,
           with slack d before any penalty accrues
  entropy  rewards agents whose allocation rows are spread out
  quota    rewards keeping every item's smallest agent share above a floor

Labels come from plurality votes against sampled peers, and an optional
probit noise model flips labels near the decision boundary, imitating an
unreliable annotator.
"""

import numpy as np

from mechlearn import (
    AuctionSpec,
    PreferenceFunction,
    ProbitNoiseModel,
    build_labels,
    class_balance,
    pca,
    preference_score,
    probit_flip,
    uniform_allocations,
)


def main():
    even = np.full((2, 2), 0.5)
    lopsided = np.array([[1.0, 0.0], [0.0, 1.0]])

    for kind in ("tvf", "entropy", "quota"):
        fn = PreferenceFunction(kind=kind)
        print(f"{kind:8s} even {preference_score(fn, even):+.4f}   "
              f"lopsided {preference_score(fn, lopsided):+.4f}")

    # slack widens the no-penalty zone for tvf
    relaxed = PreferenceFunction(kind="tvf", d=2.0)
    print(f"tvf d=2  lopsided {preference_score(relaxed, lopsided):+.4f}  (violation forgiven)")

    spec = AuctionSpec(n_agents=2, m_items=2)
    rng = np.random.default_rng(11)
    pool = uniform_allocations(spec, 3000, rng)

    fn = PreferenceFunction(kind="tvf")
    labeled = build_labels(pool, fn, n_comparisons=11, rng=rng)
    frac = labeled.labels.mean()
    print(f"\nlabeled {len(labeled.labels)} allocations, {frac:.1%} positive")

    # noise flips concentrate near the score boundary
    noise = ProbitNoiseModel()  # mu=0.7, k=1.05, f=0.15
    noisy = probit_flip(labeled.labels, labeled.scores, noise, rng)
    flipped = (noisy != labeled.labels).mean()
    print(f"probit noise flipped {flipped:.1%} of labels (floor {noise.f:.0%})")

    # balancing equalizes the classes for classifier training
    balanced = class_balance(labeled, rng)
    pos = balanced.labels.mean()
    print(f"after balancing: {len(balanced.labels)} rows, {pos:.1%} positive")

    # pca scores a batch against the rule itself (median of a fixed
    # uniform pool is the accept threshold), or against a labeled set
    # by nearest-neighbor lookup
    agreement = pca(pool, fn, spec=spec)
    print(f"\npca of the uniform pool vs tvf threshold: {agreement:.3f} (should sit near 0.5)")

    probe = np.full((50, 2, 2), 0.5) + 0.02 * rng.normal(size=(50, 2, 2))
    print(f"pca of near-even allocations, known function:  {pca(probe, fn, spec=spec):.3f}")
    print(f"pca of near-even allocations, nearest neighbor: {pca(probe, labeled):.3f}")


if __name__ == "__main__":
    main()
