"""Sealed-bid auction model: valuations, feasibility, utility, revenue.

An allocation batch is an (L, n_agents, m_items) array of probabilities z,
agent-major. Feasibility means no item is allocated more than once in
expectation (sum over agents per item <= 1); unit-demand auctions further
require each agent to receive at most one item in expectation (row sums
<= 1). Payments are (L, n_agents).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ShapeError

__all__ = [
    "AuctionSpec",
    "ValuationModel",
    "BidBatch",
    "sample_bids",
    "utility",
    "revenue",
    "check_feasibility",
    "itemwise_myerson_revenue",
    "bids_to_csv",
    "bids_from_csv",
]

DEMAND_KINDS = ("additive", "unit_demand")


@dataclass(frozen=True)
class AuctionSpec:
    """Auction shape: number of agents, number of items, demand structure."""

    n_agents: int
    m_items: int
    demand_kind: str = "additive"

    def __post_init__(self):
        if self.n_agents < 1 or self.m_items < 1:
            raise ValueError(
                f"AuctionSpec: need n_agents >= 1 and m_items >= 1, "
                f"got {self.n_agents}x{self.m_items}"
            )
        if self.demand_kind not in DEMAND_KINDS:
            raise ValueError(
                f"AuctionSpec: demand_kind must be one of {DEMAND_KINDS}, "
                f"got {self.demand_kind!r}"
            )


@dataclass(frozen=True)
class ValuationModel:
    """Per-(agent, item) uniform distribution with per-agent scale factors.

    Draws are u ~ U[low, high] multiplied by the agent's scale, so
    ``low=0, high=1, scale=(2, 1)`` puts agent 0's values in [0, 2].
    """

    low: float = 0.0
    high: float = 1.0
    scale: tuple = None  # per-agent multipliers; None means all ones

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(f"ValuationModel: need low < high, got [{self.low}, {self.high}]")
        if self.scale is not None:
            object.__setattr__(self, "scale", tuple(float(s) for s in self.scale))
            if any(s <= 0 for s in self.scale):
                raise ValueError("ValuationModel: scale factors must be positive")

    def scale_vector(self, n_agents: int) -> np.ndarray:
        if self.scale is None:
            return np.ones(n_agents)
        if len(self.scale) != n_agents:
            raise ValueError(
                f"ValuationModel: {len(self.scale)} scale factors for {n_agents} agents"
            )
        return np.asarray(self.scale, dtype=np.float64)

    def support(self, spec: AuctionSpec) -> tuple[np.ndarray, np.ndarray]:
        """(lo, hi) arrays of shape (n_agents, m_items) bounding every draw."""
        s = self.scale_vector(spec.n_agents)[:, None]
        lo = np.full((spec.n_agents, spec.m_items), self.low) * s
        hi = np.full((spec.n_agents, spec.m_items), self.high) * s
        return lo, hi


@dataclass(frozen=True)
class BidBatch:
    """Sampled valuation profiles, shape (count, n_agents, m_items)."""

    values: np.ndarray
    seed: int = field(default=0)

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 3:
            raise ShapeError(f"BidBatch: values must be 3-d, got shape {self.values.shape}")

    def __len__(self) -> int:
        return self.values.shape[0]


def sample_bids(
    spec: AuctionSpec, model: ValuationModel, count: int, rng: np.random.Generator, seed: int = 0
) -> BidBatch:
    """Draw ``count`` i.i.d. valuation profiles from ``model``."""
    if count < 1:
        raise ValueError(f"sample_bids: count must be >= 1, got {count}")
    u = rng.uniform(model.low, model.high, size=(count, spec.n_agents, spec.m_items))
    u *= model.scale_vector(spec.n_agents)[None, :, None]
    return BidBatch(values=u, seed=seed)


def utility(values: np.ndarray, allocation: np.ndarray, payments: np.ndarray) -> np.ndarray:
    """Per-agent utility sum_j v_ij z_ij - p_i. Batched or single profile."""
    values = np.asarray(values, dtype=np.float64)
    allocation = np.asarray(allocation, dtype=np.float64)
    payments = np.asarray(payments, dtype=np.float64)
    if values.shape != allocation.shape:
        raise ShapeError(f"utility: values {values.shape} vs allocation {allocation.shape}")
    if payments.shape != values.shape[:-1]:
        raise ShapeError(f"utility: payments {payments.shape} vs values {values.shape}")
    return (values * allocation).sum(axis=-1) - payments


def revenue(payments: np.ndarray) -> float:
    """Mean over the batch of total payment per profile."""
    payments = np.asarray(payments, dtype=np.float64)
    if payments.size == 0:
        raise ValueError("revenue: empty payment batch")
    if payments.ndim == 1:
        payments = payments[None, :]
    return float(payments.sum(axis=-1).mean())


def check_feasibility(allocation: np.ndarray, demand_kind: str) -> float:
    """Largest constraint violation of an allocation or allocation batch.

    Items may be allocated at most once in expectation for both demand
    kinds; unit-demand additionally caps each agent's expected item count
    at one. Returns 0.0 when feasible.
    """
    if demand_kind not in DEMAND_KINDS:
        raise ValueError(f"check_feasibility: unknown demand_kind {demand_kind!r}")
    z = np.asarray(allocation, dtype=np.float64)
    if z.ndim == 2:
        z = z[None]
    if z.ndim != 3:
        raise ShapeError(f"check_feasibility: allocation must be 2-d or 3-d, got {z.shape}")
    item_excess = np.maximum(z.sum(axis=1) - 1.0, 0.0).max()
    range_excess = max(np.maximum(-z, 0.0).max(), np.maximum(z - 1.0, 0.0).max())
    worst = max(float(item_excess), float(range_excess))
    if demand_kind == "unit_demand":
        agent_excess = np.maximum(z.sum(axis=2) - 1.0, 0.0).max()
        worst = max(worst, float(agent_excess))
    return worst


def itemwise_myerson_revenue(bids: np.ndarray, reserve) -> float:
    """Mean revenue of the per-item second-price auction with reserves.

    Per item, the highest bidder wins iff their bid meets the reserve and
    pays max(second-highest bid, reserve). Single-bidder items treat the
    second-highest bid as 0.
    """
    b = np.asarray(bids, dtype=np.float64)
    if b.ndim != 3:
        raise ShapeError(f"itemwise_myerson_revenue: bids must be 3-d, got {b.shape}")
    L, n, m = b.shape
    r = np.broadcast_to(np.asarray(reserve, dtype=np.float64), (m,))
    top = b.max(axis=1)
    if n >= 2:
        second = np.partition(b, n - 2, axis=1)[:, n - 2, :]
    else:
        second = np.zeros((L, m))
    price = np.maximum(second, r[None, :])
    sold = top >= r[None, :]
    return float((price * sold).sum(axis=1).mean())


# ---------------------------------------------------------------------------
# CSV interchange

BID_CSV_HEADER = ["sample", "agent", "item", "value"]


def bids_to_csv(batch: BidBatch, path: str) -> None:
    """Write a bid batch as long-form rows `sample,agent,item,value`."""
    L, n, m = batch.values.shape
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BID_CSV_HEADER)
        for s in range(L):
            for i in range(n):
                for j in range(m):
                    writer.writerow([s, i, j, repr(float(batch.values[s, i, j]))])


def bids_from_csv(path: str) -> BidBatch:
    """Read a bid batch written by :func:`bids_to_csv`; requires a full grid."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != BID_CSV_HEADER:
            raise ValueError(f"{path}:1: expected header {','.join(BID_CSV_HEADER)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                rows.append((int(row[0]), int(row[1]), int(row[2]), float(row[3])))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed row {row!r}")
    if not rows:
        raise ValueError(f"{path}: no data rows")
    L = max(r[0] for r in rows) + 1
    n = max(r[1] for r in rows) + 1
    m = max(r[2] for r in rows) + 1
    if len(rows) != L * n * m:
        raise ValueError(f"{path}: expected {L * n * m} rows for a full grid, got {len(rows)}")
    values = np.zeros((L, n, m))
    for s, i, j, v in rows:
        values[s, i, j] = v
    return BidBatch(values=values)
