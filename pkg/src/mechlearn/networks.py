"""Allocation, payment, and preference-scoring networks.

The allocation and payment networks share a feed-forward shape (tanh
trunk) but not parameters. Feasibility and individual rationality hold by
construction:

  * additive allocations put a softmax over the agents plus one dummy
    outside-option row per item, so no item is over-allocated;
  * unit-demand allocations take the elementwise minimum of an
    agents+dummy softmax per item and an items+dummy softmax per agent;
  * payments charge a sigmoid fraction of each agent's realized value,
    so truthful utility is never negative.

The preference scorer is a 3-layer MLP (relu + batch norm, sigmoid head)
over flattened allocations.
"""

from __future__ import annotations

import json

import numpy as np

from . import autodiff as ad
from .auctions import AuctionSpec
from .autodiff import ShapeError, Tensor

__all__ = [
    "Linear",
    "BatchNormLayer",
    "RegretNetModel",
    "PreferenceMLP",
    "save_arrays",
    "load_arrays",
]


class Linear:
    """Dense layer x @ W + b with uniform fan-in scaled initialization."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(in_dim)
        self.W = Tensor(rng.uniform(-bound, bound, size=(in_dim, out_dim)), requires_grad=True)
        self.b = Tensor(rng.uniform(-bound, bound, size=(out_dim,)), requires_grad=True)

    def forward(self, x: Tensor, frozen: bool = False) -> Tensor:
        W, b = (self.W, self.b) if not frozen else (Tensor(self.W.data), Tensor(self.b.data))
        return ad.add(ad.matmul(x, W), b)

    def params(self) -> list[Tensor]:
        return [self.W, self.b]


class BatchNormLayer:
    """Batch normalization state: learnable affine + running statistics."""

    def __init__(self, width: int, momentum: float = 0.9, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(width), requires_grad=True)
        self.beta = Tensor(np.zeros(width), requires_grad=True)
        self.running_mean = np.zeros(width)
        self.running_var = np.ones(width)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x: Tensor, train: bool, frozen: bool = False) -> Tensor:
        gamma, beta = (
            (self.gamma, self.beta) if not frozen else (Tensor(self.gamma.data), Tensor(self.beta.data))
        )
        return ad.batch_norm(
            x, gamma, beta, self.running_mean, self.running_var,
            train=train, momentum=self.momentum, eps=self.eps,
        )

    def params(self) -> list[Tensor]:
        return [self.gamma, self.beta]


def _trunk_forward(layers: list[Linear], x: Tensor, frozen: bool = False) -> Tensor:
    for layer in layers:
        x = ad.tanh(layer.forward(x, frozen))
    return x


class RegretNetModel:
    """Allocation and payment networks for one auction spec."""

    def __init__(self, spec: AuctionSpec, hidden=(100, 100), rng: np.random.Generator = None, seed: int = 0):
        if rng is None:
            rng = np.random.default_rng(seed)
        self.spec = spec
        self.hidden = tuple(int(h) for h in hidden)
        self.seed = seed
        n, m = spec.n_agents, spec.m_items
        in_dim = n * m

        dims = (in_dim,) + self.hidden
        self.alloc_trunk = [Linear(dims[i], dims[i + 1], rng) for i in range(len(self.hidden))]
        if spec.demand_kind == "additive":
            self.alloc_heads = {"item": Linear(dims[-1], (n + 1) * m, rng)}
        else:
            self.alloc_heads = {
                "agent": Linear(dims[-1], n * (m + 1), rng),
                "item": Linear(dims[-1], (n + 1) * m, rng),
            }
        self.pay_trunk = [Linear(dims[i], dims[i + 1], rng) for i in range(len(self.hidden))]
        self.pay_head = Linear(dims[-1], n, rng)

    def _flat_bids(self, bids) -> Tensor:
        x = ad.as_tensor(bids)
        n, m = self.spec.n_agents, self.spec.m_items
        if x.ndim != 3 or x.shape[1:] != (n, m):
            raise ShapeError(
                f"bids must be (L, {n}, {m}), got {x.shape}"
            )
        return ad.reshape(x, (x.shape[0], n * m))

    def allocation(self, bids, frozen: bool = False) -> Tensor:
        """Feasible allocation batch z of shape (L, n_agents, m_items).

        ``frozen`` detaches parameters so gradients flow only to the bids,
        which the misreport adversary relies on.
        """
        x = self._flat_bids(bids)
        L = x.shape[0]
        n, m = self.spec.n_agents, self.spec.m_items
        h = _trunk_forward(self.alloc_trunk, x, frozen)
        item_logits = ad.reshape(self.alloc_heads["item"].forward(h, frozen), (L, n + 1, m))
        item_side = ad.slice_axis(ad.softmax(item_logits, axis=1), axis=1, start=0, stop=n)
        if self.spec.demand_kind == "additive":
            return item_side
        agent_logits = ad.reshape(self.alloc_heads["agent"].forward(h, frozen), (L, n, m + 1))
        agent_side = ad.slice_axis(ad.softmax(agent_logits, axis=2), axis=2, start=0, stop=m)
        return ad.minimum(item_side, agent_side)

    def payment(self, bids, allocation: Tensor, frozen: bool = False) -> Tensor:
        """Payments p_i = sigmoid(head_i) * sum_j b_ij z_ij, shape (L, n)."""
        x = self._flat_bids(bids)
        L = x.shape[0]
        n, m = self.spec.n_agents, self.spec.m_items
        if allocation.shape != (L, n, m):
            raise ShapeError(f"allocation {allocation.shape} does not match bids {(L, n, m)}")
        h = _trunk_forward(self.pay_trunk, x, frozen)
        fraction = ad.sigmoid(self.pay_head.forward(h, frozen))
        realized = ad.tsum(ad.multiply(ad.reshape(x, (L, n, m)), allocation), axis=2)
        return ad.multiply(fraction, realized)

    def params(self) -> list[Tensor]:
        out = []
        for layer in self.alloc_trunk:
            out.extend(layer.params())
        for key in sorted(self.alloc_heads):
            out.extend(self.alloc_heads[key].params())
        for layer in self.pay_trunk:
            out.extend(layer.params())
        out.extend(self.pay_head.params())
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        d = {}
        for i, layer in enumerate(self.alloc_trunk):
            d[f"alloc.trunk{i}.W"], d[f"alloc.trunk{i}.b"] = layer.W.data, layer.b.data
        for key in sorted(self.alloc_heads):
            head = self.alloc_heads[key]
            d[f"alloc.head_{key}.W"], d[f"alloc.head_{key}.b"] = head.W.data, head.b.data
        for i, layer in enumerate(self.pay_trunk):
            d[f"pay.trunk{i}.W"], d[f"pay.trunk{i}.b"] = layer.W.data, layer.b.data
        d["pay.head.W"], d["pay.head.b"] = self.pay_head.W.data, self.pay_head.b.data
        return d

    def load_state_dict(self, d: dict[str, np.ndarray]) -> None:
        own = self.state_dict()
        if set(own) != set(d):
            raise ValueError(f"state dict keys differ: {sorted(set(own) ^ set(d))}")
        for name, arr in own.items():
            if arr.shape != d[name].shape:
                raise ShapeError(f"{name}: shape {d[name].shape} does not match {arr.shape}")
            arr[...] = d[name]

    def meta(self) -> dict:
        return {
            "kind": "regretnet",
            "n_agents": self.spec.n_agents,
            "m_items": self.spec.m_items,
            "demand_kind": self.spec.demand_kind,
            "hidden": list(self.hidden),
            "seed": self.seed,
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "RegretNetModel":
        spec = AuctionSpec(meta["n_agents"], meta["m_items"], meta["demand_kind"])
        return cls(spec, hidden=tuple(meta["hidden"]), seed=meta.get("seed", 0))


class PreferenceMLP:
    """Allocation scorer: 3 dense layers, relu + batch norm, sigmoid head."""

    def __init__(self, in_dim: int, hidden=(100, 100), rng: np.random.Generator = None, seed: int = 0):
        if rng is None:
            rng = np.random.default_rng(seed)
        self.in_dim = int(in_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.seed = seed
        self.l1 = Linear(self.in_dim, self.hidden[0], rng)
        self.bn1 = BatchNormLayer(self.hidden[0])
        self.l2 = Linear(self.hidden[0], self.hidden[1], rng)
        self.bn2 = BatchNormLayer(self.hidden[1])
        self.l3 = Linear(self.hidden[1], 1, rng)

    def scores(self, allocations, train: bool = False, frozen: bool = False) -> Tensor:
        """Scores in (0, 1), shape (L,). Accepts (L, n, m) or (L, in_dim)."""
        x = ad.as_tensor(allocations)
        if x.ndim == 3:
            x = ad.reshape(x, (x.shape[0], x.shape[1] * x.shape[2]))
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"scores: expected (L, {self.in_dim}), got {x.shape}")
        h = ad.relu(self.bn1.forward(self.l1.forward(x, frozen), train, frozen))
        h = ad.relu(self.bn2.forward(self.l2.forward(h, frozen), train, frozen))
        out = ad.sigmoid(self.l3.forward(h, frozen))
        return ad.reshape(out, (x.shape[0],))

    def params(self) -> list[Tensor]:
        return (
            self.l1.params() + self.bn1.params()
            + self.l2.params() + self.bn2.params()
            + self.l3.params()
        )

    def state_dict(self) -> dict[str, np.ndarray]:
        return {
            "l1.W": self.l1.W.data, "l1.b": self.l1.b.data,
            "bn1.gamma": self.bn1.gamma.data, "bn1.beta": self.bn1.beta.data,
            "bn1.mean": self.bn1.running_mean, "bn1.var": self.bn1.running_var,
            "l2.W": self.l2.W.data, "l2.b": self.l2.b.data,
            "bn2.gamma": self.bn2.gamma.data, "bn2.beta": self.bn2.beta.data,
            "bn2.mean": self.bn2.running_mean, "bn2.var": self.bn2.running_var,
            "l3.W": self.l3.W.data, "l3.b": self.l3.b.data,
        }

    def load_state_dict(self, d: dict[str, np.ndarray]) -> None:
        own = self.state_dict()
        if set(own) != set(d):
            raise ValueError(f"state dict keys differ: {sorted(set(own) ^ set(d))}")
        for name, arr in own.items():
            if arr.shape != d[name].shape:
                raise ShapeError(f"{name}: shape {d[name].shape} does not match {arr.shape}")
            arr[...] = d[name]

    def meta(self) -> dict:
        return {"kind": "preference_mlp", "in_dim": self.in_dim,
                "hidden": list(self.hidden), "seed": self.seed}

    @classmethod
    def from_meta(cls, meta: dict) -> "PreferenceMLP":
        return cls(meta["in_dim"], hidden=tuple(meta["hidden"]), seed=meta.get("seed", 0))


def save_arrays(path: str, arrays: dict[str, np.ndarray], meta: dict) -> None:
    """Write named float64 arrays plus a JSON meta block; round-trip exact."""
    payload = {k: np.ascontiguousarray(v, dtype=np.float64) for k, v in arrays.items()}
    payload["__meta__"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
    ).copy()
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_arrays(path: str) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(path) as npz:
        meta = json.loads(bytes(npz["__meta__"]).decode("utf-8"))
        arrays = {k: npz[k] for k in npz.files if k != "__meta__"}
    return arrays, meta
