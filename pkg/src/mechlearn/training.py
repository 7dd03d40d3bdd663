"""Training loop: misreport adversary, constrained loss, co-training, selection.

The outer loop minimizes

    C = -(mean revenue) + sum_i lambda_r_i * rgt_i + (rho_r/2) * sum_i rgt_i^2
        - sum_j pref_j

over RegretNet parameters, where rgt_i is each agent's batch-averaged
positive utility gain from the adversary's best found misreport and
pref_j scores the batch's allocations (frozen preference MLP by default;
the analytic score in penalty mode; an augmented-Lagrangian form of the
MLP term in mlp_lagrangian mode). lambda_r and rho_r grow on fixed
iteration schedules. Every ``cotrain_interval`` epochs the MLP is
retrained on its cumulative pool extended with current allocations
pseudo-labeled by the MLP itself.

Model selection maximizes

    alpha * pca + beta * (mean payment / M_p) + gamma * (1 - mean regret / M_r)

where M_p and M_r are the largest per-checkpoint maximum payment and
regret seen anywhere in training; ties go to the earliest epoch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .auctions import AuctionSpec, BidBatch, ValuationModel, sample_bids
from .autodiff import Tape, Tensor
from .networks import PreferenceMLP, RegretNetModel
from .optim import Adam
from .preferences import (
    LabeledAllocationSet,
    PreferenceFunction,
    ProbitNoiseModel,
    build_labels,
    class_balance,
    pca,
    preference_score_tensor,
    probit_flip,
    uniform_allocations,
)
from .seeding import stream

__all__ = [
    "TrainConfig",
    "LagrangeState",
    "Checkpoint",
    "TrainResult",
    "compute_misreports",
    "regret_matrix",
    "loss_eq1",
    "loss_lagrangian_pref",
    "pretrain_mlp",
    "cotrain_step",
    "train",
    "validate_select",
    "evaluate",
    "restore_model",
    "save_checkpoint",
    "load_checkpoint",
]

PREFERENCE_MODES = ("mlp", "mlp_lagrangian", "penalty", "none")


@dataclass(frozen=True)
class TrainConfig:
    """All knobs of one training run. Defaults are full experiment scale."""

    epochs: int = 200
    regretnet_samples: int = 160_000
    mlp_initial_samples: int = 80_000
    cotrain_interval: int = 5
    cotrain_samples: int = 5_000
    batch_size: int = 128
    regretnet_lr: float = 1e-3
    mlp_lr: float = 1e-3
    mlp_epochs: int = 10
    misreport_steps_train: int = 25
    misreport_rate_train: float = 0.1
    misreport_steps_test: int = 200
    misreport_rate_test: float = 0.1
    misreport_restarts_test: int = 10
    lambda_period: int = 25
    rho_period: int = 2_500
    lambda_increment: float = 1.0
    rho_increment: float = 1.0
    lambda_init: float = 5.0
    rho_init: float = 1.0
    lambda_s_init: float = 1.0
    rho_s_init: float = 1.0
    test_samples: int = 20_000
    val_samples: int = 1_000
    n_comparisons: int = 11
    preference_mode: str = "mlp"
    noise: ProbitNoiseModel | None = None
    alpha: float = 0.45
    beta: float = 0.1
    gamma: float = 0.45
    hidden: tuple = (100, 100)
    seed: int = 0

    def __post_init__(self):
        for name in (
            "regretnet_samples", "mlp_initial_samples", "cotrain_interval",
            "batch_size", "test_samples", "val_samples", "n_comparisons",
            "lambda_period", "rho_period", "mlp_epochs",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"TrainConfig: {name} must be positive")
        if self.epochs < 0 or self.cotrain_samples < 0:
            raise ValueError("TrainConfig: epochs and cotrain_samples must be >= 0")
        if self.preference_mode not in PREFERENCE_MODES:
            raise ValueError(
                f"TrainConfig: preference_mode must be one of {PREFERENCE_MODES}"
            )
        if abs(self.alpha + self.beta + self.gamma - 1.0) > 1e-9:
            raise ValueError("TrainConfig: alpha + beta + gamma must equal 1")


@dataclass
class LagrangeState:
    """Multipliers and quadratic weights on the fixed increment schedule."""

    lambda_r: np.ndarray
    rho_r: float
    lambda_s: np.ndarray | None = None
    rho_s: float | None = None

    @classmethod
    def fresh(cls, n_agents: int, config: TrainConfig) -> "LagrangeState":
        lam_s = rho_s = None
        if config.preference_mode == "mlp_lagrangian":
            lam_s = np.full(config.batch_size, config.lambda_s_init)
            rho_s = config.rho_s_init
        return cls(np.full(n_agents, config.lambda_init), config.rho_init, lam_s, rho_s)

    def tick(self, iteration: int, config: TrainConfig) -> None:
        """Apply the schedule after completing 1-indexed ``iteration``."""
        if iteration % config.lambda_period == 0:
            self.lambda_r += config.lambda_increment
            if self.lambda_s is not None:
                self.lambda_s += config.lambda_increment
        if iteration % config.rho_period == 0:
            self.rho_r += config.rho_increment
            if self.rho_s is not None:
                self.rho_s += config.rho_increment

    def snapshot(self) -> "LagrangeState":
        return LagrangeState(
            self.lambda_r.copy(), float(self.rho_r),
            None if self.lambda_s is None else self.lambda_s.copy(),
            None if self.rho_s is None else float(self.rho_s),
        )


@dataclass
class Checkpoint:
    """Frozen view of one epoch: parameters, multipliers, validation metrics."""

    epoch: int
    regretnet_state: dict
    mlp_state: dict | None
    lagrange: LagrangeState
    metrics: dict
    seed: int

    def criterion_inputs(self) -> tuple:
        m = self.metrics
        return (m["pca"], m["payment_mean"], m["payment_max"], m["regret_mean"], m["regret_max"])


@dataclass
class TrainResult:
    checkpoints: list
    model: RegretNetModel
    mlp: PreferenceMLP | None
    initial_labeled: LabeledAllocationSet | None
    flip_fraction: float | None
    aborted: bool
    iterations: int


# ---------------------------------------------------------------------------
# misreport adversary


def _mixed_profiles(truth: np.ndarray, mis: np.ndarray) -> np.ndarray:
    """(L*n, n, m) profiles: slot (l, i) is truth[l] with row i from mis[l]."""
    L, n, m = truth.shape
    mixed = np.repeat(truth, n, axis=0)
    mixed[np.arange(L * n), np.tile(np.arange(n), L), :] = mis.reshape(L * n, m)
    return mixed


def _slot_masks(truth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Constant masks extracting slot (l, i)'s own utility from tiled outputs.

    W[(l,i), i', j] = truth[l, i, j] if i' == i else 0 (truthful values of
    the deviating agent); M[(l,i), i'] = 1 iff i' == i.
    """
    L, n, m = truth.shape
    M = np.tile(np.eye(n), (L, 1))
    W = M[:, :, None] * truth.reshape(L * n, m)[:, None, :]
    return W, M


def _misreport_utilities(model: RegretNetModel, mixed: Tensor, W, M) -> Tensor:
    """Utility of each deviating slot, shape (L*n,); differentiable."""
    z = model.allocation(mixed, frozen=not mixed.requires_grad)
    p = model.payment(mixed, z, frozen=not mixed.requires_grad)
    Ln = mixed.shape[0]
    value = ad.tsum(ad.reshape(ad.multiply(z, ad.as_tensor(W)), (Ln, W.shape[1] * W.shape[2])), axis=1)
    charge = ad.tsum(ad.multiply(p, ad.as_tensor(M)), axis=1)
    return ad.subtract(value, charge)


def _misreport_utilities_grad_params(model: RegretNetModel, mixed_np: np.ndarray, W, M) -> Tensor:
    """Same utilities but with gradients flowing to model parameters."""
    mixed = Tensor(mixed_np)
    z = model.allocation(mixed)
    p = model.payment(mixed, z)
    Ln = mixed_np.shape[0]
    value = ad.tsum(ad.reshape(ad.multiply(z, ad.as_tensor(W)), (Ln, W.shape[1] * W.shape[2])), axis=1)
    charge = ad.tsum(ad.multiply(p, ad.as_tensor(M)), axis=1)
    return ad.subtract(value, charge)


def _ascend(model, truth, init, lo, hi, steps, rate, W, M) -> np.ndarray:
    """Gradient ascent on each slot's utility over its own bid row."""
    L, n, m = truth.shape
    mis = np.clip(init, lo, hi).copy()
    rows = np.arange(L * n)
    cols = np.tile(np.arange(n), L)
    for _ in range(steps):
        mixed = Tensor(_mixed_profiles(truth, mis), requires_grad=True)
        with Tape() as tape:
            u = _misreport_utilities(model, mixed, W, M)
            total = ad.tsum(u)
        tape.backward(total)
        step_dir = mixed.grad[rows, cols, :].reshape(L, n, m)
        mis = np.clip(mis + rate * step_dir, lo, hi)
    return mis


def _slot_utility_values(model, truth, mis, W, M) -> np.ndarray:
    """(L, n) utilities of each agent's candidate misreport, no gradients."""
    mixed = Tensor(_mixed_profiles(truth, mis))
    u = _misreport_utilities(model, mixed, W, M)
    return u.data.reshape(truth.shape[0], truth.shape[1])


def compute_misreports(
    model: RegretNetModel,
    truth: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    steps: int,
    rate: float,
    restarts: int = 0,
    rng: np.random.Generator = None,
) -> np.ndarray:
    """Best misreport found per (sample, agent), shape (L, n, m).

    Ascent starts at the truthful bid; ``restarts`` extra starts are drawn
    uniformly on the support and the highest-utility candidate wins. Every
    step projects back onto the support.
    """
    truth = np.asarray(truth, dtype=np.float64)
    if steps < 0 or restarts < 0:
        raise ValueError("compute_misreports: steps and restarts must be >= 0")
    if restarts > 0 and rng is None:
        raise ValueError("compute_misreports: restarts need an rng")
    W, M = _slot_masks(truth)
    best = _ascend(model, truth, truth, lo, hi, steps, rate, W, M)
    if restarts == 0:
        return best
    best_u = _slot_utility_values(model, truth, best, W, M)
    for _ in range(restarts):
        init = rng.uniform(np.broadcast_to(lo, truth.shape), np.broadcast_to(hi, truth.shape))
        cand = _ascend(model, truth, init, lo, hi, steps, rate, W, M)
        cand_u = _slot_utility_values(model, truth, cand, W, M)
        better = cand_u > best_u
        best[better] = cand[better]
        best_u[better] = cand_u[better]
    return best


def regret_matrix(model: RegretNetModel, truth: np.ndarray, mis: np.ndarray) -> np.ndarray:
    """Per-(sample, agent) positive utility gain from misreporting."""
    truth = np.asarray(truth, dtype=np.float64)
    W, M = _slot_masks(truth)
    u_mis = _slot_utility_values(model, truth, mis, W, M)
    bids = Tensor(truth)
    z = model.allocation(bids, frozen=True)
    p = model.payment(bids, z, frozen=True)
    u_truth = (truth * z.data).sum(axis=2) - p.data
    return np.maximum(u_mis - u_truth, 0.0)


# ---------------------------------------------------------------------------
# losses


def loss_eq1(payments: Tensor, regrets: Tensor, lambda_r: np.ndarray, rho_r: float,
             prefs: Tensor | None) -> Tensor:
    """-(mean revenue) + lam . rgt + (rho/2) sum rgt^2 - sum prefs."""
    rev = ad.tmean(ad.tsum(payments, axis=1))
    penalty = ad.tsum(ad.multiply(ad.as_tensor(lambda_r), regrets))
    quad = ad.multiply(ad.as_tensor(rho_r / 2.0), ad.tsum(ad.multiply(regrets, regrets)))
    loss = ad.add(ad.negative(rev), ad.add(penalty, quad))
    if prefs is not None:
        loss = ad.subtract(loss, ad.tsum(prefs))
    return loss


def loss_lagrangian_pref(payments: Tensor, regrets: Tensor, prefs: Tensor,
                         state: LagrangeState) -> Tensor:
    """Variant with the augmented preference term lam_s . pref + (rho_s/2) sum pref^2."""
    if state.lambda_s is None or state.rho_s is None:
        raise ValueError("loss_lagrangian_pref: state has no preference multipliers")
    L = prefs.shape[0]
    lam_s = state.lambda_s[:L]
    pref_term = ad.add(
        ad.tsum(ad.multiply(ad.as_tensor(lam_s), prefs)),
        ad.multiply(ad.as_tensor(state.rho_s / 2.0), ad.tsum(ad.multiply(prefs, prefs))),
    )
    base = loss_eq1(payments, regrets, state.lambda_r, state.rho_r, None)
    return ad.subtract(base, pref_term)


# ---------------------------------------------------------------------------
# preference MLP phases


def _mlp_batches(count: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(count)
    n_batches = max(count // batch_size, 1)
    for b in range(n_batches):
        yield perm[b * batch_size: (b + 1) * batch_size] if count >= batch_size else perm


def mlp_accuracy(mlp: PreferenceMLP, labeled: LabeledAllocationSet) -> float:
    scores = mlp.scores(labeled.allocations, train=False).data
    return float(((scores >= 0.5).astype(np.int64) == labeled.labels).mean())


def pretrain_mlp(
    mlp: PreferenceMLP,
    optimizer: Adam,
    balanced: LabeledAllocationSet,
    config: TrainConfig,
    rng: np.random.Generator,
) -> float:
    """Minimize BCE on a class-balanced set; returns final training accuracy."""
    if balanced.labels.min() == balanced.labels.max():
        raise ValueError("pretrain_mlp: labels are degenerate (single class)")
    flat = balanced.allocations.reshape(len(balanced), -1)
    targets = balanced.labels.astype(np.float64)
    for _ in range(config.mlp_epochs):
        for idx in _mlp_batches(len(balanced), config.batch_size, rng):
            with Tape() as tape:
                scores = mlp.scores(flat[idx], train=True)
                loss = ad.binary_cross_entropy(scores, ad.as_tensor(targets[idx]))
            optimizer.zero_grad()
            tape.backward(loss)
            optimizer.step()
    return mlp_accuracy(mlp, balanced)


def cotrain_step(
    mlp: PreferenceMLP,
    optimizer: Adam,
    model: RegretNetModel,
    raw_pool: LabeledAllocationSet,
    spec: AuctionSpec,
    vmodel: ValuationModel,
    config: TrainConfig,
    rng_bids: np.random.Generator,
    rng_balance: np.random.Generator,
    rng_batches: np.random.Generator,
) -> LabeledAllocationSet:
    """Extend the pool with MLP-pseudo-labeled current allocations, retrain.

    Returns the extended raw pool; the MLP and its optimizer are updated
    in place (optimizer warm-restarted first).
    """
    if config.cotrain_samples > 0:
        bids = sample_bids(spec, vmodel, config.cotrain_samples, rng_bids)
        z = model.allocation(Tensor(bids.values), frozen=True).data
        scores = mlp.scores(z, train=False).data
        pseudo = (scores >= 0.5).astype(np.int64)
        raw_pool = LabeledAllocationSet(
            np.concatenate([raw_pool.allocations, z]),
            np.concatenate([raw_pool.scores, scores]),
            np.concatenate([raw_pool.labels, pseudo]),
            provenance=raw_pool.provenance,
            seed=raw_pool.seed,
        )
    balanced = class_balance(raw_pool, rng_balance)
    optimizer.restart()
    pretrain_mlp(mlp, optimizer, balanced, config, rng_batches)
    return raw_pool


# ---------------------------------------------------------------------------
# metrics, training, selection


def _metric_pass(
    model: RegretNetModel,
    bids: np.ndarray,
    ground_truth,
    spec: AuctionSpec,
    lo: np.ndarray,
    hi: np.ndarray,
    steps: int,
    rate: float,
    restarts: int = 0,
    rng: np.random.Generator = None,
    threshold: float | None = None,
) -> dict:
    z = model.allocation(Tensor(bids), frozen=True)
    p = model.payment(Tensor(bids), z, frozen=True)
    totals = p.data.sum(axis=1)
    mis = compute_misreports(model, bids, lo, hi, steps, rate, restarts, rng)
    rgt = regret_matrix(model, bids, mis)
    return {
        "pca": pca(z.data, ground_truth, spec, threshold=threshold),
        "regret_mean": float(rgt.mean()),
        "regret_std": float(rgt.std()),
        "regret_max": float(rgt.max()),
        "payment_mean": float(totals.mean()),
        "payment_std": float(totals.std()),
        "payment_max": float(totals.max()),
    }


def _prepare_mlp(spec, fn, config):
    """Initial labeling, optional noise, balancing, pretraining."""
    rng_pool = stream(config.seed, "mlp-pool")
    rng_labels = stream(config.seed, "labels")
    pool = uniform_allocations(spec, config.mlp_initial_samples, rng_pool)
    clean = build_labels(pool, fn, config.n_comparisons, rng_labels, seed=config.seed)
    flip_fraction = None
    working = clean
    if config.noise is not None:
        noisy = probit_flip(clean.labels, clean.scores, config.noise, stream(config.seed, "label-noise"))
        flip_fraction = float((noisy != clean.labels).mean())
        working = LabeledAllocationSet(
            clean.allocations, clean.scores, noisy, provenance=clean.provenance, seed=config.seed
        )
    balanced = class_balance(working, stream(config.seed, "class-balance"))
    mlp = PreferenceMLP(spec.n_agents * spec.m_items, hidden=config.hidden,
                        rng=stream(config.seed, "mlp-init"), seed=config.seed)
    opt = Adam(mlp.params(), lr=config.mlp_lr)
    pretrain_mlp(mlp, opt, balanced, config, stream(config.seed, "mlp-batches"))
    return mlp, opt, clean, working, flip_fraction


def train(
    spec: AuctionSpec,
    vmodel: ValuationModel,
    fn: PreferenceFunction,
    config: TrainConfig,
    pca_threshold: float | None = None,
) -> TrainResult:
    """Run the full procedure and return per-epoch checkpoints."""
    model = RegretNetModel(spec, hidden=config.hidden,
                           rng=stream(config.seed, "regretnet-init"), seed=config.seed)
    opt = Adam(model.params(), lr=config.regretnet_lr)
    lo, hi = vmodel.support(spec)

    mlp = mlp_opt = None
    clean_labeled = None
    flip_fraction = None
    raw_pool = None
    if config.preference_mode in ("mlp", "mlp_lagrangian"):
        mlp, mlp_opt, clean_labeled, raw_pool, flip_fraction = _prepare_mlp(spec, fn, config)
    ground_truth = fn if fn.kind != "mixture" else clean_labeled
    if ground_truth is None:
        raise ValueError("train: mixture preferences require MLP mode for ground truth")

    train_bids = sample_bids(spec, vmodel, config.regretnet_samples,
                             stream(config.seed, "train-bids")).values
    val_bids = sample_bids(spec, vmodel, config.val_samples,
                           stream(config.seed, "validation-bids")).values
    rng_shuffle = stream(config.seed, "regretnet-batches")
    rng_cotrain = stream(config.seed, "cotrain-bids")
    rng_cobalance = stream(config.seed, "cotrain-balance")
    rng_cobatches = stream(config.seed, "cotrain-batches")

    state = LagrangeState.fresh(spec.n_agents, config)
    checkpoints: list[Checkpoint] = []
    aborted = False
    iteration = 0
    L = train_bids.shape[0]
    batches_per_epoch = max(L // config.batch_size, 1)

    def snapshot(epoch: int) -> Checkpoint:
        metrics = _metric_pass(
            model, val_bids, ground_truth, spec, lo, hi,
            config.misreport_steps_train, config.misreport_rate_train,
            threshold=pca_threshold,
        )
        return Checkpoint(
            epoch=epoch,
            regretnet_state={k: v.copy() for k, v in model.state_dict().items()},
            mlp_state=None if mlp is None else {k: v.copy() for k, v in mlp.state_dict().items()},
            lagrange=state.snapshot(),
            metrics=metrics,
            seed=config.seed,
        )

    if config.epochs == 0:
        checkpoints.append(snapshot(0))
        return TrainResult(checkpoints, model, mlp, clean_labeled, flip_fraction, False, 0)

    for epoch in range(1, config.epochs + 1):
        perm = rng_shuffle.permutation(L)
        for b in range(batches_per_epoch):
            batch = train_bids[perm[b * config.batch_size: (b + 1) * config.batch_size]]
            if batch.shape[0] == 0:
                continue
            iteration += 1
            mis = compute_misreports(
                model, batch, lo, hi,
                config.misreport_steps_train, config.misreport_rate_train,
            )
            W, M = _slot_masks(batch)
            bids_t = Tensor(batch)
            with Tape() as tape:
                z = model.allocation(bids_t)
                p = model.payment(bids_t, z)
                u_truth = ad.subtract(
                    ad.tsum(ad.multiply(ad.as_tensor(batch), z), axis=2), p
                )
                u_mis = ad.reshape(
                    _misreport_utilities_grad_params(model, _mixed_profiles(batch, mis), W, M),
                    u_truth.shape,
                )
                rgt = ad.tmean(ad.relu(ad.subtract(u_mis, u_truth)), axis=0)
                prefs = None
                if config.preference_mode in ("mlp", "mlp_lagrangian"):
                    prefs = mlp.scores(z, train=False, frozen=True)
                elif config.preference_mode == "penalty":
                    prefs = preference_score_tensor(fn, z)
                if config.preference_mode == "mlp_lagrangian":
                    loss = loss_lagrangian_pref(p, rgt, prefs, state)
                else:
                    loss = loss_eq1(p, rgt, state.lambda_r, state.rho_r, prefs)
            if not np.isfinite(loss.data):
                aborted = True
                break
            opt.zero_grad()
            tape.backward(loss)
            opt.step()
            state.tick(iteration, config)
        if aborted:
            break
        if mlp is not None and epoch % config.cotrain_interval == 0:
            raw_pool = cotrain_step(
                mlp, mlp_opt, model, raw_pool, spec, vmodel, config,
                rng_cotrain, rng_cobalance, rng_cobatches,
            )
        checkpoints.append(snapshot(epoch))

    if not checkpoints:
        checkpoints.append(snapshot(0))
    return TrainResult(checkpoints, model, mlp, clean_labeled, flip_fraction, aborted, iteration)


def validate_select(checkpoints: list, alpha: float = 0.45, beta: float = 0.1,
                    gamma: float = 0.45) -> int:
    """Index of the checkpoint maximizing the weighted selection criterion."""
    if not checkpoints:
        raise ValueError("validate_select: no checkpoints")
    if abs(alpha + beta + gamma - 1.0) > 1e-9:
        raise ValueError("validate_select: weights must sum to 1")
    max_pay = max(c.metrics["payment_max"] for c in checkpoints)
    max_rgt = max(c.metrics["regret_max"] for c in checkpoints)
    best_idx, best_score = 0, -np.inf
    for idx, c in enumerate(checkpoints):
        pay_term = c.metrics["payment_mean"] / max_pay if max_pay > 0 else 0.0
        rgt_term = 1.0 - (c.metrics["regret_mean"] / max_rgt if max_rgt > 0 else 0.0)
        score = alpha * c.metrics["pca"] + beta * pay_term + gamma * rgt_term
        if score > best_score:
            best_idx, best_score = idx, score
    return best_idx


def restore_model(checkpoint: Checkpoint, spec: AuctionSpec, hidden=(100, 100)) -> RegretNetModel:
    model = RegretNetModel(spec, hidden=hidden, seed=checkpoint.seed)
    model.load_state_dict(checkpoint.regretnet_state)
    return model


def save_checkpoint(path: str, checkpoint: Checkpoint, model_meta: dict,
                    mlp_meta: dict | None = None, extra: dict | None = None) -> None:
    """Write one checkpoint as named arrays plus a JSON meta block."""
    from .networks import save_arrays

    arrays = {f"regretnet.{k}": v for k, v in checkpoint.regretnet_state.items()}
    if checkpoint.mlp_state is not None:
        arrays.update({f"mlp.{k}": v for k, v in checkpoint.mlp_state.items()})
    lag = checkpoint.lagrange
    meta = {
        "version": 1,
        "kind": "checkpoint",
        "epoch": checkpoint.epoch,
        "seed": checkpoint.seed,
        "metrics": {k: float(v) for k, v in checkpoint.metrics.items()},
        "lambda_r": [float(x) for x in lag.lambda_r],
        "rho_r": float(lag.rho_r),
        "lambda_s": None if lag.lambda_s is None else [float(x) for x in lag.lambda_s],
        "rho_s": None if lag.rho_s is None else float(lag.rho_s),
        "regretnet": model_meta,
        "mlp": mlp_meta,
    }
    if extra:
        meta["extra"] = extra
    save_arrays(path, arrays, meta)


def load_checkpoint(path: str) -> tuple[Checkpoint, dict]:
    """Read a checkpoint file; returns (checkpoint, meta)."""
    from .networks import load_arrays

    arrays, meta = load_arrays(path)
    if meta.get("kind") != "checkpoint":
        raise ValueError(f"{path}: not a checkpoint file")
    regretnet = {k[len("regretnet."):]: v for k, v in arrays.items() if k.startswith("regretnet.")}
    mlp = {k[len("mlp."):]: v for k, v in arrays.items() if k.startswith("mlp.")}
    lagrange = LagrangeState(
        np.asarray(meta["lambda_r"], dtype=np.float64),
        float(meta["rho_r"]),
        None if meta.get("lambda_s") is None else np.asarray(meta["lambda_s"], dtype=np.float64),
        None if meta.get("rho_s") is None else float(meta["rho_s"]),
    )
    checkpoint = Checkpoint(
        epoch=int(meta["epoch"]),
        regretnet_state=regretnet,
        mlp_state=mlp or None,
        lagrange=lagrange,
        metrics=dict(meta["metrics"]),
        seed=int(meta["seed"]),
    )
    return checkpoint, meta


def evaluate(
    model: RegretNetModel,
    spec: AuctionSpec,
    ground_truth,
    test_bids: BidBatch,
    vmodel: ValuationModel,
    config: TrainConfig,
    pca_threshold: float | None = None,
) -> dict:
    """Test metrics under the strong adversary (long ascent, restarts)."""
    lo, hi = vmodel.support(spec)
    return _metric_pass(
        model, test_bids.values, ground_truth, spec, lo, hi,
        config.misreport_steps_test, config.misreport_rate_test,
        restarts=config.misreport_restarts_test,
        rng=stream(config.seed, "test-misreport-restarts"),
        threshold=pca_threshold,
    )
