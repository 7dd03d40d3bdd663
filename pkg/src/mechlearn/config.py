"""Experiment configuration: YAML schema, defaults, presets, round-trip.

Every field has a default; unknown keys anywhere in the tree are hard
errors so a typo cannot silently fall back to a default. The `desk`
preset shrinks sample counts and epochs to laptop scale; `paper` is the
full experiment scale. Preset values are applied first, then the config
file, then explicit flag overrides.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import yaml

from .auctions import AuctionSpec, ValuationModel
from .preferences import PreferenceFunction, ProbitNoiseModel
from .training import TrainConfig

__all__ = ["ConfigError", "ExperimentConfig", "PlotConfig", "PRESETS",
           "load_config", "build_config", "config_to_dict", "dump_config"]


class ConfigError(ValueError):
    """Configuration file is syntactically or semantically invalid."""


PRESETS = {
    "desk": {
        "epochs": 60,
        "regretnet_samples": 20_000,
        "mlp_initial_samples": 10_000,
        "test_samples": 5_000,
        "val_samples": 500,
    },
    "paper": {
        "epochs": 200,
        "regretnet_samples": 160_000,
        "mlp_initial_samples": 80_000,
        "test_samples": 20_000,
        "val_samples": 2_000,
    },
}

_TRAIN_KEYS = {
    "epochs", "regretnet_samples", "mlp_initial_samples", "cotrain_interval",
    "cotrain_samples", "batch_size", "regretnet_lr", "mlp_lr", "mlp_epochs",
    "misreport_steps_train", "misreport_rate_train", "misreport_steps_test",
    "misreport_rate_test", "misreport_restarts_test", "lambda_period",
    "rho_period", "lambda_increment", "rho_increment", "lambda_init",
    "rho_init", "lambda_s_init", "rho_s_init", "test_samples", "val_samples",
    "n_comparisons", "preference_mode", "alpha", "beta", "gamma", "hidden",
    "noise",
}
_NOISE_KEYS = {"mu", "sigma", "k", "f", "normalize"}
_AUCTION_KEYS = {"n_agents", "m_items", "demand_kind"}
_VALUATION_KEYS = {"low", "high", "scale"}
_PREFERENCE_KEYS = {"kind", "d", "t", "components"}
_COMPONENT_KEYS = {"fraction", "kind", "d", "t"}
_PLOT_KEYS = {"resolution", "coords", "pins", "agent"}
_TOP_KEYS = {"label", "seed", "out_dir", "reserve", "pca_threshold",
             "auction", "valuation", "preference", "train", "plot"}


@dataclass(frozen=True)
class PlotConfig:
    """Which two bid coordinates a plot sweeps and where the rest sit."""

    resolution: int = 25
    coords: tuple = ((0, 0), (0, 1))
    pins: float | None = None
    agent: int | None = None

    def __post_init__(self):
        coords = tuple((int(a), int(j)) for a, j in self.coords)
        object.__setattr__(self, "coords", coords)
        if len(coords) != 2:
            raise ConfigError("plot.coords must name two (agent, item) pairs")


@dataclass(frozen=True)
class ExperimentConfig:
    spec: AuctionSpec = field(default_factory=AuctionSpec)
    valuation: ValuationModel = field(default_factory=ValuationModel)
    preference: PreferenceFunction = field(default_factory=lambda: PreferenceFunction("tvf"))
    train: TrainConfig = field(default_factory=TrainConfig)
    plot: PlotConfig = field(default_factory=PlotConfig)
    label: str = "run"
    out_dir: str = "runs/latest"
    reserve: float = 0.5
    pca_threshold: float | None = None


def _reject_unknown(section: str, data: dict, allowed: set) -> None:
    extra = set(data) - allowed
    if extra:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(sorted(extra))}")


def _as_mapping(section: str, value) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"{section} must be a mapping, got {type(value).__name__}")
    return value


def _build_preference(data: dict) -> PreferenceFunction:
    _reject_unknown("preference", data, _PREFERENCE_KEYS)
    kind = data.get("kind", "tvf")
    if kind == "mixture":
        raw = data.get("components") or []
        comps = []
        for k, comp in enumerate(raw):
            comp = _as_mapping(f"preference.components[{k}]", comp)
            _reject_unknown(f"preference.components[{k}]", comp, _COMPONENT_KEYS)
            sub = PreferenceFunction(
                comp.get("kind", "tvf"), d=float(comp.get("d", 0.0)),
                t=None if comp.get("t") is None else float(comp["t"]),
            )
            comps.append((float(comp.get("fraction", 0.0)), sub))
        return PreferenceFunction("mixture", components=tuple(comps))
    if data.get("components"):
        raise ConfigError("preference.components is only valid for kind: mixture")
    return PreferenceFunction(
        kind, d=float(data.get("d", 0.0)),
        t=None if data.get("t") is None else float(data["t"]),
    )


def _check_quota_threshold(fn: PreferenceFunction, n_agents: int) -> None:
    funcs = [fn] if fn.kind != "mixture" else [sub for _, sub in fn.components]
    for f in funcs:
        if f.kind == "quota" and not 0 < f.quota_threshold(n_agents) < 1.0 / n_agents:
            raise ConfigError(
                f"quota threshold {f.quota_threshold(n_agents):g} must lie in "
                f"(0, 1/{n_agents}) to be satisfiable"
            )


def build_config(data: dict, preset: str | None = None,
                 seed: int | None = None, out_dir: str | None = None) -> ExperimentConfig:
    """Assemble a validated ExperimentConfig from a parsed mapping."""
    data = _as_mapping("config", copy.deepcopy(data))
    _reject_unknown("config", data, _TOP_KEYS)

    auction = _as_mapping("auction", data.get("auction"))
    _reject_unknown("auction", auction, _AUCTION_KEYS)
    try:
        spec = AuctionSpec(
            int(auction.get("n_agents", 2)), int(auction.get("m_items", 2)),
            auction.get("demand_kind", "additive"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc))

    valuation = _as_mapping("valuation", data.get("valuation"))
    _reject_unknown("valuation", valuation, _VALUATION_KEYS)
    try:
        vmodel = ValuationModel(
            float(valuation.get("low", 0.0)), float(valuation.get("high", 1.0)),
            None if valuation.get("scale") is None else tuple(valuation["scale"]),
        )
        vmodel.scale_vector(spec.n_agents)
    except ValueError as exc:
        raise ConfigError(str(exc))

    try:
        fn = _build_preference(_as_mapping("preference", data.get("preference")))
        _check_quota_threshold(fn, spec.n_agents)
    except ValueError as exc:
        raise ConfigError(str(exc))

    train_data = _as_mapping("train", data.get("train"))
    _reject_unknown("train", train_data, _TRAIN_KEYS)
    merged = dict(PRESETS.get(preset, {})) if preset else {}
    merged.update(train_data)
    noise = None
    if merged.get("noise") is not None:
        noise_data = _as_mapping("train.noise", merged["noise"])
        _reject_unknown("train.noise", noise_data, _NOISE_KEYS)
        try:
            noise = ProbitNoiseModel(
                mu=float(noise_data.get("mu", 0.7)),
                sigma=None if noise_data.get("sigma") is None else float(noise_data["sigma"]),
                k=float(noise_data.get("k", 1.05)),
                f=float(noise_data.get("f", 0.15)),
                normalize=bool(noise_data.get("normalize", True)),
            )
        except ValueError as exc:
            raise ConfigError(str(exc))
    merged.pop("noise", None)
    if "hidden" in merged:
        merged["hidden"] = tuple(int(h) for h in merged["hidden"])
    run_seed = seed if seed is not None else int(data.get("seed", 0))
    try:
        train = TrainConfig(noise=noise, seed=run_seed, **merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))

    plot_data = _as_mapping("plot", data.get("plot"))
    _reject_unknown("plot", plot_data, _PLOT_KEYS)
    # default slice: one agent's first two bids, else two agents on one item
    default_coords = ((0, 0), (0, 1)) if spec.m_items >= 2 else ((0, 0), (min(1, spec.n_agents - 1), 0))
    try:
        plot = PlotConfig(
            resolution=int(plot_data.get("resolution", 25)),
            coords=tuple(tuple(c) for c in plot_data.get("coords", default_coords)),
            pins=None if plot_data.get("pins") is None else float(plot_data["pins"]),
            agent=None if plot_data.get("agent") is None else int(plot_data["agent"]),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"plot: {exc}")

    return ExperimentConfig(
        spec=spec, valuation=vmodel, preference=fn, train=train, plot=plot,
        label=str(data.get("label", "run")),
        out_dir=out_dir if out_dir is not None else str(data.get("out_dir", "runs/latest")),
        reserve=float(data.get("reserve", 0.5)),
        pca_threshold=None if data.get("pca_threshold") is None else float(data["pca_threshold"]),
    )


def load_config(path: str | None, preset: str | None = None,
                seed: int | None = None, out_dir: str | None = None) -> ExperimentConfig:
    """Parse a YAML config file (or defaults when path is None)."""
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"{path}:{mark.line + 1}" if mark is not None else path
            raise ConfigError(f"{where}: {exc}")
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}")
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:1: top level must be a mapping")
    return build_config(data, preset=preset, seed=seed, out_dir=out_dir)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Plain mapping that round-trips through build_config unchanged."""
    pref: dict = {"kind": cfg.preference.kind, "d": cfg.preference.d, "t": cfg.preference.t}
    if cfg.preference.kind == "mixture":
        pref["components"] = [
            {"fraction": f, "kind": sub.kind, "d": sub.d, "t": sub.t}
            for f, sub in cfg.preference.components
        ]
    noise = None
    if cfg.train.noise is not None:
        nm = cfg.train.noise
        noise = {"mu": nm.mu, "sigma": nm.sigma, "k": nm.k, "f": nm.f, "normalize": nm.normalize}
    train = {
        name: getattr(cfg.train, name)
        for name in sorted(_TRAIN_KEYS - {"noise", "hidden"})
    }
    train["hidden"] = list(cfg.train.hidden)
    train["noise"] = noise
    return {
        "label": cfg.label,
        "seed": cfg.train.seed,
        "out_dir": cfg.out_dir,
        "reserve": cfg.reserve,
        "pca_threshold": cfg.pca_threshold,
        "auction": {
            "n_agents": cfg.spec.n_agents, "m_items": cfg.spec.m_items,
            "demand_kind": cfg.spec.demand_kind,
        },
        "valuation": {
            "low": cfg.valuation.low, "high": cfg.valuation.high,
            "scale": None if cfg.valuation.scale is None else list(cfg.valuation.scale),
        },
        "preference": pref,
        "train": train,
        "plot": {
            "resolution": cfg.plot.resolution,
            "coords": [list(c) for c in cfg.plot.coords],
            "pins": cfg.plot.pins,
            "agent": cfg.plot.agent,
        },
    }


def dump_config(cfg: ExperimentConfig, path: str) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=False)
