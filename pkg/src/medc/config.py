"""JSON run configuration with strict unknown-key validation."""

import json

from .data import SyntheticConfig, zipf_counts
from .losses import LossWeights
from .model import EXPERT_KINDS
from .training import TrainConfig

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


def _check_keys(section, d, allowed):
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} in config section "
                          f"{section!r} (allowed: {sorted(allowed)})")


_DATA_KEYS = ("C", "D", "L", "counts", "zipf", "class_sep", "noise",
              "temporal_jitter", "multilabel_prob")
_ZIPF_KEYS = ("max_count", "exponent", "min_count")
_TRAIN_KEYS = ("learning_rate", "epochs", "batch_size", "lambda1", "lambda2",
               "lambda3", "d_trunk", "hidden", "d", "phi_depth",
               "active_experts", "temporal_attention", "gamma_low",
               "gamma_high", "gamma_uniform", "tau", "checkpoint_every",
               "strict_cls")
_EVAL_KEYS = ("head_threshold", "medium_threshold", "test_fraction")
_TOP_KEYS = ("version", "seed", "out_dir", "data", "train", "eval")


class RunConfig:
    def __init__(self, raw):
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        _check_keys("<root>", raw, _TOP_KEYS)
        if raw.get("version", CONFIG_VERSION) != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {raw.get('version')}")
        if "seed" not in raw:
            raise ConfigError("config is missing required key 'seed'")
        self.seed = int(raw["seed"])
        self.out_dir = raw.get("out_dir")
        self.raw = raw

        data = dict(raw.get("data", {}))
        _check_keys("data", data, _DATA_KEYS)
        self._data = data

        tr = dict(raw.get("train", {}))
        _check_keys("train", tr, _TRAIN_KEYS)
        self._train = tr

        ev = dict(raw.get("eval", {}))
        _check_keys("eval", ev, _EVAL_KEYS)
        self.head_threshold = int(ev.get("head_threshold", 500))
        self.medium_threshold = int(ev.get("medium_threshold", 100))
        self.test_fraction = float(ev.get("test_fraction", 0.25))

    def synthetic_config(self, seed=None):
        d = dict(self._data)
        if "C" not in d or "D" not in d or "L" not in d:
            raise ConfigError("config section 'data' needs C, D and L")
        if "counts" in d and "zipf" in d:
            raise ConfigError("config section 'data': give either counts or zipf, not both")
        if "counts" in d:
            counts = [int(n) for n in d.pop("counts")]
        elif "zipf" in d:
            z = dict(d.pop("zipf"))
            _check_keys("data.zipf", z, _ZIPF_KEYS)
            counts = zipf_counts(int(d["C"]), int(z["max_count"]),
                                 float(z.get("exponent", 1.0)),
                                 int(z.get("min_count", 1)))
        else:
            raise ConfigError("config section 'data' needs counts or zipf")
        return SyntheticConfig(C=int(d["C"]), D=int(d["D"]), L=int(d["L"]),
                               counts=counts,
                               class_sep=float(d.get("class_sep", 4.0)),
                               noise=float(d.get("noise", 0.5)),
                               temporal_jitter=float(d.get("temporal_jitter", 0.1)),
                               multilabel_prob=float(d.get("multilabel_prob", 0.0)),
                               seed=self.seed if seed is None else seed)

    def train_config(self, seed=None):
        tr = self._train
        weights = LossWeights(lambda1=float(tr.get("lambda1", 0.8)),
                              lambda2=float(tr.get("lambda2", 1.0)),
                              lambda3=float(tr.get("lambda3", 0.4)))
        return TrainConfig(
            learning_rate=float(tr.get("learning_rate", 1e-4)),
            epochs=int(tr.get("epochs", 30)),
            batch_size=int(tr.get("batch_size", 32)),
            weights=weights,
            d_trunk=int(tr.get("d_trunk", 64)),
            hidden=int(tr.get("hidden", 64)),
            d=int(tr.get("d", 64)),
            phi_depth=int(tr.get("phi_depth", 2)),
            seed=self.seed if seed is None else seed,
            active_experts=tuple(tr.get("active_experts", EXPERT_KINDS)),
            temporal_attention=bool(tr.get("temporal_attention", True)),
            gamma_low=float(tr.get("gamma_low", 0.01)),
            gamma_high=float(tr.get("gamma_high", 1.0)),
            gamma_uniform=float(tr.get("gamma_uniform", 0.5)),
            tau=float(tr.get("tau", 1.0)),
            head_threshold=self.head_threshold,
            medium_threshold=self.medium_threshold,
            checkpoint_every=int(tr.get("checkpoint_every", 10)),
            strict_cls=bool(tr.get("strict_cls", False)))


def load_config(path):
    try:
        with open(path) as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON in {path}: line {e.lineno}: {e.msg}")
    return RunConfig(raw)
