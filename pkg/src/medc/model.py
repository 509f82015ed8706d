"""The multi-expert network.

A shared per-frame MLP trunk feeds three expert heads. Each head estimates
a Gaussian embedding per video: the mean comes from an MLP plus mean
pooling over frames, the variance from a temporal self-attention module
over frame deviations, and the stochastic embedding z = mu + eps * sigma
goes through a per-class sigmoid classifier. Inference averages the expert
probability vectors.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Parameter, Tensor
from .seeding import derive_rng

LONG_TAILED = "long_tailed"
UNIFORM = "uniform"
INVERSE = "inverse"
EXPERT_KINDS = (LONG_TAILED, UNIFORM, INVERSE)

CHECKPOINT_MAGIC = b"MEDCCKP1"


@dataclass
class ModelConfig:
    D: int
    C: int
    d_trunk: int = 64
    hidden: int = 64
    d: int = 64
    phi_depth: int = 2
    experts: tuple = EXPERT_KINDS
    temporal_attention: bool = True

    def __post_init__(self):
        self.experts = tuple(self.experts)
        if not self.experts:
            raise ValueError("need at least one expert")
        for k in self.experts:
            if k not in EXPERT_KINDS:
                raise ValueError(f"unknown expert kind {k!r}")
        if self.phi_depth < 1:
            raise ValueError("phi_depth must be >= 1")

    def to_dict(self):
        return {"D": self.D, "C": self.C, "d_trunk": self.d_trunk,
                "hidden": self.hidden, "d": self.d, "phi_depth": self.phi_depth,
                "experts": list(self.experts),
                "temporal_attention": self.temporal_attention}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["experts"] = tuple(d["experts"])
        return cls(**d)


def _init_weight(rng, fan_in, fan_out):
    return rng.uniform(-1.0, 1.0, size=(fan_in, fan_out)) / np.sqrt(fan_in)


class Linear:
    def __init__(self, rng, d_in, d_out, name):
        self.W = Parameter(_init_weight(rng, d_in, d_out), f"{name}.W")
        self.b = Parameter(np.zeros(d_out), f"{name}.b")

    def __call__(self, x):
        return ag.add(ag.matmul(x, self.W), self.b)

    def parameters(self):
        return [self.W, self.b]


class AffineNormLayer:
    """Linear map + per-row feature normalization with learnable scale/shift."""

    def __init__(self, rng, d_in, d_out, name):
        self.W = Parameter(_init_weight(rng, d_in, d_out), f"{name}.W")
        self.b = Parameter(np.zeros(d_out), f"{name}.b")
        self.scale = Parameter(np.ones(d_out), f"{name}.scale")
        self.shift = Parameter(np.zeros(d_out), f"{name}.shift")

    def __call__(self, x):
        return ag.affine_norm_layer(x, self.W, self.b, self.scale, self.shift)

    def parameters(self):
        return [self.W, self.b, self.scale, self.shift]


class MLP:
    """phi_depth-1 normalized ReLU layers followed by a plain linear output."""

    def __init__(self, rng, d_in, hidden, d_out, depth, name):
        self.layers = []
        cur = d_in
        for i in range(depth - 1):
            self.layers.append(AffineNormLayer(rng, cur, hidden, f"{name}.layer{i}"))
            cur = hidden
        self.out = Linear(rng, cur, d_out, f"{name}.out")

    def __call__(self, x):
        for layer in self.layers:
            x = ag.relu(layer(x))
        return self.out(x)

    def parameters(self):
        ps = []
        for layer in self.layers:
            ps.extend(layer.parameters())
        return ps + self.out.parameters()


class Trunk:
    """Shared per-frame linear + ReLU block, consumed by every expert."""

    def __init__(self, rng, D, d_trunk):
        self.lin = Linear(rng, D, d_trunk, "trunk")

    def __call__(self, x):
        return ag.relu(self.lin(x))

    def parameters(self):
        return self.lin.parameters()


class ExpertHead:
    def __init__(self, rng, cfg, kind):
        name = f"expert.{kind}"
        self.kind = kind
        self.phi_mu = MLP(rng, cfg.d_trunk, cfg.hidden, cfg.d, cfg.phi_depth, f"{name}.phi_mu")
        self.phi_var = MLP(rng, cfg.d_trunk, cfg.hidden, cfg.d, cfg.phi_depth, f"{name}.phi_var")
        self.f_q = Linear(rng, cfg.d, cfg.d, f"{name}.f_q")
        self.f_k = Linear(rng, cfg.d, cfg.d, f"{name}.f_k")
        self.f_v = Linear(rng, cfg.d, cfg.d, f"{name}.f_v")
        self.classifier = Linear(rng, cfg.d, cfg.C, f"{name}.cls")
        self.gamma = np.full(cfg.C, 0.5)  # per-class variance targets

    def parameters(self):
        return (self.phi_mu.parameters() + self.phi_var.parameters()
                + self.f_q.parameters() + self.f_k.parameters()
                + self.f_v.parameters() + self.classifier.parameters())

    def variance_parameters(self):
        return (self.phi_var.parameters() + self.f_q.parameters()
                + self.f_k.parameters() + self.f_v.parameters())


@dataclass
class Embedding:
    mu: Tensor       # (B, d), L2-normalized rows
    sigma: Tensor    # (B, d), non-negative
    z: Tensor        # (B, d)
    epsilon: np.ndarray


class Model:
    def __init__(self, cfg, seed=0):
        self.cfg = cfg
        self.seed = seed
        rng = derive_rng(seed, "init")
        self.trunk = Trunk(rng, cfg.D, cfg.d_trunk)
        self.heads = {kind: ExpertHead(rng, cfg, kind) for kind in cfg.experts}

    def parameters(self):
        ps = self.trunk.parameters()
        for kind in self.cfg.experts:
            ps.extend(self.heads[kind].parameters())
        return ps

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


# -- forward ops --------------------------------------------------------------

def trunk_forward(X, trunk):
    """Per-frame trunk application; X is (B, L, D) or (L, D)."""
    X = X if isinstance(X, Tensor) else Tensor(X)
    return trunk(X)


def estimate_mean(H0, head):
    """Mean-pool phi_mu over frames, then L2-normalize each row."""
    h = head.phi_mu(H0)
    mu = ag.mean_pool_axis(h, axis=-2)
    return ag.l2_normalize(mu, axis=-1)


def estimate_variance(H0, mu, head, temporal_attention=True):
    """Variance of the per-video Gaussian from frame deviations.

    delta_l = phi_var(H0)_l - mu. With temporal attention, per-frame scores
    s_l = f_q(delta_l) . f_k(delta_l) / sqrt(d) are softmaxed over frames
    and weight the value projections; without it, value projections are
    mean-pooled. Softplus keeps sigma non-negative.
    """
    h = head.phi_var(H0)                       # (..., L, d)
    mu_b = ag.reshape(mu, mu.shape[:-1] + (1,) + mu.shape[-1:])
    delta = ag.sub(h, mu_b)
    v = head.f_v(delta)
    if temporal_attention:
        q = head.f_q(delta)
        k = head.f_k(delta)
        d = delta.shape[-1]
        scores = ag.mul(ag.sum_along(ag.mul(q, k), axis=-1), 1.0 / np.sqrt(d))
        alpha = ag.softmax_along(scores, axis=-1)            # (..., L)
        alpha_b = ag.reshape(alpha, alpha.shape + (1,))
        raw = ag.sum_along(ag.mul(alpha_b, v), axis=-2)
    else:
        raw = ag.mean_pool_axis(v, axis=-2)
    return ag.softplus(raw)


def reparameterize(mu, sigma, rng, train_mode):
    """z = mu + eps * sigma with eps ~ N(0,1) in train mode, eps = 0 in eval."""
    if train_mode:
        epsilon = rng.standard_normal(mu.shape)
    else:
        epsilon = np.zeros(mu.shape)
    z = ag.add(mu, ag.mul(Tensor(epsilon), sigma))
    return Embedding(mu=mu, sigma=sigma, z=z, epsilon=epsilon)


def classify(z, head):
    """Per-class sigmoid probabilities from linear logits."""
    return ag.sigmoid(head.classifier(z))


def forward_expert(X, trunk, head, rng=None, train_mode=False, temporal_attention=True):
    H0 = trunk_forward(X, trunk)
    mu = estimate_mean(H0, head)
    sigma = estimate_variance(H0, mu, head, temporal_attention)
    emb = reparameterize(mu, sigma, rng, train_mode)
    p = classify(emb.z, head)
    return emb, p


def forward_inference(X, model, experts=None):
    """Eval-mode probabilities averaged over the given experts (all by default)."""
    kinds = model.cfg.experts if experts is None else tuple(experts)
    if not kinds:
        raise ValueError("need at least one expert for inference")
    acc = None
    for kind in kinds:
        _, p = forward_expert(X, model.trunk, model.heads[kind], rng=None,
                              train_mode=False,
                              temporal_attention=model.cfg.temporal_attention)
        acc = p if acc is None else ag.add(acc, p)
    return ag.mul(acc, 1.0 / len(kinds))


# -- checkpoints ---------------------------------------------------------------
# single file: magic, u64 manifest length, JSON manifest, then little-endian
# f64 payloads in manifest order.

def save_checkpoint(path, model, extra=None):
    params = model.parameters()
    manifest = {
        "version": 1,
        "config": model.cfg.to_dict(),
        "seed": model.seed,
        "gamma": {kind: model.heads[kind].gamma.tolist() for kind in model.cfg.experts},
        "params": [{"name": p.name, "shape": list(p.data.shape)} for p in params],
        "extra": extra if extra is not None else {},
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for p in params:
            f.write(p.data.astype("<f8").tobytes())


def load_checkpoint(path):
    """Rebuild a Model from a checkpoint file; returns (model, extra)."""
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file: bad magic {magic!r}")
        (mlen,) = struct.unpack("<Q", f.read(8))
        manifest = json.loads(f.read(mlen).decode("utf-8"))
        cfg = ModelConfig.from_dict(manifest["config"])
        model = Model(cfg, seed=manifest["seed"])
        for kind, g in manifest["gamma"].items():
            model.heads[kind].gamma = np.asarray(g, dtype=np.float64)
        params = model.parameters()
        if len(params) != len(manifest["params"]):
            raise ValueError(f"checkpoint lists {len(manifest['params'])} parameters, "
                             f"model has {len(params)}")
        for p, meta in zip(params, manifest["params"]):
            shape = tuple(meta["shape"])
            if p.data.shape != shape:
                raise ValueError(f"parameter {meta['name']}: checkpoint shape {shape} "
                                 f"!= model shape {p.data.shape}")
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            raw = f.read(8 * count)
            p.data = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
            p.grad = np.zeros_like(p.data)
    return model, manifest["extra"]
