"""Adam-based training of the multi-expert model.

One optimization step per batch: every active expert draws its own batch
from its sampler, the three loss terms are computed per expert, the
weighted sum is backpropagated once, and a single Adam step updates the
shared trunk and all heads together.

RNG streams are derived per (seed, consumer, expert, epoch), so a run can
be resumed from a checkpoint at any epoch boundary and produce the exact
trajectory of the uninterrupted run.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from . import sampling
from .data import compute_label_stats
from .losses import (LossWeights, classification_loss, gamma_targets,
                     mean_contrastive_loss, total_loss, variance_region_loss)
from .model import (EXPERT_KINDS, INVERSE, LONG_TAILED, UNIFORM, Model,
                    ModelConfig, forward_expert, load_checkpoint,
                    save_checkpoint)
from .seeding import derive_rng


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    epochs: int = 30
    batch_size: int = 32
    weights: LossWeights = field(default_factory=LossWeights)
    d_trunk: int = 64
    hidden: int = 64
    d: int = 64
    phi_depth: int = 2
    seed: int = 0
    active_experts: tuple = EXPERT_KINDS
    temporal_attention: bool = True
    gamma_low: float = 0.01
    gamma_high: float = 1.0
    gamma_uniform: float = 0.5
    tau: float = 1.0
    head_threshold: int = 500
    medium_threshold: int = 100
    checkpoint_every: int = 10
    strict_cls: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        self.active_experts = tuple(self.active_experts)
        if not self.active_experts:
            raise ValueError("active_experts must be non-empty")


class Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if not np.isfinite(g).all():
                raise FloatingPointError(f"non-finite gradient in parameter {p.name!r}")
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / b1t
            v_hat = self.v[i] / b2t
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_dict(self):
        return {"t": self.t,
                "m": [m.tolist() for m in self.m],
                "v": [v.tolist() for v in self.v]}

    def load_state_dict(self, state):
        self.t = state["t"]
        self.m = [np.asarray(m, dtype=np.float64).reshape(p.data.shape)
                  for m, p in zip(state["m"], self.params)]
        self.v = [np.asarray(v, dtype=np.float64).reshape(p.data.shape)
                  for v, p in zip(state["v"], self.params)]


def adam_step(params, state, lr):
    """Single Adam update over already-populated parameter gradients."""
    state.step(lr)
    return state


def build_samplers(records, stats, kinds):
    labels = [r.labels for r in records]
    built = {}
    for kind in kinds:
        if kind == LONG_TAILED:
            built[kind] = sampling.original_weights(stats, len(records))
        elif kind == UNIFORM:
            built[kind] = sampling.uniform_class_weights(stats, labels)
        elif kind == INVERSE:
            built[kind] = sampling.inverse_class_weights(stats, labels)
        else:
            raise ValueError(f"unknown expert kind {kind!r}")
    return built


def train_epoch(model, feats, labels, samplers, cfg, epoch, adam):
    """One pass of ceil(N/batch) steps; returns mean loss terms per expert."""
    n = feats.shape[0]
    steps = -(-n // cfg.batch_size)
    sampler_rngs = {k: derive_rng(cfg.seed, "sampler", k, epoch) for k in cfg.active_experts}
    eps_rngs = {k: derive_rng(cfg.seed, "eps", k, epoch) for k in cfg.active_experts}

    sums = {k: np.zeros(3) for k in cfg.active_experts}
    for _ in range(steps):
        per_expert = []
        for kind in cfg.active_experts:
            head = model.heads[kind]
            idx = sampling.sample_batch(samplers[kind], cfg.batch_size, sampler_rngs[kind])
            X = feats[idx]
            y = labels[idx]
            emb, p = forward_expert(X, model.trunk, head, rng=eps_rngs[kind],
                                    train_mode=True,
                                    temporal_attention=cfg.temporal_attention)
            l_mu = mean_contrastive_loss(emb.mu, y, cfg.tau)
            l_cls = classification_loss(p, y, cfg.strict_cls)
            l_sig = variance_region_loss(emb.sigma, y, head.gamma)
            per_expert.append((l_mu, l_cls, l_sig))
            sums[kind] += [l_mu.item(), l_cls.item(), l_sig.item()]
        loss = total_loss(per_expert, cfg.weights)
        model.zero_grad()
        loss.backward()
        adam.step(cfg.learning_rate)
    return {k: (sums[k] / steps).tolist() for k in cfg.active_experts}


TERM_NAMES = ("mean_contrastive", "classification", "variance_region")


def train(cfg, records, out_dir=None, resume_from=None):
    """Full training run; returns (model, loss_history).

    loss_history rows: (epoch, expert, term, value), three terms per active
    expert per epoch. Checkpoints land in out_dir every checkpoint_every
    epochs plus a final one.
    """
    stats = compute_label_stats(records, cfg.head_threshold, cfg.medium_threshold)
    feats = np.stack([r.features for r in records])
    labels = np.stack([r.labels for r in records])
    samplers = build_samplers(records, stats, cfg.active_experts)

    if resume_from is not None:
        model, extra = load_checkpoint(resume_from)
        start_epoch = extra["epoch"]
        history = [tuple(row) for row in extra.get("history", [])]
    else:
        mcfg = ModelConfig(D=feats.shape[2], C=labels.shape[1], d_trunk=cfg.d_trunk,
                           hidden=cfg.hidden, d=cfg.d, phi_depth=cfg.phi_depth,
                           experts=cfg.active_experts,
                           temporal_attention=cfg.temporal_attention)
        model = Model(mcfg, seed=cfg.seed)
        for kind in cfg.active_experts:
            model.heads[kind].gamma = gamma_targets(
                stats, kind, cfg.gamma_low, cfg.gamma_high, cfg.gamma_uniform)
        start_epoch = 0
        history = []

    adam = Adam(model.parameters())
    if resume_from is not None and "adam" in extra:
        adam.load_state_dict(extra["adam"])

    def checkpoint(tag, epoch):
        if out_dir is None:
            return
        os.makedirs(out_dir, exist_ok=True)
        extra = {"epoch": epoch, "adam": adam.state_dict(), "history": history}
        save_checkpoint(os.path.join(out_dir, f"checkpoint_{tag}.bin"), model, extra)

    for epoch in range(start_epoch, cfg.epochs):
        means = train_epoch(model, feats, labels, samplers, cfg, epoch, adam)
        for kind in cfg.active_experts:
            for term, value in zip(TERM_NAMES, means[kind]):
                history.append((epoch, kind, term, value))
        if cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0 \
                and epoch + 1 < cfg.epochs:
            checkpoint(f"epoch{epoch + 1:04d}", epoch + 1)
    checkpoint("final", cfg.epochs)
    return model, history
