"""Dual-encoder retrieval model, contrastive loss, and evaluation metrics.

Each modality runs a stack of pre-norm transformer encoder layers, halving
the time axis by pair-averaging after every layer (ceil semantics: an odd
tail frame passes through unchanged), then global-mean-pools to one vector.
With the default 9 layers a 360-frame input reaches length 1 exactly.

Metric conventions documented here once: Euclidean distances everywhere,
covariance with 1/(N-1), retrieval ties broken toward the lower gallery
index, median rank = lower middle for even counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from ._kernels import jacobi_eigh
from .errors import NumericalError, ValidationError
from .nn.graph import OpGraph
from .nn.optim import AdamState, adam_step, step_lr
from .nn.params import ParamStore
from .rng import SeededRng

LOG_SCALE = 4.6052  # logit multiplier exp(4.6052) ~= 100


@dataclass(frozen=True)
class RetrievalConfig:
    layers: int = 9
    hidden: int = 512
    heads: int = 8
    dropout: float = 0.25
    ffn_factor: int = 2
    log_scale: float = LOG_SCALE
    music_dim: int = 1024
    dance_dim: int = 147

    def __post_init__(self):
        if self.hidden % self.heads:
            raise ValidationError(
                f"hidden {self.hidden} not divisible by heads {self.heads}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError("dropout must be in [0, 1)")

    @property
    def ffn_dim(self) -> int:
        return self.ffn_factor * self.hidden


# ---------------------------------------------------------------- encoder graph

def _head_slices(hidden: int, heads: int) -> list[tuple[int, ...]]:
    dh = hidden // heads
    return [tuple(range(h * dh, (h + 1) * dh)) for h in range(heads)]


def _encoder_params(store: ParamStore, prefix: str, d_in: int, cfg: RetrievalConfig):
    h = cfg.hidden
    store.create(f"{prefix}.in.w", (d_in, h), fan_in=d_in)
    store.create(f"{prefix}.in.b", (h,), fan_in=d_in)
    for i in range(cfg.layers):
        base = f"{prefix}.l{i}"
        for ln in ("ln0", "ln1"):
            store.create_zeros(f"{base}.{ln}.g", (h,))
            store.set(f"{base}.{ln}.g", np.ones(h, dtype=np.float32))
            store.create_zeros(f"{base}.{ln}.b", (h,))
        for part in ("q", "k", "v", "o"):
            store.create(f"{base}.w{part}", (h, h), fan_in=h)
            store.create_zeros(f"{base}.b{part}", (h,))
        store.create(f"{base}.ffn0.w", (h, cfg.ffn_dim), fan_in=h)
        store.create(f"{base}.ffn0.b", (cfg.ffn_dim,), fan_in=h)
        store.create(f"{base}.ffn1.w", (cfg.ffn_dim, h), fan_in=cfg.ffn_dim)
        store.create(f"{base}.ffn1.b", (h,), fan_in=cfg.ffn_dim)
    store.create(f"{prefix}.head.w", (h, h), fan_in=h)
    store.create_zeros(f"{prefix}.head.b", (h,))


def _build_encoder(g: OpGraph, x, prefix: str, cfg: RetrievalConfig):
    h = cfg.hidden
    d_in = x.shape[-1]
    x = g.op("linear", x,
             g.param(f"{prefix}.in.w", (d_in, h)), g.param(f"{prefix}.in.b", (h,)))
    slices = _head_slices(h, cfg.heads)
    inv_sqrt = 1.0 / np.sqrt(h // cfg.heads)
    for i in range(cfg.layers):
        base = f"{prefix}.l{i}"
        ln = g.op("layer_norm", x,
                  g.param(f"{base}.ln0.g", (h,)), g.param(f"{base}.ln0.b", (h,)))
        q = g.op("linear", ln, g.param(f"{base}.wq", (h, h)), g.param(f"{base}.bq", (h,)))
        k = g.op("linear", ln, g.param(f"{base}.wk", (h, h)), g.param(f"{base}.bk", (h,)))
        v = g.op("linear", ln, g.param(f"{base}.wv", (h, h)), g.param(f"{base}.bv", (h,)))
        heads_out = []
        for cols in slices:
            qh = g.op("gather_cols", q, index=cols)
            kh = g.op("gather_cols", k, index=cols)
            vh = g.op("gather_cols", v, index=cols)
            scores = g.op("scale", g.op("matmul", qh, g.op("transpose_last2", kh)),
                          factor=inv_sqrt)
            heads_out.append(g.op("matmul", g.op("softmax", scores), vh))
        cat = heads_out[0]
        for part in heads_out[1:]:
            cat = g.op("concat_last", cat, part)
        attn = g.op("linear", cat,
                    g.param(f"{base}.wo", (h, h)), g.param(f"{base}.bo", (h,)))
        x = g.op("add", x, g.op("dropout", attn, rate=cfg.dropout))
        ln = g.op("layer_norm", x,
                  g.param(f"{base}.ln1.g", (h,)), g.param(f"{base}.ln1.b", (h,)))
        ff = g.op("linear", ln, g.param(f"{base}.ffn0.w", (h, cfg.ffn_dim)),
                  g.param(f"{base}.ffn0.b", (cfg.ffn_dim,)))
        ff = g.op("linear", g.op("relu", ff),
                  g.param(f"{base}.ffn1.w", (cfg.ffn_dim, h)),
                  g.param(f"{base}.ffn1.b", (h,)))
        x = g.op("add", x, g.op("dropout", ff, rate=cfg.dropout))
        x = g.op("avg_pool_pairs", x)
    pooled = g.op("mean_pool_time", x)
    return g.op("linear", pooled,
                g.param(f"{prefix}.head.w", (h, h)), g.param(f"{prefix}.head.b", (h,)))


class RetrievalModel:
    """Music and dance encoders sharing one ParamStore ("m." / "d." subtrees)."""

    def __init__(self, cfg: RetrievalConfig, params: ParamStore):
        self.cfg = cfg
        self.params = params
        self._graphs: dict[tuple, OpGraph] = {}

    @staticmethod
    def create(cfg: RetrievalConfig | None = None, seed: int = 0) -> "RetrievalModel":
        cfg = cfg or RetrievalConfig()
        store = ParamStore(seed)
        _encoder_params(store, "m", cfg.music_dim, cfg)
        _encoder_params(store, "d", cfg.dance_dim, cfg)
        return RetrievalModel(cfg, store)

    def _encode_graph(self, modality: str, batch: int, t: int) -> OpGraph:
        d_in = self.cfg.music_dim if modality == "m" else self.cfg.dance_dim
        key = ("enc", modality, batch, t)
        if key not in self._graphs:
            g = OpGraph()
            x = g.input("x", (batch, t, d_in))
            out = _build_encoder(g, x, modality, self.cfg)
            # features live on the unit sphere: Euclidean retrieval is then
            # monotone in the cosine similarity the contrastive loss shapes
            g.op("l2_normalize", out, name="features")
            self._graphs[key] = g
        return self._graphs[key]

    def _loss_graph(self, batch: int, t: int) -> OpGraph:
        key = ("loss", batch, t)
        if key not in self._graphs:
            cfg = self.cfg
            g = OpGraph()
            music = g.input("music", (batch, t, cfg.music_dim))
            dance = g.input("dance", (batch, t, cfg.dance_dim))
            targets = g.input("targets", (batch,), dtype_kind="i")
            fm = g.op("l2_normalize", _build_encoder(g, music, "m", cfg))
            fd = g.op("l2_normalize", _build_encoder(g, dance, "d", cfg))
            logits = g.op("scale", g.op("matmul", fm, g.op("transpose_last2", fd)),
                          factor=float(np.exp(cfg.log_scale)), name="logits")
            ce_rows = g.op("cross_entropy", logits, targets)
            ce_cols = g.op("cross_entropy", g.op("transpose_last2", logits), targets)
            g.op("scale", g.op("add", ce_rows, ce_cols), factor=0.5, name="loss")
            self._graphs[key] = g
        return self._graphs[key]

    def encode(self, x: np.ndarray, modality: str) -> np.ndarray:
        """Batch of sequences (N, T, D_in) -> features (N, hidden)."""
        if modality not in ("m", "d"):
            raise ValidationError(f"modality must be 'm' or 'd', got {modality!r}")
        x = np.asarray(x)
        if x.ndim != 3:
            raise ValidationError(f"expected (N, T, D), got shape {x.shape}")
        g = self._encode_graph(modality, x.shape[0], x.shape[1])
        return g.forward(self.params, {"x": x}, "features")["features"]

    def loss(self, music: np.ndarray, dance: np.ndarray) -> float:
        g = self._loss_graph(music.shape[0], music.shape[1])
        feeds = {"music": music, "dance": dance,
                 "targets": np.arange(music.shape[0], dtype=np.int64)}
        return float(g.forward(self.params, feeds, "loss")["loss"])

    def loss_grads(self, music, dance, *, train=False, drop_seed=0):
        g = self._loss_graph(music.shape[0], music.shape[1])
        feeds = {"music": music, "dance": dance,
                 "targets": np.arange(music.shape[0], dtype=np.int64)}
        return g.backward(self.params, feeds, "loss", train=train, drop_seed=drop_seed)


def encode_sequence(x: np.ndarray, model: RetrievalModel, modality: str = "m") -> np.ndarray:
    """Single sequence (T, D_in) -> one (hidden,) vector."""
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValidationError(f"expected (T, D) with T >= 1, got shape {x.shape}")
    return model.encode(x[None], modality)[0]


# ---------------------------------------------------------------- contrastive loss

def clip_loss(f_m: np.ndarray, f_d: np.ndarray, log_scale: float = LOG_SCALE) -> float:
    """Symmetric InfoNCE over cosine logits scaled by exp(log_scale)."""
    f_m = np.asarray(f_m, dtype=np.float64)
    f_d = np.asarray(f_d, dtype=np.float64)
    if f_m.shape != f_d.shape or f_m.ndim != 2 or f_m.shape[0] < 2:
        raise ValidationError(f"need matching (N>=2, D) sets, got {f_m.shape}/{f_d.shape}")
    norms_m = np.linalg.norm(f_m, axis=1, keepdims=True)
    norms_d = np.linalg.norm(f_d, axis=1, keepdims=True)
    if np.any(norms_m < 1e-12) or np.any(norms_d < 1e-12):
        raise NumericalError("zero-norm feature row in contrastive loss")
    logits = np.exp(log_scale) * ((f_m / norms_m) @ (f_d / norms_d).T)
    n = logits.shape[0]
    idx = np.arange(n)

    def ce(mat):
        shifted = mat - mat.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1))
        return float(np.mean(logz - shifted[idx, idx]))

    return 0.5 * (ce(logits) + ce(logits.T))


# ---------------------------------------------------------------- metrics

def _pairwise_distances(query: np.ndarray, gallery: np.ndarray) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64)
    g = np.asarray(gallery, dtype=np.float64)
    if q.shape != g.shape or q.ndim != 2:
        raise ValidationError(f"paired sets must match, got {q.shape}/{g.shape}")
    d2 = (np.sum(q * q, axis=1)[:, None] + np.sum(g * g, axis=1)[None, :]
          - 2.0 * q @ g.T)
    return np.sqrt(np.maximum(d2, 0.0))


def _true_pair_ranks(query: np.ndarray, gallery: np.ndarray) -> np.ndarray:
    """1-based rank of gallery[i] for query[i]; distance ties favor lower index."""
    d = _pairwise_distances(query, gallery)
    n = d.shape[0]
    own = d[np.arange(n), np.arange(n)][:, None]
    closer = (d < own).sum(axis=1)
    tied_lower = ((d == own) & (np.arange(n)[None, :] < np.arange(n)[:, None])).sum(axis=1)
    return 1 + closer + tied_lower


def recall_at_k(query: np.ndarray, gallery: np.ndarray, k: int) -> float:
    if k < 1 or k > np.asarray(query).shape[0]:
        raise ValidationError(f"k must be in [1, N], got {k}")
    return float(np.mean(_true_pair_ranks(query, gallery) <= k))


def rank_stats(query: np.ndarray, gallery: np.ndarray) -> tuple[int, float]:
    """(median rank, mean rank); median is the lower middle for even N."""
    ranks = np.sort(_true_pair_ranks(query, gallery))
    return int(ranks[(len(ranks) - 1) // 2]), float(ranks.mean())


def paired_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValidationError(f"paired sets must match, got {a.shape}/{b.shape}")
    return float(np.mean(np.linalg.norm(a - b, axis=1)))


def mm_dist(f_m: np.ndarray, f_d: np.ndarray) -> float:
    """Mean Euclidean distance between paired cross-modal features."""
    return paired_distance(f_m, f_d)


def m_dist(f_gen: np.ndarray, f_gt: np.ndarray) -> float:
    """Mean Euclidean distance between paired generated and reference features."""
    return paired_distance(f_gen, f_gt)


def diversity(f: np.ndarray) -> float:
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 2:
        raise ValidationError(f"need (N>=2, D) features, got shape {f.shape}")
    return float(pdist(f).mean())


@dataclass(frozen=True)
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray

    @staticmethod
    def from_features(f: np.ndarray) -> "GaussianStats":
        f = np.asarray(f, dtype=np.float64)
        if f.ndim != 2 or f.shape[0] < 2:
            raise ValidationError(f"need (N>=2, D) features, got shape {f.shape}")
        if not np.all(np.isfinite(f)):
            raise NumericalError("non-finite feature entries")
        mean = f.mean(axis=0)
        centered = f - mean
        cov = centered.T @ centered / (f.shape[0] - 1)
        return GaussianStats(mean, (cov + cov.T) * 0.5)


def _sqrtm_psd(sym: np.ndarray) -> np.ndarray:
    vals, vecs = jacobi_eigh(sym)
    root = np.sqrt(np.maximum(vals, 0.0))
    return (vecs * root) @ vecs.T


def fid_from_stats(a: GaussianStats, b: GaussianStats) -> float:
    if a.mean.shape != b.mean.shape:
        raise ValidationError("feature dimensions differ")
    diff = a.mean - b.mean
    sqrt_a = _sqrtm_psd(a.cov)
    inner = sqrt_a @ b.cov @ sqrt_a
    vals, _ = jacobi_eigh((inner + inner.T) * 0.5)
    tr_sqrt = float(np.sqrt(np.maximum(vals, 0.0)).sum())
    value = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * tr_sqrt)
    return max(value, 0.0)


def fid(a: np.ndarray, b: np.ndarray) -> float:
    """Frechet distance between Gaussians fitted to two feature sets."""
    return fid_from_stats(GaussianStats.from_features(a),
                          GaussianStats.from_features(b))


def evaluate_features(gen: np.ndarray, gt: np.ndarray,
                      music: np.ndarray | None = None) -> dict[str, float]:
    """Metric report; music-dependent keys appear only when music is given.

    Retrieval direction: dance features query a music gallery of equal size.
    With music present the report carries exactly seven keys; without it only
    the three music-free ones.
    """
    report = {
        "fid": fid(gen, gt),
        "m_dist": m_dist(gen, gt),
        "div": diversity(gen),
    }
    if music is not None:
        report["mm_dist"] = mm_dist(music, gen)
        report["r_at_5"] = recall_at_k(gen, music, k=min(5, gen.shape[0]))
        med, mean = rank_stats(gen, music)
        report["median_rank"] = float(med)
        report["mean_rank"] = mean
    return report


# ---------------------------------------------------------------- toy training

@dataclass
class RetrievalTrainReport:
    losses: list[float] = field(default_factory=list)
    lrs: list[float] = field(default_factory=list)
    r_at_5_before: float = 0.0
    r_at_5_after: float = 0.0
    null_r_at_5: float = 0.0


def make_paired_corpus(n: int, t: int, cfg: RetrievalConfig, seed: int = 0,
                       noise: float = 0.05) -> tuple[np.ndarray, np.ndarray]:
    """Music ~ N(0,1); dance = music @ fixed map + noise, frame by frame."""
    rng = SeededRng(seed).spawn("retrieval-corpus")
    music = rng.normal((n, t, cfg.music_dim))
    mix = rng.normal((cfg.music_dim, cfg.dance_dim)) / np.sqrt(cfg.music_dim)
    dance = music @ mix + noise * rng.normal((n, t, cfg.dance_dim))
    return music.astype(np.float32), dance.astype(np.float32)


def train_retrieval_toy(model: RetrievalModel, music: np.ndarray, dance: np.ndarray,
                        *, epochs: int = 20, lr: float = 1e-3, batch: int = 64,
                        step_size: int = 5, gamma: float = 0.33,
                        seed: int = 0) -> RetrievalTrainReport:
    """Adam + StepLR contrastive training; one epoch = one pass in batches."""
    n = music.shape[0]
    if n % batch:
        raise ValidationError(f"corpus size {n} not divisible by batch {batch}")
    report = RetrievalTrainReport()
    report.null_r_at_5 = 5.0 / n
    fm = model.encode(music, "m")
    fd = model.encode(dance, "d")
    report.r_at_5_before = recall_at_k(fd, fm, k=5)
    state = AdamState(model.params)
    rng = SeededRng(seed).spawn("retrieval-train")
    step = 0
    for epoch in range(epochs):
        cur_lr = step_lr(lr, epoch, step_size=step_size, gamma=gamma)
        report.lrs.append(cur_lr)
        order = np.argsort(rng.uniform((n,)), kind="stable")
        epoch_losses = []
        for lo in range(0, n, batch):
            picks = order[lo: lo + batch]
            loss, grads = model.loss_grads(music[picks], dance[picks],
                                           train=True, drop_seed=step)
            adam_step(model.params, grads, state, cur_lr)
            epoch_losses.append(loss)
            step += 1
        report.losses.append(float(np.mean(epoch_losses)))
    fm = model.encode(music, "m")
    fd = model.encode(dance, "d")
    report.r_at_5_after = recall_at_k(fd, fm, k=5)
    return report
