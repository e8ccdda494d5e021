"""Two-branch FSQ motion tokenizer: conv encoders, quantizers, tconv decoders.

Motion frames (T, 3+6J) split into a lower half (root translation + leg
joints) and an upper half. Each half runs through a 3-layer stride-2 conv
encoder, a 2-layer MLP down to the quantizer width, FSQ, a mirrored MLP and
a 3-layer transposed-conv decoder back to its half width. Early optimization
is dominated by the decoder biases learning the per-channel offsets (rest
rotations and mean translation); the random init keeps 6D rotation columns
far enough from zero that forward kinematics never sees degenerate input.

The training loss mirrors motion.loss_rec exactly: parameter L1 + FK L1 +
weighted velocity/acceleration L1, all mean-reduced.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from ..fsq import CompositionalCodebooks, FsqCodebook, index_to_levels, tokenize_clip
from ..motion import LOWER_BODY_JOINTS, Skeleton, default_skeleton
from ..rng import SeededRng
from .graph import OpGraph
from .optim import AdamState, adam_step
from .params import ParamStore


@dataclass(frozen=True)
class TokenizerConfig:
    frames: int = 360
    joints: int = 24
    hidden: int = 512
    latent: int = 4
    levels: tuple[int, ...] = (8, 5, 5, 5)
    kernel: int = 4
    stride: int = 2
    n_conv: int = 3
    lower_joints: tuple[int, ...] = LOWER_BODY_JOINTS
    velocity_weight: float = 0.5
    acceleration_weight: float = 0.25
    # Small init for the latent projection clusters untrained latents near a
    # single code, making the untrained usage baseline honest and tiny.
    latent_init_scale: float = 0.01

    def __post_init__(self):
        if self.latent != len(self.levels):
            raise ValidationError("latent width must equal the number of FSQ channels")
        if self.frames < 3:
            raise ValidationError("need at least 3 frames for the dynamics loss")
        if any(j < 0 or j >= self.joints for j in self.lower_joints):
            raise ValidationError("lower_joints out of range")

    @property
    def width(self) -> int:
        return 3 + 6 * self.joints

    @property
    def token_frames(self) -> int:
        t = self.frames
        for _ in range(self.n_conv):
            t = -(-t // self.stride)
        return t

    @property
    def lower_width(self) -> int:
        return 3 + 6 * len(self.lower_joints)

    @property
    def upper_width(self) -> int:
        return 6 * (self.joints - len(self.lower_joints))

    def codebooks(self) -> CompositionalCodebooks:
        book = FsqCodebook(self.levels)
        return CompositionalCodebooks(upper=book, lower=book)


def _half_columns(cfg: TokenizerConfig) -> tuple[list[int], list[int], list[int]]:
    """(lower cols, upper cols, permutation recovering the interleaved layout)."""
    lower_set = set(cfg.lower_joints)
    lower = list(range(3))
    upper: list[int] = []
    for j in range(cfg.joints):
        cols = list(range(3 + 6 * j, 9 + 6 * j))
        (lower if j in lower_set else upper).extend(cols)
    concat_order = lower + upper
    perm = [concat_order.index(c) for c in range(cfg.width)]
    return lower, upper, perm


def _branch_params(store: ParamStore, cfg: TokenizerConfig, branch: str, width: int) -> None:
    h, k, d = cfg.hidden, cfg.kernel, cfg.latent
    chans = [width] + [h] * cfg.n_conv
    for i in range(cfg.n_conv):
        store.create(f"tok.{branch}.enc.c{i}.w", (k, chans[i], chans[i + 1]), fan_in=k * chans[i])
        store.create(f"tok.{branch}.enc.c{i}.b", (chans[i + 1],), fan_in=k * chans[i])
    store.create(f"tok.{branch}.enc.m0.w", (h, h), fan_in=h)
    store.create(f"tok.{branch}.enc.m0.b", (h,), fan_in=h)
    store.create(f"tok.{branch}.enc.m1.w", (h, d), scale=cfg.latent_init_scale)
    store.create_zeros(f"tok.{branch}.enc.m1.b", (d,))
    store.create(f"tok.{branch}.dec.m0.w", (d, h), fan_in=d)
    store.create(f"tok.{branch}.dec.m0.b", (h,), fan_in=d)
    store.create(f"tok.{branch}.dec.m1.w", (h, h), fan_in=h)
    store.create(f"tok.{branch}.dec.m1.b", (h,), fan_in=h)
    out_chans = [h] * cfg.n_conv + [width]
    for i in range(cfg.n_conv):
        store.create(
            f"tok.{branch}.dec.t{i}.w",
            (k, out_chans[i + 1], out_chans[i]),
            fan_in=k * out_chans[i],
        )
        store.create(f"tok.{branch}.dec.t{i}.b", (out_chans[i + 1],), fan_in=k * out_chans[i])


def init_tokenizer_params(cfg: TokenizerConfig, seed: int) -> ParamStore:
    store = ParamStore(seed)
    _branch_params(store, cfg, "lower", cfg.lower_width)
    _branch_params(store, cfg, "upper", cfg.upper_width)
    return store


def _build_encoder(g: OpGraph, cfg: TokenizerConfig, branch: str, x):
    h, k = cfg.hidden, cfg.kernel
    width = x.shape[-1]
    chans = [width] + [h] * cfg.n_conv
    cur = x
    for i in range(cfg.n_conv):
        w = g.param(f"tok.{branch}.enc.c{i}.w", (k, chans[i], chans[i + 1]))
        b = g.param(f"tok.{branch}.enc.c{i}.b", (chans[i + 1],))
        cur = g.op("conv1d", cur, w, b, stride=cfg.stride)
        cur = g.op("relu", cur)
    cur = g.op(
        "linear", cur,
        g.param(f"tok.{branch}.enc.m0.w", (h, h)),
        g.param(f"tok.{branch}.enc.m0.b", (h,)),
    )
    cur = g.op("relu", cur)
    return g.op(
        "linear", cur,
        g.param(f"tok.{branch}.enc.m1.w", (h, cfg.latent)),
        g.param(f"tok.{branch}.enc.m1.b", (cfg.latent,)),
        name=f"latents_{branch}",
    )


def _build_decoder(g: OpGraph, cfg: TokenizerConfig, branch: str, values, width: int):
    h, k = cfg.hidden, cfg.kernel
    cur = g.op(
        "linear", values,
        g.param(f"tok.{branch}.dec.m0.w", (cfg.latent, h)),
        g.param(f"tok.{branch}.dec.m0.b", (h,)),
    )
    cur = g.op("relu", cur)
    cur = g.op(
        "linear", cur,
        g.param(f"tok.{branch}.dec.m1.w", (h, h)),
        g.param(f"tok.{branch}.dec.m1.b", (h,)),
    )
    lengths = [cfg.frames]
    for _ in range(cfg.n_conv - 1):
        lengths.append(-(-lengths[-1] // cfg.stride))
    lengths.reverse()  # decoder upsampling targets, e.g. [90, 180, 360]
    out_chans = [h] * cfg.n_conv + [width]
    for i in range(cfg.n_conv):
        w = g.param(f"tok.{branch}.dec.t{i}.w", (k, out_chans[i + 1], out_chans[i]))
        b = g.param(f"tok.{branch}.dec.t{i}.b", (out_chans[i + 1],))
        last = i == cfg.n_conv - 1
        cur = g.op("tconv1d", cur, w, b, stride=cfg.stride, out_length=lengths[i],
                   name=f"recon_{branch}" if last else None)
        if not last:
            cur = g.op("relu", cur)
    return cur


def _merge_and_loss(g: OpGraph, cfg: TokenizerConfig, skel: Skeleton, rec_l, rec_u, motion):
    _, _, perm = _half_columns(cfg)
    grouped = g.op("concat_last", rec_l, rec_u)
    recon = g.op("gather_cols", grouped, index=tuple(perm), name="recon")
    l_param = g.op("mean_l1", recon, motion, name="loss_param")
    fk_pred = g.op("fk6d", recon, skeleton=skel)
    fk_gt = g.op("fk6d", motion, skeleton=skel)
    l_fk = g.op("mean_l1", fk_pred, fk_gt, name="loss_fk")
    vel_p = g.op("time_diff", recon)
    vel_g = g.op("time_diff", motion)
    l_vel = g.op("mean_l1", vel_p, vel_g, name="loss_vel")
    acc_p = g.op("time_diff", vel_p)
    acc_g = g.op("time_diff", vel_g)
    l_acc = g.op("mean_l1", acc_p, acc_g, name="loss_acc")
    kin = g.op("add", l_param, l_fk)
    dyn = g.op(
        "add",
        g.op("scale", l_vel, factor=cfg.velocity_weight),
        g.op("scale", l_acc, factor=cfg.acceleration_weight),
    )
    return g.op("add", kin, dyn, name="loss")


class FsqTokenizer:
    """Holds params plus per-batch-size graph caches for the three entry points."""

    def __init__(self, cfg: TokenizerConfig, skel: Skeleton, params: ParamStore):
        self.cfg = cfg
        self.skel = skel
        self.params = params
        self.books = cfg.codebooks()
        self._full: dict[int, OpGraph] = {}
        self._decode: dict[int, OpGraph] = {}

    @staticmethod
    def create(cfg: TokenizerConfig | None = None, skel: Skeleton | None = None, seed: int = 0):
        cfg = cfg or TokenizerConfig()
        skel = skel or default_skeleton()
        if skel.joint_count != cfg.joints:
            raise ValidationError(
                f"skeleton has {skel.joint_count} joints, config says {cfg.joints}"
            )
        return FsqTokenizer(cfg, skel, init_tokenizer_params(cfg, seed))

    def _full_graph(self, batch: int) -> OpGraph:
        if batch not in self._full:
            cfg = self.cfg
            g = OpGraph()
            motion = g.input("motion", (batch, cfg.frames, cfg.width))
            lower_cols, upper_cols, _ = _half_columns(cfg)
            x_l = g.op("gather_cols", motion, index=tuple(lower_cols))
            x_u = g.op("gather_cols", motion, index=tuple(upper_cols))
            lat_l = _build_encoder(g, cfg, "lower", x_l)
            lat_u = _build_encoder(g, cfg, "upper", x_u)
            q_l = g.op("fsq_ste", lat_l, levels=cfg.levels, name="values_lower")
            q_u = g.op("fsq_ste", lat_u, levels=cfg.levels, name="values_upper")
            rec_l = _build_decoder(g, cfg, "lower", q_l, cfg.lower_width)
            rec_u = _build_decoder(g, cfg, "upper", q_u, cfg.upper_width)
            _merge_and_loss(g, cfg, self.skel, rec_l, rec_u, motion)
            self._full[batch] = g
        return self._full[batch]

    def _decode_graph(self, batch: int) -> OpGraph:
        if batch not in self._decode:
            cfg = self.cfg
            g = OpGraph()
            t = cfg.token_frames
            v_l = g.input("values_lower", (batch, t, cfg.latent))
            v_u = g.input("values_upper", (batch, t, cfg.latent))
            rec_l = _build_decoder(g, cfg, "lower", v_l, cfg.lower_width)
            rec_u = _build_decoder(g, cfg, "upper", v_u, cfg.upper_width)
            _, _, perm = _half_columns(cfg)
            grouped = g.op("concat_last", rec_l, rec_u)
            g.op("gather_cols", grouped, index=tuple(perm), name="recon")
            self._decode[batch] = g
        return self._decode[batch]

    # ------------------------------------------------------------ entry points

    def loss(self, motion: np.ndarray) -> float:
        g = self._full_graph(motion.shape[0])
        return float(g.forward(self.params, {"motion": motion}, "loss")["loss"])

    def loss_terms(self, motion: np.ndarray) -> dict[str, float]:
        g = self._full_graph(motion.shape[0])
        names = ["loss", "loss_param", "loss_fk", "loss_vel", "loss_acc"]
        out = g.forward(self.params, {"motion": motion}, names)
        return {k: float(v) for k, v in out.items()}

    def grad_step_inputs(self, motion: np.ndarray):
        """(loss value, grads) for one batch; the caller applies the update."""
        g = self._full_graph(motion.shape[0])
        return g.backward(self.params, {"motion": motion}, "loss")

    def encode(self, motion: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Pre-quantization latents (lower, upper), each (B, T', latent)."""
        g = self._full_graph(motion.shape[0])
        out = g.forward(self.params, {"motion": motion}, ["latents_lower", "latents_upper"])
        return out["latents_lower"], out["latents_upper"]

    def tokenize(self, motion: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Token ids (upper (B,T'), lower (B,T')); lower ids carry the offset."""
        lat_l, lat_u = self.encode(motion)
        upper_ids, lower_ids = tokenize_clip(lat_u, lat_l, self.books)
        return upper_ids, lower_ids

    def decode_tokens(self, upper_ids: np.ndarray, lower_ids: np.ndarray) -> np.ndarray:
        """Motion (B, T, 3+6J) from token ids (offsets included on lower ids)."""
        upper_ids = np.asarray(upper_ids, dtype=np.int64)
        lower_ids = np.asarray(lower_ids, dtype=np.int64) - self.books.lower_offset
        if np.any(lower_ids < 0) or np.any(lower_ids >= self.books.lower.size):
            raise ValidationError("lower ids outside the offset id range")
        span = np.asarray(self.cfg.levels, dtype=np.float64) - 1.0
        v_u = index_to_levels(upper_ids, self.books.upper) / span
        v_l = index_to_levels(lower_ids, self.books.lower) / span
        g = self._decode_graph(upper_ids.shape[0])
        out = g.forward(self.params, {"values_lower": v_l, "values_upper": v_u}, "recon")
        return out["recon"]

    def reconstruct(self, motion: np.ndarray) -> tuple[np.ndarray, dict[str, float]]:
        """(reconstruction, loss terms) under the real quantized forward."""
        g = self._full_graph(motion.shape[0])
        names = ["recon", "loss", "loss_param", "loss_fk", "loss_vel", "loss_acc"]
        out = g.forward(self.params, {"motion": motion}, names)
        return out["recon"], {k: float(out[k]) for k in names[1:]}


@dataclass
class TrainResult:
    losses: list[float] = field(default_factory=list)
    lr: float = 0.0
    steps: int = 0


def corpus_loss(tok: FsqTokenizer, corpus: np.ndarray, batch: int = 8) -> float:
    """Mean loss over equal-size batches (corpus size must divide by batch)."""
    n = corpus.shape[0]
    if n % batch:
        raise ValidationError(f"corpus size {n} not divisible by batch {batch}")
    return float(np.mean([tok.loss(corpus[i : i + batch]) for i in range(0, n, batch)]))


def train_tokenizer(
    tok: FsqTokenizer,
    corpus: np.ndarray,
    *,
    steps: int = 200,
    lr: float = 1e-3,
    batch: int = 8,
    betas: tuple[float, float] = (0.5, 0.99),
    seed: int = 0,
) -> TrainResult:
    """Adam training on random minibatches; returns the per-step loss trace."""
    n = corpus.shape[0]
    if n < batch:
        raise ValidationError(f"corpus of {n} clips is smaller than batch {batch}")
    state = AdamState(tok.params)
    rng = SeededRng(seed).spawn("tokenizer-train")
    result = TrainResult(lr=lr, steps=steps)
    for _ in range(steps):
        picks = rng.integers(batch, n)
        loss, grads = tok.grad_step_inputs(corpus[picks])
        adam_step(tok.params, grads, state, lr, betas=betas)
        result.losses.append(loss)
    return result
