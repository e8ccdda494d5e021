"""Hybrid Mamba/attention token generator for paired dance token streams.

Forward-only: parameters are seeded at init and never trained here. All
floating-point math runs in f64 on top of f32 parameter storage, so argmax
generation is bit-reproducible for a given (params, input, seed) triple.

Sequence layout during decoding: position 0 holds the begin-of-sequence pair
and position i >= 1 holds generated token i-1, so the query at position t
attends music positions <= t and emitted token t depends on music[0..t].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.special import expit

from ._kernels import ssm_scan as _scan_kernel
from .errors import NumericalError, ValidationError
from .nn.params import ParamStore
from .rng import SeededRng

NEG_INF = -1e30


# ---------------------------------------------------------------- SSM pieces

@dataclass(frozen=True)
class SsmParams:
    """Diagonal (or general, oracle-only) linear state-space parameters.

    a: (N,) diagonal state matrix, or (N, N) general.
    b: (N, Din) input map.
    c: (T, Dout, N) per-step output map.
    delta: (T,) positive step sizes.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        a, b, c, delta = (np.asarray(x, dtype=np.float64) for x in
                          (self.a, self.b, self.c, self.delta))
        if a.ndim not in (1, 2) or (a.ndim == 2 and a.shape[0] != a.shape[1]):
            raise ValidationError(f"state matrix must be (N,) or (N,N), got {a.shape}")
        n = a.shape[0]
        if b.ndim != 2 or b.shape[0] != n:
            raise ValidationError(f"input map must be (N,Din), got {b.shape}")
        if c.ndim != 3 or c.shape[2] != n:
            raise ValidationError(f"output map must be (T,Dout,N), got {c.shape}")
        if delta.shape != (c.shape[0],):
            raise ValidationError(f"delta must be (T,), got {delta.shape}")
        if np.any(delta <= 0):
            raise ValidationError("delta must be positive")
        for name, val in (("a", a), ("b", b), ("c", c), ("delta", delta)):
            object.__setattr__(self, name, val)

    @property
    def diagonal(self) -> bool:
        return self.a.ndim == 1


def discretize(a: np.ndarray, b: np.ndarray, delta) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization, elementwise closed form for diagonal a.

    abar = exp(delta*a); bbar = ((exp(delta*a)-1)/a)*b with the a -> 0 limit
    delta*b. Shapes broadcast; expm1 keeps the small-|a| regime exact.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if np.any(delta <= 0):
        raise ValidationError("delta must be positive")
    da = delta * a
    abar = np.exp(da)
    safe = np.where(a == 0.0, 1.0, a)
    bbar = np.where(a == 0.0, delta * b, np.expm1(da) / safe * b)
    return abar, bbar


def discretize_general(a: np.ndarray, b: np.ndarray, delta: float):
    """Matrix-exponential path: abar = expm(dA), bbar = (dA)^-1 (abar - I) dB."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if float(delta) <= 0:
        raise ValidationError("delta must be positive")
    da = float(delta) * a
    abar = expm(da)
    bbar = np.linalg.solve(da, (abar - np.eye(a.shape[0])) @ (float(delta) * b))
    return abar, bbar


def ssm_scan_fused(abar: np.ndarray, bx: np.ndarray, c: np.ndarray) -> np.ndarray:
    """h_t = abar_t*h_{t-1} + bx_t (per channel/state), y_t = sum_n c_tn h_tdn."""
    return _scan_kernel(abar, bx, c)


def ssm_scan(params: SsmParams, x: np.ndarray) -> np.ndarray:
    """Run the recurrence for SsmParams; h_0 = 0. x: (T, Din) -> y: (T, Dout)."""
    x = np.asarray(x, dtype=np.float64)
    t, d_out, n = params.c.shape
    if x.shape != (t, params.b.shape[1]):
        raise ValidationError(f"x must be (T={t}, Din={params.b.shape[1]}), got {x.shape}")
    if params.diagonal:
        # per-step scalar factors: bbar[t,n] = ((exp(d_t a_n)-1)/a_n)
        abar, factor = discretize(params.a[None, :], 1.0, params.delta[:, None])
        bx = np.einsum("tn,nd,td->tn", factor, params.b, x)
        out = np.empty((t, d_out))
        for j in range(d_out):
            out[:, j] = ssm_scan_fused(
                abar[:, None, :], bx[:, None, :], params.c[:, j, :]
            )[:, 0]
        return out
    # general-matrix oracle path: plain sequential recurrence
    h = np.zeros(n)
    out = np.empty((t, d_out))
    for i in range(t):
        abar, bbar = discretize_general(params.a, params.b, float(params.delta[i]))
        h = abar @ h + bbar @ x[i]
        out[i] = params.c[i] @ h
    return out


# ---------------------------------------------------------------- masks

@dataclass(frozen=True)
class AttentionMask:
    """Boolean allow matrix (Tq, Tk); True = query row may attend key column."""

    allow: np.ndarray

    def __post_init__(self):
        allow = np.asarray(self.allow, dtype=bool)
        if allow.ndim != 2:
            raise ValidationError(f"mask must be 2-D, got shape {allow.shape}")
        tq, tk = allow.shape
        cols = np.arange(tk)[None, :]
        rows = np.arange(tq)[:, None]
        if np.any(allow & (cols > rows)):
            raise ValidationError("mask allows attending a future position")
        if not allow.any(axis=1).all():
            raise ValidationError("mask has a fully-masked query row")
        object.__setattr__(self, "allow", allow)

    def additive(self) -> np.ndarray:
        return np.where(self.allow, 0.0, NEG_INF)


def window_start(t: int, step: int = 30, stride: int = 15) -> int:
    """First attendable key for query t: 0 below the step, else snapped to stride."""
    if step < 1 or stride < 1 or stride > step:
        raise ValidationError("need step >= 1 and 1 <= stride <= step")
    if t < step:
        return 0
    return stride * (-(-(t - step + 1) // stride))


def build_swa_mask(length: int, step: int = 30, stride: int = 15,
                   key_length: int | None = None) -> AttentionMask:
    """Sliding-window mask: allow(t, k) iff window_start(t) <= k <= t.

    key_length (defaults to length) supports cross-attention where key
    positions index a parallel, frame-aligned sequence.
    """
    if length < 1:
        raise ValidationError("mask length must be >= 1")
    tk = length if key_length is None else key_length
    if tk < length:
        raise ValidationError("key sequence shorter than query sequence")
    allow = np.zeros((length, tk), dtype=bool)
    for t in range(length):
        allow[t, window_start(t, step, stride): t + 1] = True
    return AttentionMask(allow)


def causal_mask(length: int) -> AttentionMask:
    return AttentionMask(np.tril(np.ones((length, length), dtype=bool)))


# ---------------------------------------------------------------- attention

def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def attention(q: np.ndarray, k: np.ndarray, v: np.ndarray,
              mask: AttentionMask | None = None) -> np.ndarray:
    """softmax(Q K^T / sqrt(C) + M) V for one head; f64 throughout."""
    q, k, v = (np.asarray(x, dtype=np.float64) for x in (q, k, v))
    if q.ndim != 2 or k.shape != (k.shape[0], q.shape[1]) or v.shape[0] != k.shape[0]:
        raise ValidationError(
            f"attention shapes q{q.shape} k{k.shape} v{v.shape} inconsistent"
        )
    scores = q @ k.T / np.sqrt(q.shape[1])
    if mask is not None:
        if mask.allow.shape != (q.shape[0], k.shape[0]):
            raise ValidationError(
                f"mask shape {mask.allow.shape} != ({q.shape[0]}, {k.shape[0]})"
            )
        scores = scores + mask.additive()
    weights = _softmax(scores)
    if not np.all(np.isfinite(weights)):
        raise NumericalError("attention produced non-finite weights")
    return weights @ v


def _layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
                eps: float = 1e-5) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


def _silu(x: np.ndarray) -> np.ndarray:
    return x * expit(x)


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


class _P:
    """Read-only f64 view over a ParamStore subtree."""

    def __init__(self, store: ParamStore, prefix: str):
        self.store = store
        self.prefix = prefix

    def __call__(self, name: str) -> np.ndarray:
        return np.asarray(self.store.get(f"{self.prefix}.{name}"), dtype=np.float64)

    def sub(self, name: str) -> "_P":
        return _P(self.store, f"{self.prefix}.{name}")


def _mha(p: _P, x_q: np.ndarray, x_kv: np.ndarray, heads: int,
         mask: AttentionMask | None) -> np.ndarray:
    q = x_q @ p("wq") + p("bq")
    k = x_kv @ p("wk") + p("bk")
    v = x_kv @ p("wv") + p("bv")
    dim = q.shape[1]
    dh = dim // heads
    out = np.empty_like(q)
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        out[:, sl] = attention(q[:, sl], k[:, sl], v[:, sl], mask)
    return out @ p("wo") + p("bo")


def _ffn(p: _P, x: np.ndarray) -> np.ndarray:
    return np.maximum(x @ p("0.w") + p("0.b"), 0.0) @ p("1.w") + p("1.b")


# ---------------------------------------------------------------- config

@dataclass(frozen=True)
class HybridConfig:
    n_encoder_layers: int = 6
    n_decoder_layers: int = 6
    dim: int = 512
    heads: int = 8
    ffn_dim: int = 2048
    dropout: float = 0.25
    state: int = 16
    conv_kernel: int = 4
    expand: int = 2
    dt_rank: int = 32
    swa_step: int = 30
    swa_stride: int = 15
    genres: int = 16
    vocab: int = 2000
    genre_dropout: float = 0.3
    music_dim: int = 1024
    context: int = 45

    def __post_init__(self):
        if self.dim % self.heads:
            raise ValidationError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.vocab % 2:
            raise ValidationError("vocab must split into two equal codebooks")
        if not (1 <= self.swa_stride <= self.swa_step):
            raise ValidationError("need 1 <= swa_stride <= swa_step")

    @property
    def inner(self) -> int:
        return self.expand * self.dim

    @property
    def half_vocab(self) -> int:
        return self.vocab // 2

    @property
    def bos_upper(self) -> int:
        return self.vocab

    @property
    def bos_lower(self) -> int:
        return self.vocab + 1


@dataclass(frozen=True)
class TokenSequencePair:
    """Aligned upper/lower token id tracks; lower ids carry the vocab offset."""

    upper: np.ndarray
    lower: np.ndarray

    def __post_init__(self):
        upper = np.asarray(self.upper, dtype=np.int64)
        lower = np.asarray(self.lower, dtype=np.int64)
        if upper.ndim != 1 or upper.shape != lower.shape:
            raise ValidationError(
                f"token tracks must be equal-length 1-D, got {upper.shape}/{lower.shape}"
            )
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "lower", lower)

    def __len__(self) -> int:
        return self.upper.shape[0]


def _check_ids(pair: TokenSequencePair, cfg: HybridConfig, allow_bos: bool) -> None:
    half = cfg.half_vocab
    up, lo = pair.upper, pair.lower
    ok_u = (up >= 0) & (up < half)
    ok_l = (lo >= half) & (lo < cfg.vocab)
    if allow_bos:
        ok_u |= up == cfg.bos_upper
        ok_l |= lo == cfg.bos_lower
    if not (ok_u.all() and ok_l.all()):
        raise ValidationError("token id outside its codebook range")


# ---------------------------------------------------------------- parameters

def _linear_params(store: ParamStore, name: str, d_in: int, d_out: int) -> None:
    store.create(f"{name}.w", (d_in, d_out), fan_in=d_in)
    store.create(f"{name}.b", (d_out,), fan_in=d_in)


def _ln_params(store: ParamStore, name: str, dim: int) -> None:
    store.create_zeros(f"{name}.g", (dim,))
    store.set(f"{name}.g", np.ones(dim, dtype=np.float32))
    store.create_zeros(f"{name}.b", (dim,))


def _attn_params(store: ParamStore, name: str, dim: int) -> None:
    _ln_params(store, f"{name}.ln", dim)
    for part in ("q", "k", "v", "o"):
        store.create(f"{name}.w{part}", (dim, dim), fan_in=dim)
        store.create_zeros(f"{name}.b{part}", (dim,))


def _ffn_params(store: ParamStore, name: str, dim: int, hidden: int) -> None:
    _ln_params(store, f"{name}.ln", dim)
    _linear_params(store, f"{name}.0", dim, hidden)
    _linear_params(store, f"{name}.1", hidden, dim)


def _mamba_params(store: ParamStore, name: str, cfg: HybridConfig) -> None:
    e = cfg.inner
    _ln_params(store, f"{name}.ln", cfg.dim)
    _linear_params(store, f"{name}.in", cfg.dim, 2 * e)
    store.create(f"{name}.conv.w", (cfg.conv_kernel, e), fan_in=cfg.conv_kernel)
    store.create_zeros(f"{name}.conv.b", (e,))
    _linear_params(store, f"{name}.x", e, cfg.dt_rank + 2 * cfg.state)
    _linear_params(store, f"{name}.dt", cfg.dt_rank, e)
    # a_log in [-0.5, 0.5] puts the decay rates a = -exp(a_log) near -1
    store.create(f"{name}.a_log", (e, cfg.state), scale=0.5)
    _linear_params(store, f"{name}.out", e, cfg.dim)


def init_generator_params(cfg: HybridConfig, seed: int) -> ParamStore:
    store = ParamStore(seed)
    _linear_params(store, "enc.in0", cfg.music_dim, cfg.dim)
    _linear_params(store, "enc.in1", cfg.dim, cfg.dim)
    for i in range(cfg.n_encoder_layers):
        _mamba_params(store, f"enc.l{i}.mamba", cfg)
        _attn_params(store, f"enc.l{i}.attn", cfg.dim)
        _ffn_params(store, f"enc.l{i}.ffn", cfg.dim, cfg.ffn_dim)
    store.create("genre.emb", (cfg.genres + 1, cfg.dim), fan_in=cfg.dim)
    _ffn_params(store, "genre.ffn", cfg.dim, cfg.ffn_dim)
    store.create("dec.emb", (cfg.vocab + 2, cfg.dim), fan_in=cfg.dim)
    for i in range(cfg.n_decoder_layers):
        _mamba_params(store, f"dec.l{i}.mamba", cfg)
        _attn_params(store, f"dec.l{i}.self", cfg.dim)
        _attn_params(store, f"dec.l{i}.music", cfg.dim)
        _attn_params(store, f"dec.l{i}.genre", cfg.dim)
        _ffn_params(store, f"dec.l{i}.ffn", cfg.dim, cfg.ffn_dim)
    _linear_params(store, "dec.out", cfg.dim, cfg.vocab)
    return store


# ---------------------------------------------------------------- blocks

def mamba_block(x: np.ndarray, p: _P, cfg: HybridConfig) -> np.ndarray:
    """Selective-scan block with pre-norm and residual; x: (T, dim)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cfg.dim:
        raise ValidationError(f"mamba_block expects (T, {cfg.dim}), got {x.shape}")
    resid = x
    h = _layer_norm(x, p("ln.g"), p("ln.b"))
    xz = h @ p("in.w") + p("in.b")
    xs, z = xz[:, : cfg.inner], xz[:, cfg.inner:]
    # depthwise causal conv: left-pad so step t sees inputs t-k+1 .. t
    k = cfg.conv_kernel
    padded = np.concatenate([np.zeros((k - 1, cfg.inner)), xs], axis=0)
    conv_w = p("conv.w")
    conv = np.zeros_like(xs)
    for j in range(k):
        conv += padded[j: j + xs.shape[0]] * conv_w[j]
    xc = _silu(conv + p("conv.b"))
    proj = xc @ p("x.w") + p("x.b")
    dt_raw = proj[:, : cfg.dt_rank]
    b_t = proj[:, cfg.dt_rank: cfg.dt_rank + cfg.state]
    c_t = proj[:, cfg.dt_rank + cfg.state:]
    delta = _softplus(dt_raw @ p("dt.w") + p("dt.b"))  # (T, inner)
    a = -np.exp(p("a_log"))  # (inner, state)
    abar, bbar = discretize(a[None], b_t[:, None, :], delta[..., None])
    y = ssm_scan_fused(abar, bbar * xc[..., None], c_t)
    y = y * _silu(z)
    return resid + y @ p("out.w") + p("out.b")


def encode_music(features: np.ndarray, store: ParamStore, cfg: HybridConfig) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != cfg.music_dim:
        raise ValidationError(
            f"music features must be (T, {cfg.music_dim}), got {features.shape}"
        )
    root = _P(store, "enc")
    x = np.maximum(features @ root("in0.w") + root("in0.b"), 0.0)
    x = x @ root("in1.w") + root("in1.b")
    mask = build_swa_mask(x.shape[0], cfg.swa_step, cfg.swa_stride)
    for i in range(cfg.n_encoder_layers):
        lp = root.sub(f"l{i}")
        x = mamba_block(x, lp.sub("mamba"), cfg)
        a = lp.sub("attn")
        h = _layer_norm(x, a("ln.g"), a("ln.b"))
        x = x + _mha(a, h, h, cfg.heads, mask)
        f = lp.sub("ffn")
        x = x + _ffn(f, _layer_norm(x, f("ln.g"), f("ln.b")))
    return x


def encode_genre(genre: int | None, store: ParamStore, cfg: HybridConfig,
                 train: bool = False, rng: SeededRng | None = None) -> np.ndarray:
    """(1, dim) conditioning vector; null id when genre is None / dropped out."""
    null_id = cfg.genres
    if genre is None:
        gid = null_id
    else:
        gid = int(genre)
        if not 0 <= gid < cfg.genres:
            raise ValidationError(f"genre id {gid} outside [0, {cfg.genres})")
    if train:
        if rng is None:
            raise ValidationError("train-mode genre encoding needs an rng")
        if float(rng.uniform(())) < cfg.genre_dropout:
            gid = null_id
    emb = np.asarray(store.get("genre.emb"), dtype=np.float64)[gid][None, :]
    return emb + _ffn(_P(store, "genre.ffn"), emb)


def decode_step_logits(tokens: TokenSequencePair, music: np.ndarray,
                       genre_vec: np.ndarray, store: ParamStore,
                       cfg: HybridConfig) -> np.ndarray:
    """Per-position vocab logits for a decoded prefix; music is pre-encoded."""
    _check_ids(tokens, cfg, allow_bos=True)
    p = len(tokens)
    music = np.asarray(music, dtype=np.float64)
    if music.ndim != 2 or music.shape[1] != cfg.dim:
        raise ValidationError(f"encoded music must be (T, {cfg.dim}), got {music.shape}")
    if p > music.shape[0]:
        raise ValidationError(f"prefix length {p} exceeds music length {music.shape[0]}")
    genre_vec = np.asarray(genre_vec, dtype=np.float64).reshape(1, cfg.dim)
    emb = np.asarray(store.get("dec.emb"), dtype=np.float64)
    x = emb[tokens.upper] + emb[tokens.lower]
    self_mask = build_swa_mask(p, cfg.swa_step, cfg.swa_stride)
    cross_mask = build_swa_mask(p, cfg.swa_step, cfg.swa_stride,
                                key_length=music.shape[0])
    root = _P(store, "dec")
    for i in range(cfg.n_decoder_layers):
        lp = root.sub(f"l{i}")
        x = mamba_block(x, lp.sub("mamba"), cfg)
        a = lp.sub("self")
        h = _layer_norm(x, a("ln.g"), a("ln.b"))
        x = x + _mha(a, h, h, cfg.heads, self_mask)
        a = lp.sub("music")
        h = _layer_norm(x, a("ln.g"), a("ln.b"))
        x = x + _mha(a, h, music, cfg.heads, cross_mask)
        a = lp.sub("genre")
        h = _layer_norm(x, a("ln.g"), a("ln.b"))
        x = x + _mha(a, h, genre_vec, cfg.heads, None)
        f = lp.sub("ffn")
        x = x + _ffn(f, _layer_norm(x, f("ln.g"), f("ln.b")))
    return x @ root("out.w") + root("out.b")


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def next_token_loss(logits: np.ndarray, targets: TokenSequencePair,
                    cfg: HybridConfig | None = None) -> float:
    """Mean of the two codebook-restricted next-step cross-entropies.

    logits[t] is scored against targets at t+1; each codebook half is
    renormalized independently.
    """
    cfg = cfg or HybridConfig()
    logits = np.asarray(logits, dtype=np.float64)
    n = len(targets)
    if logits.ndim != 2 or logits.shape != (n, cfg.vocab):
        raise ValidationError(f"logits must be ({n}, {cfg.vocab}), got {logits.shape}")
    if n < 2:
        raise ValidationError("need at least 2 positions for a next-token loss")
    _check_ids(targets, cfg, allow_bos=False)
    half = cfg.half_vocab
    pred = logits[:-1]
    up = targets.upper[1:]
    lo = targets.lower[1:] - half
    rows = np.arange(n - 1)
    ce_u = -_log_softmax(pred[:, :half])[rows, up].mean()
    ce_l = -_log_softmax(pred[:, half:])[rows, lo].mean()
    return float(0.5 * (ce_u + ce_l))


# ---------------------------------------------------------------- generation

def generate(music_features: np.ndarray, genre: int | None, store: ParamStore,
             cfg: HybridConfig, mode: str = "argmax", temperature: float = 1.0,
             seed: int = 0) -> TokenSequencePair:
    """Autoregressive token generation; context capped at cfg.context positions.

    argmax mode is deterministic; temperature mode samples each codebook half
    from softmax(logits / temperature) with a seeded stream.
    """
    if mode not in ("argmax", "temperature"):
        raise ValidationError(f"unknown generation mode {mode!r}")
    if mode == "temperature" and temperature <= 0:
        raise ValidationError("temperature must be positive")
    music_features = np.asarray(music_features, dtype=np.float64)
    t_prime = music_features.shape[0]
    if t_prime < 1:
        raise ValidationError("need at least one music frame")
    music = encode_music(music_features, store, cfg)
    genre_vec = encode_genre(genre, store, cfg)
    rng = SeededRng(seed).spawn("generate")
    half = cfg.half_vocab
    upper = [cfg.bos_upper]
    lower = [cfg.bos_lower]
    for _ in range(t_prime):
        start = max(0, len(upper) - cfg.context)
        prefix = TokenSequencePair(np.array(upper[start:]), np.array(lower[start:]))
        window = music[start: start + len(prefix)]
        logits = decode_step_logits(prefix, window, genre_vec, store, cfg)[-1]
        if mode == "argmax":
            nxt_u = int(np.argmax(logits[:half]))
            nxt_l = half + int(np.argmax(logits[half:]))
        else:
            prob_u = _softmax(logits[:half] / temperature)
            prob_l = _softmax(logits[half:] / temperature)
            nxt_u = int(rng.choice_weighted(prob_u))
            nxt_l = half + int(rng.choice_weighted(prob_l))
        upper.append(nxt_u)
        lower.append(nxt_l)
    return TokenSequencePair(np.array(upper[1:]), np.array(lower[1:]))
