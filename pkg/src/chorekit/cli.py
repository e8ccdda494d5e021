"""Command-line surface wiring the library into reproducible MTDB pipelines.

Every subcommand that writes an output also writes ``<out>.manifest.json``
next to it (command, version, seed, resolved config + digest, input/output
paths, output digests, wall time).  A ``--config`` JSON file supplies defaults
that explicit flags override.  Exit codes: 0 ok, 2 validation, 3 I/O or
container format, 4 numerical failure.

Heavy imports stay inside the command functions so that CHOREKIT_THREADS can
cap the BLAS thread pools before numpy loads.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from pathlib import Path

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)

# Toy scale keeps the synthetic-pairs trainer in CLI-friendly time; override
# any field via --config {"retrieval": {...}}.
_TOY_RETRIEVAL = {
    "layers": 2,
    "hidden": 32,
    "heads": 4,
    "dropout": 0.0,
    "music_dim": 24,
    "dance_dim": 18,
}


def _cap_threads() -> None:
    cap = os.environ.get("CHOREKIT_THREADS")
    if cap:
        for var in _THREAD_VARS:
            os.environ.setdefault(var, cap)


# ------------------------------------------------------------- config plumbing

def _load_config(path: str | None) -> dict:
    from .errors import ValidationError

    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"--config {path} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ValidationError(f"--config {path} must hold a JSON object")
    return obj


def _resolve(args: argparse.Namespace, config: dict, name: str, default):
    """Explicit flag wins, then the config file, then the built-in default."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    return config.get(name, default)


def _build_cfg(cls, overrides: dict, **fixed):
    """Instantiate a config dataclass from JSON overrides plus fixed fields."""
    from .errors import ValidationError

    names = {f.name for f in dataclasses.fields(cls)}
    bad = set(overrides) - names
    if bad:
        raise ValidationError(f"unknown {cls.__name__} fields: {sorted(bad)}")
    merged = {**overrides, **fixed}
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in merged.items()}
    return cls(**kw)


def _sidecar_config(path: str) -> dict:
    """Config recorded in the manifest next to an input file, if any."""
    side = Path(f"{path}.manifest.json")
    if not side.exists():
        return {}
    try:
        manifest = json.loads(side.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"warning: ignoring unreadable sidecar {side}: {exc}", file=sys.stderr)
        return {}
    cfg = manifest.get("config", {})
    return cfg if isinstance(cfg, dict) else {}


# ---------------------------------------------------------------- manifest I/O

def _json_default(obj):
    item = getattr(obj, "item", None)
    if item is not None:
        return item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _config_digest(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"),
                      default=_json_default)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _write_manifest(command: str, out_path, *, started: float, seed,
                    config: dict, inputs: list, report=None) -> dict:
    from . import __version__

    manifest = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": config,
        "config_digest": _config_digest(config),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(out_path)],
        "outputs_digest": {str(out_path): _sha256_file(out_path)},
        "wall_time_s": round(time.perf_counter() - started, 3),
    }
    if report is not None:
        manifest["report"] = report
    text = json.dumps(manifest, indent=2, sort_keys=True, default=_json_default)
    Path(f"{out_path}.manifest.json").write_text(text + "\n", encoding="utf-8")
    return manifest


# ---------------------------------------------------------------- bundle utils

def _read_bundle(path):
    from .bundle import read_bundle_file

    return read_bundle_file(path)


def _indexed(bundle, stem: str, path) -> list:
    """All consecutive ``{stem}_0000..`` entries; at least one must exist."""
    from .errors import ValidationError

    out = []
    while f"{stem}_{len(out):04d}" in bundle:
        out.append(bundle[f"{stem}_{len(out):04d}"])
    if not out:
        raise ValidationError(f"bundle {path} has no '{stem}_0000' entry")
    return out


def _stack_clips(arrays: list, path: str):
    import numpy as np

    from .errors import ValidationError

    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ValidationError(f"bundle {path} mixes clip shapes {sorted(shapes)}")
    return np.stack(arrays)


def _load_features(path) -> "np.ndarray":
    """(N, D) features: explicit 'features' entry, else per-clip temporal mean."""
    import numpy as np

    from .errors import ValidationError

    bundle = _read_bundle(path)
    if "features" in bundle:
        return np.asarray(bundle["features"], dtype=np.float64)
    for stem in ("recon", "motion", "music"):
        if f"{stem}_0000" in bundle:
            clips = _stack_clips(_indexed(bundle, stem, path), path)
            return np.asarray(clips, dtype=np.float64).mean(axis=1)
    raise ValidationError(
        f"bundle {path} has no 'features' entry and no 'recon_0000'/"
        f"'motion_0000'/'music_0000' clips to featurize"
    )


def _tokenizer_from(args, config: dict, frames: int, width: int, seed: int):
    """Tokenizer for the given data shape; params loaded from --params if set."""
    from .bundle import read_bundle_file
    from .errors import ValidationError
    from .motion import default_skeleton
    from .nn.params import ParamStore
    from .nn.tokenizer import FsqTokenizer, TokenizerConfig

    overrides = dict(config.get("tokenizer", {}))
    params_path = getattr(args, "params", None)
    if params_path is not None:
        overrides = {**_sidecar_config(params_path).get("tokenizer", {}), **overrides}
    overrides.pop("frames", None)
    tcfg = _build_cfg(TokenizerConfig, overrides, frames=frames)
    if tcfg.width != width:
        raise ValidationError(
            f"motion width {width} does not match config width {tcfg.width}"
        )
    if params_path is not None:
        store = ParamStore.from_bundle(read_bundle_file(params_path))
        return FsqTokenizer(tcfg, default_skeleton(), store), tcfg
    return FsqTokenizer.create(tcfg, seed=seed), tcfg


# -------------------------------------------------------------------- commands

def cmd_gen_data(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    import numpy as np  # noqa: F401  (keeps thread caps ahead of first use)

    from .bundle import TensorBundle, write_bundle_file
    from .nn.tokenizer import TokenizerConfig
    from .synth import (SyntheticCorpusSpec, gen_genre_labels,
                        gen_synthetic_motion, gen_synthetic_music)

    config = _load_config(args.config)
    clips = _resolve(args, config, "clips", 4)
    frames = _resolve(args, config, "frames", 360)
    seed = _resolve(args, config, "seed", 0)
    music_dim = config.get("music_dim", 1024)

    spec = SyntheticCorpusSpec(n_clips=clips, frames=frames,
                               music_dim=music_dim, seed=seed)
    # Music tracks are emitted at token rate so generate() can consume them
    # one-to-one with tokenizer output frames.
    token_frames = TokenizerConfig(frames=frames).token_frames
    music_spec = dataclasses.replace(spec, frames=token_frames)

    bundle = TensorBundle()
    for i, clip in enumerate(gen_synthetic_motion(spec)):
        bundle.add(f"motion_{i:04d}", clip.flatten().astype(np.float32))
    for i, track in enumerate(gen_synthetic_music(music_spec)):
        bundle.add(f"music_{i:04d}", track)
    bundle.add("genre", gen_genre_labels(spec))
    write_bundle_file(bundle, args.out)

    resolved = {"clips": clips, "frames": frames, "music_dim": music_dim,
                "token_frames": token_frames}
    _write_manifest("gen-data", args.out, started=started, seed=seed,
                    config=resolved, inputs=[])
    print(f"wrote {clips} clips ({frames} motion frames, {token_frames} music "
          f"frames) to {args.out}")
    return 0


def cmd_train_tokenizer(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    from .bundle import write_bundle_file
    from .nn.tokenizer import train_tokenizer

    config = _load_config(args.config)
    seed = _resolve(args, config, "seed", 0)
    steps = _resolve(args, config, "steps", 200)
    lr = _resolve(args, config, "lr", 1e-3)

    bundle = _read_bundle(args.motion)
    corpus = _stack_clips(_indexed(bundle, "motion", args.motion), args.motion)
    batch = _resolve(args, config, "batch", min(8, corpus.shape[0]))
    tok, tcfg = _tokenizer_from(args, config, corpus.shape[1], corpus.shape[2], seed)

    result = train_tokenizer(tok, corpus, steps=steps, lr=lr, batch=batch, seed=seed)
    write_bundle_file(tok.params.to_bundle(), args.out)

    report = {"loss_first": result.losses[0], "loss_last": result.losses[-1]}
    resolved = {"tokenizer": dataclasses.asdict(tcfg), "steps": steps,
                "lr": lr, "batch": batch}
    _write_manifest("train-tokenizer", args.out, started=started, seed=seed,
                    config=resolved, inputs=[args.motion], report=report)
    print(f"trained {steps} steps: loss {result.losses[0]:.6f} -> "
          f"{result.losses[-1]:.6f}; params in {args.out}")
    return 0


def cmd_tokenize(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    from .bundle import TensorBundle, write_bundle_file

    config = _load_config(args.config)
    seed = _resolve(args, config, "seed", 0)

    bundle = _read_bundle(args.motion)
    corpus = _stack_clips(_indexed(bundle, "motion", args.motion), args.motion)
    tok, tcfg = _tokenizer_from(args, config, corpus.shape[1], corpus.shape[2], seed)

    upper, lower = tok.tokenize(corpus)
    out = TensorBundle()
    for i in range(corpus.shape[0]):
        out.add(f"tokens_upper_{i:04d}", upper[i])
        out.add(f"tokens_lower_{i:04d}", lower[i])
    write_bundle_file(out, args.out)

    resolved = {"tokenizer": dataclasses.asdict(tcfg)}
    inputs = [args.motion] + ([args.params] if args.params else [])
    _write_manifest("tokenize", args.out, started=started, seed=seed,
                    config=resolved, inputs=inputs)
    print(f"tokenized {corpus.shape[0]} clips -> {upper.shape[1]} token pairs "
          f"each; ids in {args.out}")
    return 0


def cmd_reconstruct(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    import numpy as np

    from .bundle import TensorBundle, write_bundle_file
    from .errors import ValidationError
    from .motion import MotionClip, default_skeleton, loss_dyn, loss_kin

    config = _load_config(args.config)
    seed = _resolve(args, config, "seed", 0)

    bundle = _read_bundle(args.tokens)
    uppers = _stack_clips(_indexed(bundle, "tokens_upper", args.tokens), args.tokens)
    lowers = _stack_clips(_indexed(bundle, "tokens_lower", args.tokens), args.tokens)

    # Token streams do not pin the frame count; recover it from configs
    # recorded next to the params/tokens files unless --config overrides.
    overrides = {
        **_sidecar_config(args.tokens).get("tokenizer", {}),
        **config.get("tokenizer", {}),
    }
    merged_config = {**config, "tokenizer": overrides}
    frames = overrides.get("frames", 360)
    width = 3 + 6 * overrides.get("joints", 24)
    tok, tcfg = _tokenizer_from(args, merged_config, frames, width, seed)
    if tcfg.token_frames != uppers.shape[1]:
        raise ValidationError(
            f"tokens have {uppers.shape[1]} frames but config implies "
            f"{tcfg.token_frames}; pass --config with the tokenizer used"
        )

    recon = tok.decode_tokens(uppers, lowers).astype(np.float32)
    out = TensorBundle()
    for i in range(recon.shape[0]):
        out.add(f"recon_{i:04d}", recon[i])
    write_bundle_file(out, args.out)

    report = None
    if args.motion is not None:
        gt_bundle = _read_bundle(args.motion)
        gt = _stack_clips(_indexed(gt_bundle, "motion", args.motion), args.motion)
        if gt.shape != recon.shape:
            raise ValidationError(
                f"reconstruction shape {recon.shape} != motion shape {gt.shape}"
            )
        skel = default_skeleton()
        report = []
        for i in range(recon.shape[0]):
            pred = MotionClip.from_flat(recon[i])
            ref = MotionClip.from_flat(gt[i])
            kin = loss_kin(pred, ref, skel)
            dyn = loss_dyn(pred, ref)
            report.append({"clip": i, "l_kin": kin, "l_dyn": dyn,
                           "l_rec": kin + dyn})
            print(f"clip {i}: L_kin={kin:.6f} L_dyn={dyn:.6f} "
                  f"L_rec={kin + dyn:.6f}")
        mean_rec = float(np.mean([r["l_rec"] for r in report]))
        print(f"mean L_rec over {len(report)} clips: {mean_rec:.6f}")

    resolved = {"tokenizer": dataclasses.asdict(tcfg)}
    inputs = [args.tokens] + [p for p in (args.params, args.motion) if p]
    _write_manifest("reconstruct", args.out, started=started, seed=seed,
                    config=resolved, inputs=inputs, report=report)
    print(f"decoded {recon.shape[0]} clips to {args.out}")
    return 0


def cmd_train_retrieval(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    from .bundle import write_bundle_file
    from .retrieval import (RetrievalConfig, RetrievalModel, make_paired_corpus,
                            train_retrieval_toy)

    config = _load_config(args.config)
    seed = _resolve(args, config, "seed", 0)
    clips = _resolve(args, config, "clips", 256)
    frames = _resolve(args, config, "frames", 8)
    epochs = _resolve(args, config, "epochs", 20)
    lr = _resolve(args, config, "lr", 1e-3)
    batch = _resolve(args, config, "batch", 64)

    rcfg = _build_cfg(RetrievalConfig,
                      {**_TOY_RETRIEVAL, **config.get("retrieval", {})})
    model = RetrievalModel.create(rcfg, seed=seed)
    music, dance = make_paired_corpus(clips, frames, rcfg, seed=seed)
    result = train_retrieval_toy(model, music, dance, epochs=epochs, lr=lr,
                                 batch=batch, seed=seed)
    write_bundle_file(model.params.to_bundle(), args.out)

    report = {
        "loss_first": result.losses[0],
        "loss_last": result.losses[-1],
        "r_at_5_before": result.r_at_5_before,
        "r_at_5_after": result.r_at_5_after,
        "null_r_at_5": result.null_r_at_5,
    }
    resolved = {"retrieval": dataclasses.asdict(rcfg), "clips": clips,
                "frames": frames, "epochs": epochs, "lr": lr, "batch": batch}
    _write_manifest("train-retrieval", args.out, started=started, seed=seed,
                    config=resolved, inputs=[], report=report)
    print(f"trained {epochs} epochs on {clips} synthetic pairs: R@5 "
          f"{result.r_at_5_before:.4f} -> {result.r_at_5_after:.4f} "
          f"(null {result.null_r_at_5:.4f}); params in {args.out}")
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    import numpy as np

    from .bundle import TensorBundle, read_bundle_file, write_bundle_file
    from .errors import ValidationError
    from .nn.params import ParamStore
    from .seqgen import HybridConfig, generate, init_generator_params

    config = _load_config(args.config)
    seed = _resolve(args, config, "seed", 0)
    mode = _resolve(args, config, "mode", "argmax")
    temperature = _resolve(args, config, "temperature", 1.0)
    clip = _resolve(args, config, "clip", 0)

    bundle = _read_bundle(args.music)
    key = f"music_{clip:04d}"
    if key not in bundle and "music" in bundle:
        key = "music"
    if key not in bundle:
        raise ValidationError(
            f"bundle {args.music} has neither 'music_{clip:04d}' nor 'music'"
        )
    music = np.asarray(bundle[key], dtype=np.float64)

    overrides = dict(config.get("generator", {}))
    if args.params is not None:
        overrides = {**_sidecar_config(args.params).get("generator", {}),
                     **overrides}
    overrides.pop("music_dim", None)
    gcfg = _build_cfg(HybridConfig, overrides, music_dim=music.shape[1])
    if not 0 <= args.genre < gcfg.genres:
        raise ValidationError(
            f"genre {args.genre} outside [0, {gcfg.genres})"
        )
    if args.params is not None:
        store = ParamStore.from_bundle(read_bundle_file(args.params))
    else:
        store = init_generator_params(gcfg, seed)

    lib_mode = "temperature" if mode == "sample" else mode
    pair = generate(music, args.genre, store, gcfg, mode=lib_mode,
                    temperature=temperature, seed=seed)

    out = TensorBundle()
    out.add("tokens_upper", pair.upper)
    out.add("tokens_lower", pair.lower)
    write_bundle_file(out, args.out)

    long_mode = music.shape[0] > gcfg.context
    report = {"length": int(music.shape[0]), "mode": mode,
              "long_mode": long_mode}
    resolved = {"generator": dataclasses.asdict(gcfg), "mode": mode,
                "temperature": temperature, "genre": args.genre, "clip": clip}
    inputs = [args.music] + ([args.params] if args.params else [])
    _write_manifest("generate", args.out, started=started, seed=seed,
                    config=resolved, inputs=inputs, report=report)
    print(f"generated {music.shape[0]} token pairs ({mode}"
          f"{', long mode' if long_mode else ''}) to {args.out}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    from .retrieval import evaluate_features

    config = _load_config(args.config)  # accepted for symmetry; no knobs yet

    gen = _load_features(args.gen_features)
    gt = _load_features(args.gt_features)
    music = None
    if args.music_features is not None:
        music = _load_features(args.music_features)
    else:
        print("warning: no --music-features; mm_dist, r_at_5, median_rank and "
              "mean_rank are omitted", file=sys.stderr)

    report = evaluate_features(gen, gt, music)
    text = json.dumps(report, indent=2, sort_keys=True, default=_json_default)
    Path(args.out).write_text(text + "\n", encoding="utf-8")
    for key in sorted(report):
        print(f"{key}: {report[key]:.6f}")

    inputs = [args.gen_features, args.gt_features]
    if args.music_features is not None:
        inputs.append(args.music_features)
    _write_manifest("evaluate", args.out, started=started, seed=None,
                    config=config, inputs=inputs, report=report)
    return 0


def cmd_masks_dump(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    from .seqgen import build_swa_mask

    config = _load_config(args.config)
    step = _resolve(args, config, "step", 30)
    stride = _resolve(args, config, "stride", 15)
    key_length = _resolve(args, config, "key_length", None)

    mask = build_swa_mask(args.length, step, stride, key_length=key_length)
    grid = "\n".join(
        "".join("1" if allowed else "0" for allowed in row)
        for row in mask.allow
    ) + "\n"
    if args.out is None:
        sys.stdout.write(grid)
        return 0
    Path(args.out).write_text(grid, encoding="utf-8")
    resolved = {"length": args.length, "step": step, "stride": stride,
                "key_length": key_length}
    _write_manifest("masks-dump", args.out, started=started, seed=None,
                    config=resolved, inputs=[])
    print(f"wrote {mask.allow.shape[0]}x{mask.allow.shape[1]} mask grid "
          f"to {args.out}")
    return 0


def cmd_selftest(args: argparse.Namespace) -> int:
    from .selftest import main as selftest_main

    return selftest_main()


# ---------------------------------------------------------------------- parser

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chorekit",
        description="Motion tokenization, token generation and retrieval "
                    "metrics over MTDB bundle files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, help_text: str) -> argparse.ArgumentParser:
        cmd = sub.add_parser(name, help=help_text)
        cmd.set_defaults(func=func)
        cmd.add_argument("--config", default=None,
                         help="JSON config merged under explicit flags")
        return cmd

    cmd = add("gen-data", cmd_gen_data,
              "write a synthetic motion + music + genre bundle")
    cmd.add_argument("--out", required=True)
    cmd.add_argument("--clips", type=int, default=None)
    cmd.add_argument("--frames", type=int, default=None)
    cmd.add_argument("--seed", type=int, default=None)

    cmd = add("train-tokenizer", cmd_train_tokenizer,
              "train the FSQ tokenizer on a motion bundle")
    cmd.add_argument("--motion", required=True)
    cmd.add_argument("--params", default=None,
                     help="warm-start parameter bundle")
    cmd.add_argument("--out", required=True)
    cmd.add_argument("--steps", type=int, default=None)
    cmd.add_argument("--lr", type=float, default=None)
    cmd.add_argument("--batch", type=int, default=None)
    cmd.add_argument("--seed", type=int, default=None)

    cmd = add("tokenize", cmd_tokenize,
              "encode a motion bundle into token-id streams")
    cmd.add_argument("--motion", required=True)
    cmd.add_argument("--params", default=None,
                     help="parameter bundle (fresh seeded params if omitted)")
    cmd.add_argument("--out", required=True)
    cmd.add_argument("--seed", type=int, default=None)

    cmd = add("reconstruct", cmd_reconstruct,
              "decode token-id streams back into motion")
    cmd.add_argument("--tokens", required=True)
    cmd.add_argument("--params", default=None)
    cmd.add_argument("--motion", default=None,
                     help="reference motion bundle for a loss report")
    cmd.add_argument("--out", required=True)
    cmd.add_argument("--seed", type=int, default=None)

    cmd = add("train-retrieval", cmd_train_retrieval,
              "train the dual-encoder retriever on synthetic pairs")
    cmd.add_argument("--out", required=True)
    cmd.add_argument("--clips", type=int, default=None)
    cmd.add_argument("--frames", type=int, default=None)
    cmd.add_argument("--epochs", type=int, default=None)
    cmd.add_argument("--lr", type=float, default=None)
    cmd.add_argument("--batch", type=int, default=None)
    cmd.add_argument("--seed", type=int, default=None)

    cmd = add("generate", cmd_generate,
              "autoregressively generate token streams from music features")
    cmd.add_argument("--music", required=True)
    cmd.add_argument("--genre", type=int, required=True)
    cmd.add_argument("--params", default=None,
                     help="parameter bundle (fresh seeded params if omitted)")
    cmd.add_argument("--mode", choices=("argmax", "sample"), default=None)
    cmd.add_argument("--temperature", type=float, default=None)
    cmd.add_argument("--clip", type=int, default=None,
                     help="music clip index within the bundle (default 0)")
    cmd.add_argument("--seed", type=int, default=None)
    cmd.add_argument("--out", required=True)

    cmd = add("evaluate", cmd_evaluate,
              "metric report (FID, M-Dist, DIV, and with music: MM-Dist, "
              "R@5, ranks) over feature bundles")
    cmd.add_argument("--gen-features", required=True)
    cmd.add_argument("--gt-features", required=True)
    cmd.add_argument("--music-features", default=None)
    cmd.add_argument("--out", required=True)

    cmd = add("masks-dump", cmd_masks_dump,
              "emit a sliding-window attention mask as a 0/1 text grid")
    cmd.add_argument("--length", type=int, required=True)
    cmd.add_argument("--step", type=int, default=None)
    cmd.add_argument("--stride", type=int, default=None)
    cmd.add_argument("--key-length", type=int, default=None)
    cmd.add_argument("--out", default=None,
                     help="write the grid to a file instead of stdout")

    add("selftest", cmd_selftest,
        "run the invariant suite and report pass/fail per group")

    return parser


def main(argv=None) -> int:
    _cap_threads()
    args = _build_parser().parse_args(argv)
    from .errors import FormatError, NumericalError, ValidationError

    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
