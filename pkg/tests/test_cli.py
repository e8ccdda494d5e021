"""CLI command behavior: bundles, manifests, exit codes, determinism."""

import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from chorekit import selftest
from chorekit.bundle import TensorBundle, read_bundle_file, write_bundle_file
from chorekit.cli import main
from chorekit.fsq import FsqCodebook

TINY_TOK = {"tokenizer": {"hidden": 16}}
TINY_GEN = {"generator": {"n_encoder_layers": 1, "n_decoder_layers": 1,
                          "dim": 16, "heads": 4, "ffn_dim": 24, "state": 4,
                          "dt_rank": 4, "conv_kernel": 2, "context": 8,
                          "vocab": 20, "genres": 4}}


def _cfg(tmp_path, payload, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def _gen_data(tmp_path, name="data.mtdb", clips=4, frames=24, music_dim=16,
              seed=0):
    out = tmp_path / name
    cfg = _cfg(tmp_path, {"music_dim": music_dim}, name=f"{name}.gencfg.json")
    rc = main(["gen-data", "--out", str(out), "--clips", str(clips),
               "--frames", str(frames), "--seed", str(seed), "--config", cfg])
    assert rc == 0
    return out


def _manifest(path):
    return json.loads((path.parent / f"{path.name}.manifest.json").read_text())


# ------------------------------------------------------------ gen-data

def test_gen_data_bundle_contents_and_manifest(tmp_path, capsys):
    out = _gen_data(tmp_path, clips=3, frames=24, music_dim=32)
    bundle = read_bundle_file(out)
    motion = bundle["motion_0000"]
    assert motion.shape == (24, 147) and motion.dtype == np.float32
    assert "motion_0002" in bundle and "motion_0003" not in bundle
    music = bundle["music_0000"]
    assert music.shape == (3, 32)  # 24 frames halved three times
    assert bundle["genre"].shape == (3,)

    manifest = _manifest(out)
    assert manifest["command"] == "gen-data"
    assert manifest["seed"] == 0
    assert manifest["config"]["token_frames"] == 3
    assert manifest["inputs"] == []
    assert manifest["outputs"] == [str(out)]
    digest = hashlib.sha256(out.read_bytes()).hexdigest()
    assert manifest["outputs_digest"][str(out)] == digest
    assert "wrote 3 clips" in capsys.readouterr().out


def test_gen_data_is_byte_deterministic_per_seed(tmp_path):
    a = _gen_data(tmp_path, name="a.mtdb", seed=7)
    b = _gen_data(tmp_path, name="b.mtdb", seed=7)
    c = _gen_data(tmp_path, name="c.mtdb", seed=8)
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


# ------------------------------------------------------------ tokenize / reconstruct

def test_tokenize_reconstruct_pipeline(tmp_path, capsys):
    data = _gen_data(tmp_path)
    cfg = _cfg(tmp_path, TINY_TOK)
    tokens = tmp_path / "tokens.mtdb"
    assert main(["tokenize", "--motion", str(data), "--out", str(tokens),
                 "--config", cfg]) == 0
    tb = read_bundle_file(tokens)
    upper = tb["tokens_upper_0000"]
    lower = tb["tokens_lower_0000"]
    assert upper.shape == lower.shape == (3,)
    assert upper.dtype == np.int64
    assert np.all((upper >= 0) & (upper < 1000))
    assert np.all((lower >= 1000) & (lower < 2000))
    assert _manifest(tokens)["config"]["tokenizer"]["hidden"] == 16

    # reconstruct recovers the tokenizer config from the tokens sidecar
    recon = tmp_path / "recon.mtdb"
    assert main(["reconstruct", "--tokens", str(tokens), "--out", str(recon),
                 "--motion", str(data)]) == 0
    rb = read_bundle_file(recon)
    clip = rb["recon_0000"]
    assert clip.shape == (24, 147) and clip.dtype == np.float32
    report = _manifest(recon)["report"]
    assert len(report) == 4
    assert set(report[0]) == {"clip", "l_kin", "l_dyn", "l_rec"}
    assert report[0]["l_rec"] == pytest.approx(
        report[0]["l_kin"] + report[0]["l_dyn"])
    assert "mean L_rec" in capsys.readouterr().out


def test_reconstruct_rejects_mismatched_frame_config(tmp_path, capsys):
    data = _gen_data(tmp_path)
    cfg = _cfg(tmp_path, TINY_TOK)
    tokens = tmp_path / "tokens.mtdb"
    assert main(["tokenize", "--motion", str(data), "--out", str(tokens),
                 "--config", cfg]) == 0
    bad = _cfg(tmp_path, {"tokenizer": {"hidden": 16, "frames": 96}},
               name="bad.json")
    rc = main(["reconstruct", "--tokens", str(tokens),
               "--out", str(tmp_path / "r.mtdb"), "--config", bad])
    captured = capsys.readouterr()
    assert rc == 2
    assert "error:" in captured.err and "frames" in captured.err


def test_train_tokenizer_then_reuse_params_via_sidecar(tmp_path):
    data = _gen_data(tmp_path)
    cfg = _cfg(tmp_path, TINY_TOK)
    params = tmp_path / "tok-params.mtdb"
    assert main(["train-tokenizer", "--motion", str(data), "--out", str(params),
                 "--steps", "3", "--config", cfg]) == 0
    manifest = _manifest(params)
    assert set(manifest["report"]) == {"loss_first", "loss_last"}
    assert manifest["config"]["steps"] == 3
    assert manifest["config"]["tokenizer"]["hidden"] == 16
    pb = read_bundle_file(params)
    assert pb["tok.lower.enc.c0.w"].shape == (4, 57, 16)

    # tokenize with --params and no --config: sidecar supplies hidden=16
    tokens = tmp_path / "tokens.mtdb"
    assert main(["tokenize", "--motion", str(data), "--params", str(params),
                 "--out", str(tokens)]) == 0
    assert read_bundle_file(tokens)["tokens_upper_0000"].shape == (3,)


# ------------------------------------------------------------ generate

def test_generate_writes_tokens_and_is_deterministic(tmp_path):
    data = _gen_data(tmp_path)
    cfg = _cfg(tmp_path, TINY_GEN)
    out_a = tmp_path / "gen-a.mtdb"
    out_b = tmp_path / "gen-b.mtdb"
    for out in (out_a, out_b):
        assert main(["generate", "--music", str(data), "--genre", "1",
                     "--out", str(out), "--config", cfg]) == 0
    assert out_a.read_bytes() == out_b.read_bytes()
    gb = read_bundle_file(out_a)
    upper, lower = gb["tokens_upper"], gb["tokens_lower"]
    assert upper.shape == lower.shape == (3,)
    assert np.all((upper >= 0) & (upper < 10))
    assert np.all((lower >= 10) & (lower < 20))
    manifest = _manifest(out_a)
    assert manifest["report"] == {"length": 3, "mode": "argmax",
                                  "long_mode": False}
    assert manifest["config"]["generator"]["music_dim"] == 16


def test_generate_sample_mode_and_genre_validation(tmp_path, capsys):
    data = _gen_data(tmp_path)
    cfg = _cfg(tmp_path, TINY_GEN)
    out = tmp_path / "gen.mtdb"
    assert main(["generate", "--music", str(data), "--genre", "0",
                 "--mode", "sample", "--temperature", "1.5",
                 "--out", str(out), "--config", cfg]) == 0
    assert _manifest(out)["report"]["mode"] == "sample"
    capsys.readouterr()
    rc = main(["generate", "--music", str(data), "--genre", "9",
               "--out", str(out), "--config", cfg])
    assert rc == 2
    assert "genre" in capsys.readouterr().err


def test_generate_long_mode_flag(tmp_path):
    data = _gen_data(tmp_path, frames=96)  # 12 music frames > context 8
    cfg = _cfg(tmp_path, TINY_GEN)
    out = tmp_path / "gen.mtdb"
    assert main(["generate", "--music", str(data), "--genre", "1",
                 "--out", str(out), "--config", cfg]) == 0
    report = _manifest(out)["report"]
    assert report == {"length": 12, "mode": "argmax", "long_mode": True}
    assert read_bundle_file(out)["tokens_upper"].shape == (12,)


# ------------------------------------------------------------ evaluate

def _feature_bundle(tmp_path, name, features):
    bundle = TensorBundle()
    bundle.add("features", np.asarray(features, dtype=np.float64))
    path = tmp_path / name
    write_bundle_file(bundle, path)
    return path


def test_evaluate_full_report_on_identical_sets(tmp_path, capsys):
    f = np.random.default_rng(0).standard_normal((8, 5))
    gen = _feature_bundle(tmp_path, "gen.mtdb", f)
    gt = _feature_bundle(tmp_path, "gt.mtdb", f)
    music = _feature_bundle(tmp_path, "music.mtdb", f)
    out = tmp_path / "report.json"
    rc = main(["evaluate", "--gen-features", str(gen), "--gt-features", str(gt),
               "--music-features", str(music), "--out", str(out)])
    assert rc == 0
    report = json.loads(out.read_text())
    assert set(report) == {"fid", "m_dist", "div", "mm_dist", "r_at_5",
                           "median_rank", "mean_rank"}
    assert report["fid"] < 1e-4
    assert report["m_dist"] == 0.0
    assert report["r_at_5"] == 1.0
    captured = capsys.readouterr()
    assert "fid:" in captured.out and "median_rank:" in captured.out
    assert _manifest(out)["report"] == report


def test_evaluate_without_music_warns_and_drops_keys(tmp_path, capsys):
    f = np.random.default_rng(1).standard_normal((6, 4))
    gen = _feature_bundle(tmp_path, "gen.mtdb", f)
    gt = _feature_bundle(tmp_path, "gt.mtdb", f + 0.1)
    out = tmp_path / "report.json"
    rc = main(["evaluate", "--gen-features", str(gen),
               "--gt-features", str(gt), "--out", str(out)])
    assert rc == 0
    assert set(json.loads(out.read_text())) == {"fid", "m_dist", "div"}
    assert "music-features" in capsys.readouterr().err


def test_evaluate_featurizes_motion_bundles_by_temporal_mean(tmp_path):
    data = _gen_data(tmp_path)
    out = tmp_path / "report.json"
    rc = main(["evaluate", "--gen-features", str(data),
               "--gt-features", str(data), "--out", str(out)])
    assert rc == 0
    report = json.loads(out.read_text())
    assert report["fid"] < 1e-4 and report["m_dist"] == 0.0

    bundle = read_bundle_file(data)
    expect = np.stack([np.asarray(bundle[f"motion_{i:04d}"], np.float64).mean(0)
                       for i in range(4)])
    from chorekit.retrieval import diversity
    assert report["div"] == pytest.approx(diversity(expect), rel=1e-9)


def test_evaluate_rejects_unfeaturizable_bundle(tmp_path, capsys):
    bundle = TensorBundle()
    bundle.add("something_else", np.zeros((3, 2)))
    path = tmp_path / "odd.mtdb"
    write_bundle_file(bundle, path)
    rc = main(["evaluate", "--gen-features", str(path),
               "--gt-features", str(path), "--out", str(tmp_path / "r.json")])
    assert rc == 2
    assert "features" in capsys.readouterr().err


# ------------------------------------------------------------ train-retrieval

def test_train_retrieval_smoke(tmp_path, capsys):
    out = tmp_path / "ret.mtdb"
    rc = main(["train-retrieval", "--out", str(out), "--clips", "8",
               "--frames", "2", "--epochs", "1", "--batch", "4"])
    assert rc == 0
    manifest = _manifest(out)
    assert set(manifest["report"]) == {"loss_first", "loss_last",
                                       "r_at_5_before", "r_at_5_after",
                                       "null_r_at_5"}
    assert manifest["report"]["null_r_at_5"] == pytest.approx(5 / 8)
    assert manifest["config"]["retrieval"]["hidden"] == 32
    assert "R@5" in capsys.readouterr().out
    assert "m.in.w" in read_bundle_file(out)


# ------------------------------------------------------------ masks-dump

def test_masks_dump_stdout_grid(capsys):
    assert main(["masks-dump", "--length", "8", "--step", "4",
                 "--stride", "2"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines == [
        "10000000",
        "11000000",
        "11100000",
        "11110000",
        "00111000",
        "00111100",
        "00001110",
        "00001111",
    ]


def test_masks_dump_to_file_with_manifest(tmp_path, capsys):
    out = tmp_path / "mask.txt"
    assert main(["masks-dump", "--length", "6", "--out", str(out)]) == 0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 6 and lines[2] == "111000"
    manifest = _manifest(out)
    assert manifest["config"] == {"length": 6, "step": 30, "stride": 15,
                                  "key_length": None}
    assert "6x6" in capsys.readouterr().out


# ------------------------------------------------------------ exit codes / errors

def test_bad_config_json_exits_2(tmp_path, capsys):
    cfg = tmp_path / "broken.json"
    cfg.write_text("{not json", encoding="utf-8")
    rc = main(["gen-data", "--out", str(tmp_path / "x.mtdb"),
               "--config", str(cfg)])
    assert rc == 2
    assert "not valid JSON" in capsys.readouterr().err
    cfg.write_text("[1, 2]", encoding="utf-8")
    assert main(["gen-data", "--out", str(tmp_path / "x.mtdb"),
                 "--config", str(cfg)]) == 2


def test_unknown_config_field_exits_2(tmp_path, capsys):
    data = _gen_data(tmp_path)
    cfg = _cfg(tmp_path, {"tokenizer": {"hiden": 16}})
    rc = main(["tokenize", "--motion", str(data),
               "--out", str(tmp_path / "t.mtdb"), "--config", cfg])
    assert rc == 2
    assert "unknown TokenizerConfig fields" in capsys.readouterr().err


def test_missing_input_file_exits_3(tmp_path, capsys):
    rc = main(["tokenize", "--motion", str(tmp_path / "absent.mtdb"),
               "--out", str(tmp_path / "t.mtdb")])
    assert rc == 3
    assert "error:" in capsys.readouterr().err


def test_corrupt_bundle_exits_3(tmp_path, capsys):
    bad = tmp_path / "bad.mtdb"
    bad.write_bytes(b"NOPE" + b"\x00" * 16)
    rc = main(["evaluate", "--gen-features", str(bad),
               "--gt-features", str(bad), "--out", str(tmp_path / "r.json")])
    assert rc == 3
    assert "error:" in capsys.readouterr().err


# ------------------------------------------------------------ selftest

def test_selftest_command_passes(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    for group in ("masks", "scan", "fsq", "grad", "fid"):
        assert f"selftest {group}: PASS" in out


def test_selftest_detects_injected_defects(capsys):
    def broken_scan(abar, bx, c):
        import numpy as np
        good = selftest.seqgen.ssm_scan_fused(abar, bx, c)
        return good + 1e-3

    rc = selftest.main(overrides={"scan": broken_scan})
    out = capsys.readouterr().out
    assert rc == 1
    assert "selftest scan: FAIL" in out
    assert "selftest masks: PASS" in out

    rc = selftest.main(overrides={"fsq": FsqCodebook((4, 2, 2, 2))})
    assert rc == 1
    assert "size 32 != 1000" in capsys.readouterr().out

    def crashing_mask(*a, **k):
        raise RuntimeError("boom")

    rc = selftest.main(overrides={"masks": crashing_mask})
    assert rc == 1
    assert "RuntimeError: boom" in capsys.readouterr().out


def test_module_invocation_via_subprocess():
    proc = subprocess.run(
        [sys.executable, "-m", "chorekit.cli", "masks-dump", "--length", "4",
         "--step", "2", "--stride", "1"],
        capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert proc.stdout.splitlines() == ["1000", "1100", "0110", "0011"]
