import json

import numpy as np
import pytest

from helpers import mixed_corpus, text_instance, two_population_dump
from lomo.cli import main
from lomo.corpus import CurationManifest, write_instances
from lomo.hsd import write_hsd


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def make_corpus(tmp_path, n_text=20, n_image=10):
    src = tmp_path / "in.jsonl"
    write_instances(src, mixed_corpus(n_text, n_image, seed=2))
    return src


def make_dump_file(tmp_path):
    mean = np.zeros(3)
    cov = np.eye(3)
    dump = two_population_dump([(mean, cov, mean + 1.0, cov)] * 2, n_per_role=200, seed=0)
    path = tmp_path / "d.hsd"
    write_hsd(path, dump)
    return path


# -- curate ----------------------------------------------------------------------


def test_curate_end_to_end(tmp_path, capsys):
    src = make_corpus(tmp_path)
    out = tmp_path / "out.jsonl"
    code, stdout, _ = run(
        capsys, "curate", "--in", str(src), "--out", str(out),
        "--seed", "42", "--rewrite-ratio", "0.5",
    )
    assert code == 0
    doc = json.loads(stdout)
    assert doc["count_identity"] == "OK"
    assert doc["instances_per_sec"] > 0
    manifest = CurationManifest.load(str(out) + ".manifest.json")
    assert manifest.rewrite_ratio == 0.5
    assert manifest.seed == 42


def test_curate_missing_required_flag_exits_2(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["curate", "--out", str(tmp_path / "o.jsonl")])
    assert err.value.code == 2


def test_curate_ratio_out_of_range_exits_2(tmp_path):
    with pytest.raises(SystemExit) as err:
        main([
            "curate", "--in", str(tmp_path / "i.jsonl"), "--out", str(tmp_path / "o.jsonl"),
            "--rewrite-ratio", "1.5",
        ])
    assert err.value.code == 2


def test_curate_missing_input_runtime_error(tmp_path, capsys):
    code, _, stderr = run(
        capsys, "curate", "--in", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "o.jsonl")
    )
    assert code == 1
    assert "error:" in stderr


def test_curate_config_file_with_flag_override(tmp_path, capsys):
    src = make_corpus(tmp_path)
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"seed": 1, "rewrite_ratio": 0.25, "position_mode": "prefix"}))
    out = tmp_path / "out.jsonl"
    code, stdout, _ = run(
        capsys, "curate", "--in", str(src), "--out", str(out),
        "--config", str(cfg_path), "--seed", "2",
    )
    assert code == 0
    manifest = CurationManifest.load(str(out) + ".manifest.json")
    assert manifest.seed == 2  # flag wins
    assert manifest.rewrite_ratio == 0.25  # config survives
    assert manifest.position_mode == "prefix"


def test_curate_stats_out_file(tmp_path, capsys):
    src = make_corpus(tmp_path, n_text=5, n_image=0)
    stats_path = tmp_path / "stats.json"
    code, stdout, _ = run(
        capsys, "curate", "--in", str(src), "--out", str(tmp_path / "o.jsonl"),
        "--stats-out", str(stats_path),
    )
    assert code == 0 and stdout == ""
    doc = json.loads(stats_path.read_text())
    assert "instances_per_sec" in doc and "route_histogram" in doc


# -- eval-render --------------------------------------------------------------------


def test_eval_render_cli(tmp_path, capsys):
    src = tmp_path / "bench.jsonl"
    write_instances(src, [text_instance(i, f"Question {i}?") for i in range(4)])
    out = tmp_path / "rendered.jsonl"
    code, stdout, _ = run(
        capsys, "eval-render", "--in", str(src), "--out", str(out),
        "--font-size", "20", "--line-height", "22",
    )
    assert code == 0
    doc = json.loads(stdout)
    assert doc["counts"]["rewritten"] == 4
    assert len(list((tmp_path / "rendered_images").glob("*.png"))) == 4


# -- ratio-match --------------------------------------------------------------------


def test_ratio_match_cli(tmp_path, capsys):
    src = make_corpus(tmp_path, n_text=10, n_image=30)
    code, stdout, _ = run(
        capsys, "ratio-match", "--in", str(src), "--out", str(tmp_path / "o.jsonl"),
        "--target", "1:1", "--seed", "3",
    )
    assert code == 0
    doc = json.loads(stdout)
    assert doc["counts"]["image_bearing_original"] == 10
    assert doc["counts"]["text_only_kept"] == 10


def test_ratio_match_bad_target_exits_2(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["ratio-match", "--in", "x", "--out", "y", "--target", "3"])
    assert err.value.code == 2


def test_ratio_match_unreachable_runtime_error(tmp_path, capsys):
    src = make_corpus(tmp_path, n_text=50, n_image=10)
    code, _, stderr = run(
        capsys, "ratio-match", "--in", str(src), "--out", str(tmp_path / "o.jsonl"),
        "--target", "3:1",
    )
    assert code == 1 and "upsampling" in stderr


# -- metrics ---------------------------------------------------------------------------


def test_metrics_mir_cli(tmp_path, capsys):
    path = make_dump_file(tmp_path)
    code, stdout, _ = run(capsys, "metrics", "mir", "--hsd", str(path))
    assert code == 0
    doc = json.loads(stdout)
    assert len(doc["per_layer_fid"]) == 2
    assert doc["mir"] == pytest.approx(sum(doc["per_layer_fid"]) / 2)
    assert doc["mir"] == pytest.approx(3.0, abs=1e-3)  # ||1||^2 over 3 dims


def test_metrics_pcd_cli(tmp_path, capsys):
    path = make_dump_file(tmp_path)
    code, stdout, _ = run(capsys, "metrics", "pcd", "--hsd", str(path), "--layer", "1")
    assert code == 0
    doc = json.loads(stdout)
    assert 0.0 <= doc["pcd_mean"] <= 2.0
    assert sum(doc["pcd_histogram"]["counts"]) == len(doc["pcd_per_sample"])
    assert len(doc["pcd_histogram"]["edges"]) == 5


def test_metrics_bad_magic_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.hsd"
    bad.write_bytes(b"NOTANHSD" + b"\x00" * 16)
    code, _, stderr = run(capsys, "metrics", "mir", "--hsd", str(bad))
    assert code == 1
    assert "not an HSD1 file" in stderr


def test_metrics_decomp_cli(tmp_path, capsys):
    dist = tmp_path / "dist.json"
    dist.write_text(json.dumps({"p_x": [0.5, 0.5], "p_tx": [0.25, 0.75], "answer_index": 0}))
    code, stdout, _ = run(capsys, "metrics", "decomp", "--dist", str(dist))
    assert code == 0
    doc = json.loads(stdout)
    assert doc["kl"] == pytest.approx(0.14384, abs=1e-5)
    assert doc["loss_lomo"] == pytest.approx(doc["sft_term"] + doc["align_term"])


# -- stats ---------------------------------------------------------------------------------


def test_stats_ok_and_formats(tmp_path, capsys):
    src = make_corpus(tmp_path)
    out = tmp_path / "out.jsonl"
    stats_path = tmp_path / "run.json"
    run(capsys, "curate", "--in", str(src), "--out", str(out), "--stats-out", str(stats_path))
    manifest_path = str(out) + ".manifest.json"

    code, text_out, _ = run(capsys, "stats", "--manifest", manifest_path, "--stats", str(stats_path))
    assert code == 0
    assert "count identity: OK" in text_out

    code, json_out, _ = run(
        capsys, "stats", "--manifest", manifest_path, "--stats", str(stats_path), "--format", "json"
    )
    assert code == 0
    doc = json.loads(json_out)
    assert doc["count_identity"] == "OK"
    assert doc["instances_per_sec"] is not None
    # same numbers in both encodings
    for key, value in doc["counts"].items():
        assert f"{key:>24}: {value}" in text_out


def test_stats_violated_identity_exit_1(tmp_path, capsys):
    manifest = CurationManifest(
        source_path="x",
        seed=0,
        rewrite_ratio=0.5,
        position_mode="middle",
        counts={"total": 10, "rewritten": 3, "text_only_kept": 3, "image_bearing_original": 3},
    )
    path = tmp_path / "m.json"
    manifest.save(path)
    code, stdout, _ = run(capsys, "stats", "--manifest", str(path))
    assert code == 1
    assert "VIOLATED" in stdout


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code == 2
