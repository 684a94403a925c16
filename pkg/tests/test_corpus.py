import json
import random

import pytest

from helpers import mixed_corpus, text_instance
from lomo.corpus import (
    ContentPart,
    CorpusParseError,
    CurationManifest,
    DuplicateIdError,
    Instance,
    JsonlWriter,
    emit_interleaved,
    load_instances,
    write_instances,
)


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def test_three_line_file_in_order(tmp_path):
    path = tmp_path / "c.jsonl"
    instances = [text_instance(i, f"Question {i}?") for i in range(3)]
    write_instances(path, instances)
    loaded = list(load_instances(path))
    assert loaded == instances


def test_empty_file_empty_stream(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    assert list(load_instances(path)) == []


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        list(load_instances(tmp_path / "nope.jsonl"))


def test_malformed_line_strict_names_line_and_offset(tmp_path):
    path = tmp_path / "c.jsonl"
    good = json.dumps(text_instance(0, "Fine?").to_record())
    write_lines(path, [good, "{broken", good.replace("txt-00000", "txt-00002")])
    with pytest.raises(CorpusParseError) as err:
        list(load_instances(path))
    assert err.value.line_number == 2
    assert err.value.byte_offset == len(good.encode()) + 1  # line 1 plus its newline


def test_malformed_line_lenient_keeps_rest(tmp_path):
    path = tmp_path / "c.jsonl"
    a = text_instance(1, "One?")
    b = text_instance(3, "Three?")
    write_lines(path, [json.dumps(a.to_record()), "not json", json.dumps(b.to_record())])
    reported = []
    loaded = list(load_instances(path, strict=False, on_error=reported.append))
    assert loaded == [a, b]
    assert len(reported) == 1 and reported[0].line_number == 2


def test_duplicate_id(tmp_path):
    path = tmp_path / "c.jsonl"
    a = text_instance(1, "One?")
    write_lines(path, [json.dumps(a.to_record()), json.dumps(a.to_record())])
    with pytest.raises(DuplicateIdError):
        list(load_instances(path))
    loaded = list(load_instances(path, strict=False, on_error=lambda e: None))
    assert loaded == [a]


def test_validation_rules():
    with pytest.raises(ValueError):
        ContentPart("text", "")
    with pytest.raises(ValueError):
        ContentPart("audio", "x")
    with pytest.raises(ValueError):
        Instance(id="", parts=(ContentPart("text", "x"),), answer="a")
    with pytest.raises(ValueError):
        Instance(id="i", parts=(), answer="a")


def test_instance_record_round_trip():
    inst = Instance(
        id="i1",
        parts=(ContentPart("text", "What?"), ContentPart("image", "img/i1_0.png")),
        answer="42",
    )
    assert Instance.from_record(inst.to_record()) == inst


def test_emit_round_trip_1000(tmp_path):
    instances = mixed_corpus(700, 300, seed=13)
    path = tmp_path / "out.jsonl"
    with JsonlWriter(path) as writer:
        for inst in instances:
            emit_interleaved(inst, root=tmp_path, writer=writer)
    reloaded = list(load_instances(path))
    assert reloaded == instances


def test_emit_relativizes_absolute_paths(tmp_path):
    inst = Instance(
        id="a",
        parts=(
            ContentPart("text", "Look:"),
            ContentPart("image", str(tmp_path / "imgs" / "a_0.png")),
            ContentPart("text", "done."),
        ),
        answer="x",
    )
    path = tmp_path / "out.jsonl"
    with JsonlWriter(path) as writer:
        record = emit_interleaved(inst, root=tmp_path, writer=writer)
    assert record == {"id": "a", "action": "passthrough", "image_paths": ["imgs/a_0.png"]}
    (reloaded,) = load_instances(path)
    assert len(reloaded.parts) == 3
    assert reloaded.parts[1].value == "imgs/a_0.png"


def test_emit_passthrough_identity(tmp_path):
    inst = text_instance(0, "Plain text only.")
    path = tmp_path / "out.jsonl"
    with JsonlWriter(path) as writer:
        emit_interleaved(inst, root=tmp_path, writer=writer)
    (reloaded,) = load_instances(path)
    assert reloaded == inst


def test_load_is_streaming(tmp_path):
    path = tmp_path / "c.jsonl"
    write_instances(path, [text_instance(i, f"Q{i}?") for i in range(50)])
    stream = load_instances(path)
    assert next(stream).id == "txt-00000"  # lazily yields without materializing
    stream.close()


def test_manifest_count_identity_and_io(tmp_path):
    manifest = CurationManifest(
        source_path="in.jsonl",
        seed=42,
        rewrite_ratio=0.5,
        position_mode="middle",
        counts={"total": 4, "rewritten": 1, "text_only_kept": 1, "image_bearing_original": 2},
        per_instance_records=[{"id": "a", "action": "rewritten", "image_paths": []}],
        extra={"distortion_enabled": True},
    )
    assert manifest.check_count_identity()
    path = tmp_path / "m.json"
    manifest.save(path)
    loaded = CurationManifest.load(path)
    assert loaded.counts == manifest.counts
    assert loaded.extra["distortion_enabled"] is True
    loaded.counts["rewritten"] = 3
    assert not loaded.check_count_identity()


def test_data_uri_part_is_inline():
    part = ContentPart("image", "data:image/png;base64,AAAA")
    assert part.is_inline_image
    assert not ContentPart("image", "img/x.png").is_inline_image


def test_writer_counts_and_shuffled_ids(tmp_path):
    rng = random.Random(3)
    instances = [text_instance(i, f"Q {i}?") for i in range(20)]
    rng.shuffle(instances)
    path = tmp_path / "o.jsonl"
    n = write_instances(path, instances)
    assert n == 20
    assert [i.id for i in load_instances(path)] == [i.id for i in instances]
