from helpers import text_instance
from lomo.corpus import ContentPart, Instance, load_instances, write_instances
from lomo.render import RenderConfig, RenderedCarrier
from lomo.rendered_eval import (
    PROTOCOL_MARKER,
    render_question,
    transform_benchmark,
    transform_eval_instance,
)


def bench_instance(i, text="What color is the sky?", with_image=True):
    parts = []
    if with_image:
        parts.append(ContentPart("image", f"originals/{i}.png"))
    parts.append(ContentPart("text", text))
    return Instance(id=f"bench-{i:04d}", parts=tuple(parts), answer="blue")


def test_render_question_single_line():
    cfg = RenderConfig()
    carrier = render_question("Short question?", cfg)
    assert carrier.protocol == PROTOCOL_MARKER
    assert carrier.distortion is None
    # trimmed single line stays within one line height plus padding
    assert carrier.height <= cfg.line_height + 2 * cfg.trim_padding


def test_render_question_deterministic():
    cfg = RenderConfig()
    a = render_question("Same in, same out.", cfg)
    b = render_question("Same in, same out.", cfg)
    assert a.png_bytes() == b.png_bytes()


def test_render_question_long_text_capped():
    cfg = RenderConfig()
    question = "word " * 400 + "end?"
    carrier = render_question(question, cfg)
    assert carrier.width * carrier.height <= cfg.pixel_cap
    assert carrier.height > 3 * cfg.line_height


def test_eval_instance_image_text_ordering(tmp_path):
    inst = bench_instance(1)
    out, action, paths = transform_eval_instance(
        inst, RenderConfig(), image_dir=tmp_path, corpus_root=tmp_path
    )
    assert action == "rewritten"
    assert [p.kind for p in out.parts] == ["image", "image"]
    # rendered question first, original image second and untouched
    assert out.parts[1].value == "originals/1.png"
    carrier = RenderedCarrier.load_png(tmp_path / out.parts[0].value)
    assert carrier.source_span == "What color is the sky?"
    assert carrier.protocol == PROTOCOL_MARKER
    assert out.answer == inst.answer


def test_eval_instance_text_only_becomes_single_image():
    inst = text_instance(0, "Only text here?")
    out, action, _ = transform_eval_instance(inst, RenderConfig())
    assert action == "rewritten"
    assert [p.kind for p in out.parts] == ["image"]


def test_eval_instance_multi_text_parts_joined(tmp_path):
    inst = Instance(
        id="multi",
        parts=(
            ContentPart("text", "Part one."),
            ContentPart("image", "originals/m.png"),
            ContentPart("text", "Part two?"),
        ),
        answer="a",
    )
    out, _, _ = transform_eval_instance(inst, RenderConfig(), image_dir=tmp_path, corpus_root=tmp_path)
    carrier = RenderedCarrier.load_png(tmp_path / out.parts[0].value)
    assert carrier.source_span == "Part one.\nPart two?"


def test_eval_instance_no_text_passthrough():
    inst = Instance(id="imgonly", parts=(ContentPart("image", "x.png"),), answer="a")
    out, action, paths = transform_eval_instance(inst, RenderConfig())
    assert action == "passthrough"
    assert out == inst and paths == []


def test_transform_benchmark_counts_and_idempotence(tmp_path):
    instances = [bench_instance(i, text=f"Question number {i}, please answer?") for i in range(20)]
    instances.append(Instance(id="noq", parts=(ContentPart("image", "o.png"),), answer="z"))
    src = tmp_path / "bench.jsonl"
    write_instances(src, instances)

    out1 = tmp_path / "r1.jsonl"
    manifest = transform_benchmark(src, out1)
    assert manifest.counts["total"] == 21
    assert manifest.counts["rewritten"] == 20
    assert manifest.counts["image_bearing_original"] == 1
    assert manifest.check_count_identity()
    assert manifest.position_mode == PROTOCOL_MARKER

    first = list(load_instances(out1))
    assert len(first) == 21
    for inst, orig in zip(first[:-1], instances[:-1]):
        assert inst.answer == orig.answer
        assert inst.parts[-1] == orig.parts[0]  # original image untouched

    # second pass over already-rendered data is a no-op
    out2 = tmp_path / "r2.jsonl"
    manifest2 = transform_benchmark(out1, out2)
    assert manifest2.counts["rewritten"] == 0
    assert list(load_instances(out2)) == first


def test_transform_benchmark_respects_font_flags(tmp_path):
    src = tmp_path / "b.jsonl"
    write_instances(src, [text_instance(0, "measure me please, with some words?")])
    big = RenderConfig(font_size=40, line_height=44)
    small = RenderConfig(font_size=12, line_height=14)
    transform_benchmark(src, tmp_path / "big.jsonl", big)
    transform_benchmark(src, tmp_path / "small.jsonl", small)
    big_img = next((tmp_path / "big_images").glob("*.png"))
    small_img = next((tmp_path / "small_images").glob("*.png"))
    assert RenderedCarrier.load_png(big_img).width > RenderedCarrier.load_png(small_img).width
