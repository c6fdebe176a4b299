import stat
import sys
import textwrap

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wicketlens.errors import InvalidInputError, InvalidParameterError, OcrEngineError
from wicketlens.ocr import (
    ALPHABET,
    DEFAULT_FONT,
    GLYPH_H,
    GLYPH_W,
    OcrEngineConfig,
    OcrResult,
    match_templates,
    recognize,
    render_text,
)
from wicketlens.raster import RasterImage

score_text = st.text(alphabet="0123456789-/", min_size=1, max_size=8)


def test_font_is_complete_and_distinct():
    glyphs = DEFAULT_FONT.glyphs
    assert set(glyphs) == set("0123456789-/")
    bitmaps = [bm.tobytes() for bm in glyphs.values()]
    assert len(set(bitmaps)) == len(bitmaps)
    for ch, bm in glyphs.items():
        assert bm.shape == (GLYPH_H, GLYPH_W)
        # every column inked, so a glyph's column span is its whole cell
        assert bm.any(axis=0).all(), ch


@pytest.mark.parametrize("ch", ALPHABET)
def test_every_glyph_round_trips_at_scale_3(ch):
    res = match_templates(render_text(ch, scale=3))
    assert res.text == ch
    assert res.mean_confidence == 1.0
    assert res.per_char == ((ch, 1.0),)


def test_one_flipped_bit():
    img = render_text("0", scale=1, margin=2).pixels.copy()
    # flip an interior bit of the 5x7 cell (row 3, col 2): background -> ink
    img[2 + 3, 2 + 2] = 0
    res = match_templates(RasterImage(img))
    assert res.text == "0"
    assert res.mean_confidence == pytest.approx(34 / 35)


def test_blank_and_uniform_images_read_empty():
    for value in (255, 0, 200):
        res = match_templates(RasterImage.filled(40, 20, value))
        assert res.text == ""
        assert res.per_char == ()


def test_noise_speck_is_dropped():
    img = render_text("45", scale=3, margin=10).pixels.copy()
    img[1, 1] = 0
    assert match_templates(RasterImage(img)).text == "45"


def test_spaces_between_words():
    assert match_templates(render_text("12 3", scale=2)).text == "12 3"


@given(score_text, st.sampled_from([2, 3, 4]))
@settings(max_examples=60, deadline=None)
def test_round_trip_property(text, scale):
    res = recognize(render_text(text, scale=scale))
    assert res.text == text
    assert res.mean_confidence == 1.0


@given(score_text, st.integers(0, 30), st.integers(0, 30), st.integers(0, 30), st.integers(0, 30))
@settings(max_examples=40, deadline=None)
def test_translation_invariance(text, top, bottom, left, right):
    px = render_text(text, scale=2, margin=1).pixels
    padded = np.pad(px, ((top, bottom), (left, right)), constant_values=255)
    assert match_templates(RasterImage(padded)).text == text


def test_deterministic():
    img = render_text("187-6", scale=3)
    assert match_templates(img) == match_templates(img)


def test_result_invariants():
    with pytest.raises(InvalidInputError):
        OcrResult("12", 1.0, (("1", 1.0),))
    OcrResult("1 2", 1.0, (("1", 1.0), ("2", 1.0)))


def test_recognize_rejects_colour():
    with pytest.raises(InvalidInputError):
        recognize(RasterImage.filled(4, 4, 0, channels=3))


def test_engine_config_validation():
    with pytest.raises(InvalidParameterError):
        OcrEngineConfig(engine="tesseract")
    with pytest.raises(InvalidParameterError):
        OcrEngineConfig(engine="external")


def _script(tmp_path, body, name="engine.py"):
    path = tmp_path / name
    path.write_text(f"#!{sys.executable}\n" + textwrap.dedent(body))
    path.chmod(path.stat().st_mode | stat.S_IEXEC)
    return path


def test_external_engine_echo(tmp_path):
    eng = _script(tmp_path, """
        import sys
        data = open(sys.argv[1], "rb").read()
        assert data.startswith(b"P5")
        print("45/2")
    """)
    res = recognize(render_text("1"), OcrEngineConfig("external", f"{eng} {{input}}"))
    assert res.text == "45/2"
    assert [c for c, _ in res.per_char] == list("45/2")


def test_external_engine_failure(tmp_path):
    eng = _script(tmp_path, """
        import sys
        sys.exit(4)
    """)
    with pytest.raises(OcrEngineError):
        recognize(render_text("1"), OcrEngineConfig("external", f"{eng} {{input}}"))


def test_external_engine_timeout(tmp_path):
    eng = _script(tmp_path, """
        import time
        time.sleep(5)
    """)
    cfg = OcrEngineConfig("external", f"{eng} {{input}}", timeout_s=0.3)
    with pytest.raises(OcrEngineError, match="timed out"):
        recognize(render_text("1"), cfg)


def test_external_engine_missing_binary():
    cfg = OcrEngineConfig("external", "/nonexistent/ocr {input}")
    with pytest.raises(OcrEngineError):
        recognize(render_text("1"), cfg)
