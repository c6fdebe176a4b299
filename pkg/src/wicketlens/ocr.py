"""Scoreboard text recognition.

Two engines sit behind :func:`recognize`: a template matcher for the
built-in 5x7 block font (what the synthetic fixtures are rendered with), and
an adapter that shells out to an external OCR command for real footage.
"""

from __future__ import annotations

import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, InvalidParameterError, OcrEngineError
from .raster import RasterImage, encode_pnm

GLYPH_W = 5
GLYPH_H = 7

# Every glyph inks all five columns so a glyph's column extent equals its cell.
_GLYPH_ROWS = {
    "0": ["#####", "#...#", "#...#", "#...#", "#...#", "#...#", "#####"],
    "1": ["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", "#####"],
    "2": ["#####", "....#", "....#", "#####", "#....", "#....", "#####"],
    "3": ["#####", "....#", "....#", ".####", "....#", "....#", "#####"],
    "4": ["#...#", "#...#", "#...#", "#####", "....#", "....#", "....#"],
    "5": ["#####", "#....", "#....", "#####", "....#", "....#", "#####"],
    "6": ["#####", "#....", "#....", "#####", "#...#", "#...#", "#####"],
    "7": ["#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."],
    "8": ["#####", "#...#", "#...#", "#####", "#...#", "#...#", "#####"],
    "9": ["#####", "#...#", "#...#", "#####", "....#", "....#", "#####"],
    "-": [".....", ".....", ".....", "#####", ".....", ".....", "....."],
    "/": ["....#", "....#", "...#.", "..#..", ".#...", "#....", "#...."],
}

ALPHABET = tuple(_GLYPH_ROWS)


def _bitmap(rows):
    return np.array([[c == "#" for c in row] for row in rows], dtype=bool)


@dataclass(frozen=True)
class GlyphFont:
    glyphs: dict = field(default_factory=lambda: {c: _bitmap(r) for c, r in _GLYPH_ROWS.items()})
    spacing: int = 1
    scale: int = 1

    def __post_init__(self):
        if self.scale < 1:
            raise InvalidParameterError("font scale must be >= 1")
        for ch, bm in self.glyphs.items():
            if bm.shape != (GLYPH_H, GLYPH_W):
                raise InvalidParameterError(f"glyph {ch!r} is not 5x7")

    def with_scale(self, scale: int) -> GlyphFont:
        return GlyphFont(self.glyphs, self.spacing, scale)

    def text_size(self, text: str) -> tuple[int, int]:
        """Pixel (width, height) of ``text`` rendered without margins."""
        n = len(text)
        if n == 0:
            return 0, 0
        cols = n * GLYPH_W + (n - 1) * self.spacing
        return cols * self.scale, GLYPH_H * self.scale


DEFAULT_FONT = GlyphFont()


def text_mask(text: str, font: GlyphFont = DEFAULT_FONT) -> np.ndarray:
    """Boolean ink mask of ``text`` at the font's scale; spaces are blank cells."""
    w, h = font.text_size(text)
    mask = np.zeros((h, w), dtype=bool)
    s = font.scale
    x = 0
    for ch in text:
        if ch != " ":
            try:
                bm = font.glyphs[ch]
            except KeyError:
                raise InvalidInputError(f"character {ch!r} is not in the glyph font") from None
            mask[:, x : x + GLYPH_W * s] = np.kron(bm, np.ones((s, s), dtype=bool))
        x += (GLYPH_W + font.spacing) * s
    return mask


def render_text(
    text: str,
    scale: int = 3,
    margin: int = 4,
    fg: int = 0,
    bg: int = 255,
    font: GlyphFont = DEFAULT_FONT,
) -> RasterImage:
    """Single-channel rendering, dark-on-light by default (post-inversion polarity)."""
    mask = text_mask(text, font.with_scale(scale))
    h, w = mask.shape
    out = np.full((h + 2 * margin, max(w, 1) + 2 * margin), bg, dtype=np.uint8)
    out[margin : margin + h, margin : margin + w][mask] = fg
    return RasterImage(out)


@dataclass(frozen=True)
class OcrResult:
    text: str
    mean_confidence: float
    per_char: tuple = ()

    def __post_init__(self):
        if len(self.per_char) != len(self.text.replace(" ", "")):
            raise InvalidInputError("per_char must cover every non-space character")


@dataclass(frozen=True)
class OcrEngineConfig:
    engine: str = "builtin"
    command: str | None = None
    timeout_s: float = 10.0
    accept_threshold: float = 0.85
    binarize_threshold: int = 128

    def __post_init__(self):
        if self.engine not in ("builtin", "external"):
            raise InvalidParameterError(f"unknown OCR engine {self.engine!r}")
        if self.engine == "external" and not self.command:
            raise InvalidParameterError("external OCR engine needs a command template")


def _runs(flags: np.ndarray):
    """Yield (start, stop) of consecutive True runs."""
    padded = np.concatenate(([False], flags, [False]))
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return list(zip(edges[::2], edges[1::2]))



def _extent(mask: np.ndarray) -> tuple[int, int]:
    rows = np.flatnonzero(mask.any(axis=1))
    return int(rows[0]), int(rows[-1]) + 1


def _rows(mask: np.ndarray, top: int, bottom: int) -> np.ndarray:
    """Rows ``top:bottom`` of ``mask``, padded with background outside it."""
    h = mask.shape[0]
    out = mask[max(top, 0):min(bottom, h)]
    return np.pad(out, ((max(0, -top), max(0, bottom - h)), (0, 0)))

def _downsample(cell: np.ndarray) -> np.ndarray:
    """Majority-vote a boolean cell down to the 7x5 glyph grid."""
    h, w = cell.shape
    out = np.zeros((GLYPH_H, GLYPH_W), dtype=bool)
    for r in range(GLYPH_H):
        y0 = (r * h) // GLYPH_H
        y1 = max(y0 + 1, ((r + 1) * h) // GLYPH_H)
        for c in range(GLYPH_W):
            x0 = (c * w) // GLYPH_W
            x1 = max(x0 + 1, ((c + 1) * w) // GLYPH_W)
            out[r, c] = cell[y0:y1, x0:x1].mean() >= 0.5
    return out


def match_templates(
    img: RasterImage,
    font: GlyphFont = DEFAULT_FONT,
    accept_threshold: float = 0.85,
    binarize_threshold: int = 128,
) -> OcrResult:
    """Read dark-on-light glyphs of ``font`` from a single-channel image."""
    if img.channels != 1:
        raise InvalidInputError("match_templates expects a single-channel image")
    fg = (255 - img.pixels.astype(np.int16)) >= binarize_threshold
    if not fg.any():
        return OcrResult("", 0.0)

    # merge column runs separated by gaps narrower than half a glyph bit
    raw = _runs(fg.any(axis=0))
    tallest = max(_extent(fg[:, x0:x1])[1] - _extent(fg[:, x0:x1])[0] for x0, x1 in raw)
    min_gap = max(1, int(round(tallest / GLYPH_H / 2)))
    spans = []
    for x0, x1 in raw:
        if spans and x0 - spans[-1][1] < min_gap:
            spans[-1] = (spans[-1][0], x1)
        else:
            spans.append((x0, x1))
    cells = [(x0, x1) + _extent(fg[:, x0:x1]) for x0, x1 in spans]

    # Every glyph inks all its columns, so a full-height cell is about 7/5 as
    # tall as it is wide.  The tallest such cell fixes the text band.
    full = [c for c in cells if abs((c[3] - c[2]) - 1.4 * (c[1] - c[0])) <= max(2.0, 0.35 * (c[1] - c[0]))]
    band = None
    if full:
        ref = max(full, key=lambda c: c[3] - c[2])
        band = (ref[2], ref[3])
        scale = (band[1] - band[0]) / GLYPH_H
    else:
        scale = max(c[1] - c[0] for c in cells) / GLYPH_W
    scale = max(scale, 1.0)
    names = list(font.glyphs)
    stack = np.stack([font.glyphs[n] for n in names])
    text = []
    per_char = []
    prev_end = None
    for x0, x1, top, bottom in cells:
        if (x1 - x0) < 0.5 * GLYPH_W * scale:
            continue  # too narrow to be a glyph at this scale
        if band is not None:
            top, bottom = band
        else:
            # no full-height neighbour: centre a glyph box on the ink
            mid = (top + bottom) / 2.0
            top = int(np.floor(mid - GLYPH_H * scale / 2.0 + 0.5))
            bottom = top + max(1, int(np.floor(GLYPH_H * scale + 0.5)))
        bits = _downsample(_rows(fg[:, x0:x1], top, bottom))
        scores = (stack == bits).sum(axis=(1, 2)) / float(GLYPH_W * GLYPH_H)
        best = int(np.argmax(scores))
        conf = float(scores[best])
        if conf < accept_threshold:
            continue
        if prev_end is not None and (x0 - prev_end) / scale >= 3 * font.spacing:
            text.append(" ")
        text.append(names[best])
        per_char.append((names[best], conf))
        prev_end = x1
    if not per_char:
        return OcrResult("", 0.0)
    mean = sum(c for _, c in per_char) / len(per_char)
    return OcrResult("".join(text), mean, tuple(per_char))


def run_external(img: RasterImage, command: str, timeout_s: float = 10.0) -> OcrResult:
    """Run an external OCR command on ``img`` written as a temporary PGM.

    ``{input}`` in the command template is replaced by the PGM path.  The
    engine prints the recognised text on stdout and exits 0; it reports no
    confidences, so every character is given 1.0.
    """
    if img.channels != 1:
        raise InvalidInputError("external OCR expects a single-channel image")
    fd, path = tempfile.mkstemp(suffix=".pgm", prefix="wicketlens-ocr-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(encode_pnm(img))
        argv = [tok.replace("{input}", path) for tok in shlex.split(command)]
        try:
            proc = subprocess.run(argv, capture_output=True, timeout=timeout_s, check=False)
        except subprocess.TimeoutExpired:
            raise OcrEngineError(f"OCR command timed out after {timeout_s} s") from None
        except OSError as exc:
            raise OcrEngineError(f"cannot start OCR command: {exc}") from None
        if proc.returncode != 0:
            err = proc.stderr.decode("utf-8", "replace").strip()
            raise OcrEngineError(f"OCR command exited with {proc.returncode}: {err}")
    finally:
        try:
            os.unlink(path)
        except FileNotFoundError:
            pass
    text = " ".join(proc.stdout.decode("utf-8", "replace").split())
    chars = tuple((c, 1.0) for c in text if c != " ")
    return OcrResult(text, 1.0 if chars else 0.0, chars)


def recognize(img: RasterImage, engine: OcrEngineConfig | None = None) -> OcrResult:
    engine = engine or OcrEngineConfig()
    if img.channels != 1:
        raise InvalidInputError("recognize expects a single-channel image")
    if engine.engine == "external":
        return run_external(img, engine.command, engine.timeout_s)
    return match_templates(
        img,
        DEFAULT_FONT,
        accept_threshold=engine.accept_threshold,
        binarize_threshold=engine.binarize_threshold,
    )
