"""Fixed 64-word text vocabulary shared by captions and edit instructions.

Attribute words (colors, shapes, sizes, grid rows/cols) occupy disjoint
id ranges so a caption's word multiset is unambiguous about what it
asserts. PAD is id 0 and only ever appears as a left prefix.
"""

from __future__ import annotations

from .errors import InputError

PAD = 0
PAD_WORD = "<pad>"

OBJECT_COLORS = ["red", "green", "blue", "yellow", "cyan", "magenta", "orange", "purple"]
BACKGROUND_COLORS = ["white", "black", "gray"]
COLORS = OBJECT_COLORS + BACKGROUND_COLORS
SHAPES = ["square", "circle", "bar"]
SIZES = ["s1", "s2", "s3", "s4", "s5"]
ROWS = [f"r{i}" for i in range(8)]
COLS = [f"c{i}" for i in range(8)]
OPS = ["recolor", "add", "remove", "replace"]
FUNCTION_WORDS = ["the", "a", "to", "with", "on"]

WORDS = [PAD_WORD] + COLORS + SHAPES + SIZES + ROWS + COLS + OPS + FUNCTION_WORDS
WORDS += [f"unused{i}" for i in range(64 - len(WORDS))]
assert len(WORDS) == 64

WORD_TO_ID = {w: i for i, w in enumerate(WORDS)}

# RGB for each color word on the default palette lattice ({0,85,170,255}).
COLOR_RGB = {
    "red": (255, 0, 0), "green": (0, 255, 0), "blue": (0, 0, 255),
    "yellow": (255, 255, 0), "cyan": (0, 255, 255), "magenta": (255, 0, 255),
    "orange": (255, 85, 0), "purple": (170, 0, 255),
    "white": (255, 255, 255), "black": (0, 0, 0), "gray": (170, 170, 170),
}

_LEVEL = {0: 0, 85: 1, 170: 2, 255: 3}
COLOR_TOKEN_ID = {name: 16 * _LEVEL[r] + 4 * _LEVEL[g] + _LEVEL[b]
                  for name, (r, g, b) in COLOR_RGB.items()}
TOKEN_ID_COLOR = {v: k for k, v in COLOR_TOKEN_ID.items()}


def encode_words(text: str) -> list[int]:
    """Tokenize a whitespace-separated sentence; unknown words are errors."""
    words = text.split()
    if not words:
        raise InputError("empty text")
    ids = []
    for w in words:
        if w not in WORD_TO_ID or w == PAD_WORD:
            raise InputError(f"unknown vocabulary word: {w!r}")
        ids.append(WORD_TO_ID[w])
    return ids


def decode_words(ids) -> str:
    return " ".join(WORDS[int(i)] for i in ids if int(i) != PAD)
