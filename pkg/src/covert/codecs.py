"""
Payload codecs: Bitstream plus the text (8 bits per character, MSB first) and one-bit bitmap
(row-major) encodings, and the file formats the harness reads and writes (UTF-8 text, plain PBM P1).
"""
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import FramingError, PayloadError
from src.rng import SplitMix64

CodecTag = Literal["raw", "text8", "bitmap1"]


@dataclass(frozen=True)
class Bitstream:
    """Ordered payload bits plus how they were framed. shape is (width, height) for bitmap1."""
    bits: Tuple[int, ...]
    codec: CodecTag = "raw"
    shape: Optional[Tuple[int, int]] = None

    def __post_init__(self) -> None:
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise PayloadError("bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)
        if self.codec == "bitmap1":
            if self.shape is None:
                raise FramingError("bitmap1 bitstream needs a (width, height) shape")
            width, height = self.shape
            if len(bits) != width * height:
                raise FramingError(
                    f"bitmap {width}x{height} needs {width * height} bits, got {len(bits)}"
                )

    def __len__(self) -> int:
        return len(self.bits)

    def as_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.int8)

    def to_string(self) -> str:
        return "".join(str(b) for b in self.bits)

    def reframe(self, bits: Sequence[int]) -> "Bitstream":
        """Same codec metadata around different bits (e.g. what the receiver decoded)."""
        return Bitstream(tuple(bits), self.codec, self.shape)


def hamming_distance(sent: Bitstream, received: Bitstream) -> int:
    if len(sent) != len(received):
        raise FramingError(f"cannot compare {len(sent)} sent bits with {len(received)} received")
    return int(np.sum(sent.as_array() != received.as_array()))


def bit_error_rate(sent: Bitstream, received: Bitstream) -> float:
    """Hamming distance over payload length; 0.0 for an empty payload."""
    if len(sent) == 0:
        return 0.0
    return hamming_distance(sent, received) / len(sent)


def parse_bits(text: str) -> Bitstream:
    """'1101 0' or '1,1,0' style strings; anything besides 0/1, whitespace and commas is rejected."""
    cleaned = re.sub(r"[\s,]", "", text)
    if cleaned and not set(cleaned) <= {"0", "1"}:
        raise PayloadError(f"not a bit string: {text[:40]!r}")
    return Bitstream(tuple(int(c) for c in cleaned))


def random_bits(length: int, seed: int) -> Bitstream:
    """Payload of fair coin flips from the top bit of each SplitMix64 word."""
    if length < 0:
        raise PayloadError(f"payload length must be >= 0, got {length}")
    words = SplitMix64(seed).words(length)
    return Bitstream(tuple(int(w >> np.uint64(63)) for w in words))


# ---------------------------------------------------------------------------
# Text8
# ---------------------------------------------------------------------------

def encode_text(text: str) -> Bitstream:
    bits = []
    for ch in text:
        code = ord(ch)
        if code > 0xFF:
            raise PayloadError(f"character {ch!r} is not 8-bit representable")
        bits.extend((code >> shift) & 1 for shift in range(7, -1, -1))
    return Bitstream(tuple(bits), "text8")


def decode_text(bits: Bitstream) -> str:
    if len(bits) % 8:
        raise FramingError(f"text needs a multiple of 8 bits, got {len(bits)}")
    arr = bits.as_array().reshape(-1, 8)
    weights = 1 << np.arange(7, -1, -1)
    return "".join(chr(int(code)) for code in arr @ weights)


def read_text_payload(path: Union[str, Path]) -> str:
    """UTF-8 file that must be 8-bit clean; one trailing newline (editor artefact) is dropped."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"Text payload not found at {p}")
    text = p.read_text(encoding="utf-8")
    if text.endswith("\n"):
        text = text[:-1]
    bad = [ch for ch in text if ord(ch) > 0xFF]
    if bad:
        raise PayloadError(f"{p} is not 8-bit clean (first offending character {bad[0]!r})")
    return text


def write_text_payload(path: Union[str, Path], text: str) -> None:
    """Writes text plus one terminating newline, which read_text_payload drops again."""
    Path(path).write_text(text + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Bitmap1 / PBM
# ---------------------------------------------------------------------------

def encode_bitmap(pixels: np.ndarray) -> Bitstream:
    """pixels is a [height x width] 0/1 matrix; bits are row-major."""
    arr = np.asarray(pixels)
    if arr.ndim != 2:
        raise PayloadError(f"bitmap must be 2-D, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise PayloadError("bitmap pixels must be 0 or 1")
    height, width = arr.shape
    return Bitstream(tuple(int(v) for v in arr.ravel()), "bitmap1", (width, height))


def decode_bitmap(bits: Bitstream, width: Optional[int] = None, height: Optional[int] = None) -> np.ndarray:
    """Inverse of encode_bitmap; width/height default to the bitstream's own shape."""
    if width is None or height is None:
        if bits.shape is None:
            raise FramingError("bitmap dimensions unknown")
        width, height = bits.shape
    if len(bits) != width * height:
        raise FramingError(f"bitmap {width}x{height} needs {width * height} bits, got {len(bits)}")
    return bits.as_array().astype(np.uint8).reshape(height, width)


def _pbm_tokens(text: str):
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        yield from line.split()


def read_pbm(path: Union[str, Path]) -> np.ndarray:
    """Plain PBM (P1). Pixel digits may or may not be whitespace separated."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"PBM payload not found at {p}")
    tokens = list(_pbm_tokens(p.read_text(encoding="ascii")))
    if len(tokens) < 3 or tokens[0] != "P1":
        raise PayloadError(f"{p} is not a plain PBM (P1) file")
    try:
        width, height = int(tokens[1]), int(tokens[2])
    except ValueError as e:
        raise PayloadError(f"{p}: bad PBM dimensions") from e
    digits = "".join(tokens[3:])
    if not set(digits) <= {"0", "1"}:
        raise PayloadError(f"{p}: PBM pixel data must be 0/1")
    if len(digits) != width * height:
        raise FramingError(f"{p}: header says {width}x{height}, found {len(digits)} pixels")
    return np.frombuffer(digits.encode("ascii"), dtype=np.uint8).reshape(height, width) - ord("0")


def write_pbm(path: Union[str, Path], pixels: np.ndarray, comment: Optional[str] = None) -> None:
    """Plain PBM with lines of at most 70 characters."""
    arr = np.asarray(pixels, dtype=np.uint8)
    height, width = arr.shape
    lines = ["P1"]
    if comment:
        lines.append(f"# {comment}")
    lines.append(f"{width} {height}")
    for row in arr:
        digits = "".join(str(int(v)) for v in row)
        lines.extend(digits[k:k + 70] for k in range(0, len(digits), 70))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")
