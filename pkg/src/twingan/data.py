"""Image ingestion, preprocessing, unpaired sampling, synthetic tasks.

Datasets live on disk as <root>/domain_u/*.png and <root>/domain_v/*.png
with no pairing between the two directories. In memory an image is a
uint8 [c, h, w] array inside an ImageRecord; training consumes float
arrays in [-1, 1] produced by preprocess().

The codec (PNG encode/decode) is delegated to Pillow; every numeric
transformation (range mapping, cropping, resizing) is implemented here so
the pipeline is bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from PIL import Image

from .engine import Tensor
from .errors import ConfigError, DataError, UsageError
from .rng import RngStream


@dataclass
class ImageRecord:
    """One source image: uint8 pixels [c, h, w] plus where it came from."""

    pixels: np.ndarray
    source: str

    def __post_init__(self):
        if self.pixels.dtype != np.uint8 or self.pixels.ndim != 3:
            raise DataError(f"record '{self.source}' must be uint8 [c, h, w]")


# ---------------------------------------------------------------------------
# codec


def read_image_u8(path: str | Path) -> np.ndarray:
    """Decode a PNG to uint8 [c, h, w]; grayscale 1 channel, color 3."""
    try:
        with Image.open(path) as im:
            if im.mode == "L":
                arr = np.asarray(im, dtype=np.uint8)[None]
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8).transpose(2, 0, 1)
    except FileNotFoundError as e:
        raise DataError(f"image not found: {path}") from e
    except OSError as e:
        raise DataError(f"cannot decode image {path}: {e}") from e
    return np.ascontiguousarray(arr)


def write_image_u8(path: str | Path, pixels: np.ndarray) -> None:
    """Encode uint8 [c, h, w] (c = 1 or 3) as PNG."""
    if pixels.dtype != np.uint8 or pixels.ndim != 3:
        raise UsageError(f"expected uint8 [c, h, w], got {pixels.dtype} {pixels.shape}")
    c = pixels.shape[0]
    if c == 1:
        im = Image.fromarray(pixels[0], mode="L")
    elif c == 3:
        im = Image.fromarray(pixels.transpose(1, 2, 0), mode="RGB")
    else:
        raise UsageError(f"can only write 1- or 3-channel images, got {c}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    im.save(path, format="PNG")


def load_domain(root: str | Path, domain: str) -> list[ImageRecord]:
    """Load every PNG of one domain directory, sorted by filename.

    domain is "u" or "v", matching subdirectories domain_u / domain_v.
    Missing directory, empty directory, or an undecodable file raise
    DataError.
    """
    if domain not in ("u", "v"):
        raise UsageError(f"domain must be 'u' or 'v', got {domain!r}")
    d = Path(root) / f"domain_{domain}"
    if not d.is_dir():
        raise DataError(f"missing dataset directory {d}")
    paths = sorted(p for p in d.iterdir() if p.suffix.lower() == ".png")
    if not paths:
        raise DataError(f"no .png files in {d}")
    return [ImageRecord(read_image_u8(p), str(p)) for p in paths]


# ---------------------------------------------------------------------------
# numeric pipeline


def to_unit_range(pixels) -> np.ndarray:
    """Affine map from 8-bit values to [-1, 1]: p / 127.5 - 1."""
    return np.asarray(pixels, dtype=np.float64) / 127.5 - 1.0


def from_unit_range(arr) -> np.ndarray:
    """Inverse of to_unit_range with rounding: clip(round((a+1)*127.5)).

    Exact on the round trip: from_unit_range(to_unit_range(p)) == p for
    every uint8 value.
    """
    a = np.asarray(arr, dtype=np.float64)
    return np.clip(np.rint((a + 1.0) * 127.5), 0, 255).astype(np.uint8)


def center_crop_square(pixels: np.ndarray) -> np.ndarray:
    """Crop [c, h, w] to a centered square of the shorter side."""
    _, h, w = pixels.shape
    side = min(h, w)
    top = (h - side) // 2
    left = (w - side) // 2
    return pixels[:, top : top + side, left : left + side]


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling of a float [c, h, w] array.

    Sample positions use half-pixel centers: src = (dst + 0.5) * scale - 0.5,
    clamped to the edges, so results are symmetric and reproducible.
    """
    c, h, w = img.shape
    if out_h < 1 or out_w < 1:
        raise UsageError("resize target must be positive")
    if (h, w) == (out_h, out_w):
        return img.copy()
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys), 0, h - 1).astype(np.int64)
    x0 = np.clip(np.floor(xs), 0, w - 1).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[None, :, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, None, :]
    top = img[:, y0][:, :, x0] * (1 - wx) + img[:, y0][:, :, x1] * wx
    bot = img[:, y1][:, :, x0] * (1 - wx) + img[:, y1][:, :, x1] * wx
    return top * (1 - wy) + bot * wy


def preprocess(pixels: np.ndarray, image_size: int, dtype=np.float32) -> np.ndarray:
    """uint8 [c, h, w] -> float [c, image_size, image_size] in [-1, 1].

    Center-crops to square, resizes only when the size differs (so an
    already-sized image round-trips through 8 bits exactly), then applies
    the affine range map.
    """
    if pixels.dtype != np.uint8 or pixels.ndim != 3:
        raise UsageError(f"preprocess expects uint8 [c, h, w], got {pixels.dtype} {pixels.shape}")
    sq = center_crop_square(pixels)
    unit = to_unit_range(sq)
    if sq.shape[1] != image_size:
        unit = np.clip(bilinear_resize(unit, image_size, image_size), -1.0, 1.0)
    return unit.astype(dtype)


def deprocess(arr) -> np.ndarray:
    """float [c, h, w] in [-1, 1] -> uint8 [c, h, w]."""
    a = arr.data if isinstance(arr, Tensor) else np.asarray(arr)
    return from_unit_range(a)


# ---------------------------------------------------------------------------
# unpaired sampling


class UnpairedDataset:
    """Two independently shuffled image domains with epoch sampling.

    Each domain is traversed in reshuffled epochs: a permutation of all
    indices is consumed in order, and a fresh permutation starts when it
    runs out (mid-batch if needed); exhaustion is never an error. The two
    domains use separate random streams, so the (u, v) index pairing is
    effectively uniform.
    """

    def __init__(
        self,
        records_u: list[ImageRecord],
        records_v: list[ImageRecord],
        image_size: int,
        seed: int,
        dtype=np.float32,
    ):
        if not records_u or not records_v:
            raise DataError("both domains need at least one image")
        self.records_u = records_u
        self.records_v = records_v
        self.image_size = image_size
        self.dtype = np.dtype(dtype)
        self._u = np.stack([preprocess(r.pixels, image_size, dtype) for r in records_u])
        self._v = np.stack([preprocess(r.pixels, image_size, dtype) for r in records_v])
        self.n_u = len(records_u)
        self.n_v = len(records_v)
        root = RngStream(seed)
        self._rng_u = root.substream("sample.u")
        self._rng_v = root.substream("sample.v")
        self._queue_u: list[int] = []
        self._queue_v: list[int] = []

    def channels(self) -> tuple[int, int]:
        return self._u.shape[1], self._v.shape[1]

    def image(self, domain: str, i: int) -> np.ndarray:
        """Preprocessed image i of a domain, shape [c, s, s]."""
        if domain == "u":
            return self._u[i]
        if domain == "v":
            return self._v[i]
        raise UsageError(f"domain must be 'u' or 'v', got {domain!r}")

    def _draw(self, queue: list[int], rng: RngStream, n: int, m: int) -> list[int]:
        out: list[int] = []
        while len(out) < m:
            if not queue:
                queue.extend(rng.permutation(n).tolist())
            out.append(queue.pop(0))
        return out

    def sample_batch(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Sample m unpaired (u, v) images; returns two [m, c, s, s] arrays."""
        if m < 1:
            raise UsageError(f"batch size must be positive, got {m}")
        iu = self._draw(self._queue_u, self._rng_u, self.n_u, m)
        iv = self._draw(self._queue_v, self._rng_v, self.n_v, m)
        return self._u[iu].copy(), self._v[iv].copy()


# ---------------------------------------------------------------------------
# synthetic tasks


def _blob_image(rng: RngStream, size: int, channels: int) -> np.ndarray:
    """One soft-blob test image as uint8 [c, size, size].

    Bright gaussian bumps on a near-zero base. Amplitudes are strictly
    positive so a task's transform T changes the image distribution visibly
    (the inverted domain has dark bumps, not a mirror of the source), while
    the base level stays symmetric around zero so the two domains cannot be
    told apart by mean brightness alone.
    """
    base = float(rng.uniform((), -0.15, 0.15))
    img = np.full((channels, size, size), base)
    yy, xx = np.mgrid[0:size, 0:size]
    n_blobs = int(rng.integers(2, 6))
    for _ in range(n_blobs):
        cy = float(rng.uniform((), 0, size))
        cx = float(rng.uniform((), 0, size))
        sigma = float(rng.uniform((), size * 0.08, size * 0.22))
        bump = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma * sigma))
        for c in range(channels):
            amp = float(rng.uniform((), 0.6, 1.7))
            img[c] += amp * bump
    return from_unit_range(np.clip(img, -1.0, 1.0))


def _swap_channels_u8(p: np.ndarray) -> np.ndarray:
    return p[[2, 1, 0]].copy()


def make_synthetic_pairtask(
    kind: str, n: int, size: int, seed: int, dtype=np.float32
) -> tuple[UnpairedDataset, Callable[[np.ndarray], np.ndarray]]:
    """Build an unpaired dataset whose cross-domain map is known exactly.

    kind "invert" (1-channel, T(x) = -x) or "channel_swap" (3-channel,
    T swaps channels 0 and 2; an involution). Domain U holds n blob
    images; domain V holds T applied to n different blob images, so the
    underlying blob sets are disjoint (record sources carry the blob index
    for verification). Returns (dataset, T) with T acting on float
    arrays in [-1, 1], channel-first, and satisfying T(T(x)) == x.
    """
    if kind == "invert":
        channels = 1
        t_float = lambda a: -np.asarray(a)
        t_bytes = lambda p: (255 - p).astype(np.uint8)
    elif kind == "channel_swap":
        channels = 3
        t_float = lambda a: np.asarray(a)[..., [2, 1, 0], :, :]
        t_bytes = _swap_channels_u8
    else:
        raise ConfigError("synthetic_task", f"unknown task {kind!r} (use invert or channel_swap)")
    if n < 1:
        raise UsageError(f"need at least one image per domain, got n={n}")
    rng = RngStream(seed).substream("synthetic")
    records_u = []
    records_v = []
    for i in range(2 * n):
        img = _blob_image(rng, size, channels)
        if i < n:
            records_u.append(ImageRecord(img, f"blob-{i:04d}"))
        else:
            records_v.append(ImageRecord(t_bytes(img), f"blob-{i:04d}:{kind}"))
    dataset = UnpairedDataset(records_u, records_v, size, seed, dtype)
    return dataset, t_float


# ---------------------------------------------------------------------------
# grids


def save_image_grid(path: str | Path, images: list, columns: int) -> None:
    """Tile images row-major into one PNG.

    images hold float [c, h, w] data in [-1, 1] (Tensors or arrays), all
    the same shape; the canvas is ceil(n / columns) rows by columns tiles
    with no margins, and unfilled cells stay black. Written pixel values
    are exactly deprocess() of each tile.
    """
    if not images:
        raise UsageError("empty image list")
    if columns < 1:
        raise UsageError(f"columns must be positive, got {columns}")
    tiles = [deprocess(im) for im in images]
    c, h, w = tiles[0].shape
    for t in tiles:
        if t.shape != (c, h, w):
            raise UsageError(f"grid tiles differ in shape: {t.shape} vs {(c, h, w)}")
    rows = math.ceil(len(tiles) / columns)
    canvas = np.zeros((c, rows * h, columns * w), dtype=np.uint8)
    for idx, t in enumerate(tiles):
        r, col = divmod(idx, columns)
        canvas[:, r * h : (r + 1) * h, col * w : (col + 1) * w] = t
    write_image_u8(path, canvas)
