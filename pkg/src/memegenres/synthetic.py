"""Synthetic corpora with known genre structure.

Used by the test suite and the demos: genre corpora (one shared object patch
per genre pasted onto varied backgrounds, rotated/scaled, with caption-style
text), transformed near-duplicates, unrelated noise images, and SURF-like
descriptor samples for index benchmarks.

Real genre corpora share weak visual glue across genres (platform chrome,
fonts, recurring captions); the generator mirrors that with a fixed word pool
and occasional secondary objects so affinity graphs come out connected rather
than 20 disjoint islands.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont
from scipy.ndimage import gaussian_filter

OBJECT_SIZE = 180
WORD_POOL = [
    "WHEN", "MONDAY", "NOBODY", "LITERALLY", "2026", "SAME", "BRUH", "WHY",
    "ME", "EVERYONE", "TODAY", "NEVER", "ALWAYS", "WAIT", "WHAT", "OK",
    "THIS", "MOOD", "REAL", "FACTS", "LOL", "NOPE", "YES", "AGAIN",
]


@dataclass
class GenreCorpus:
    root: Path
    manifest: Path
    labels: dict[int, int]          # manifest row order -> genre id
    n_genres: int


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def make_object_patch(rng: np.random.Generator, size: int = OBJECT_SIZE) -> Image.Image:
    """A procedural high-contrast 'logo' with enough corners and blobs for SURF.

    Matchability under heavy instance multiplicity hinges on keypoint *count*
    and on neighborhoods being distinctive per patch, so the design leans on
    a double border frame (well-spread corners for geometric verification),
    a dense pile of outlined shapes, and a random dot constellation drawn on
    top of the shapes (each dot inherits patch-specific context).  Repeating
    canonical textures like checkerboards are deliberately avoided: their
    descriptors collide across unrelated patches.
    """
    base = int(rng.integers(60, 200))
    im = Image.new("L", (size, size), base)
    d = ImageDraw.Draw(im)
    v0 = 255 if base < 128 else 0
    # dashed outer frame: every dash end is a corner whose descriptor window
    # bleeds into the (per-image) background, decorrelating instances
    step, dash = 14, 8
    for t in range(2, size - 2, step):
        e = min(t + dash, size - 3)
        d.line([t, 2, e, 2], fill=v0, width=4)
        d.line([t, size - 3, e, size - 3], fill=v0, width=4)
        d.line([2, t, 2, e], fill=v0, width=4)
        d.line([size - 3, t, size - 3, e], fill=v0, width=4)
    inset = int(rng.integers(9, 15))
    d.rectangle([inset, inset, size - 1 - inset, size - 1 - inset], outline=255 - v0, width=2)
    for _ in range(int(rng.integers(14, 22))):
        kind = rng.integers(0, 4)
        v = int(rng.integers(0, 256))
        x0, y0 = rng.integers(6, size - 30, 2)
        w, h = rng.integers(12, 56, 2)
        if kind == 0:
            d.ellipse([x0, y0, x0 + w, y0 + h], fill=v, outline=255 - v, width=2)
        elif kind == 1:
            d.rectangle([x0, y0, x0 + w, y0 + h], fill=v, outline=255 - v, width=2)
        elif kind == 2:
            pts = [tuple(p) for p in rng.integers(4, size - 4, size=(int(rng.integers(3, 6)), 2))]
            d.polygon(pts, fill=v)
        else:
            x1, y1 = rng.integers(0, size, 2)
            d.line([x0, y0, int(x1), int(y1)], fill=v, width=int(rng.integers(2, 5)))
    # ring-dots on a jittered grid: non-overlapping (merged dots lose their
    # blob response) and outlined so they stay visible over any shape below
    cell = max(12, (size - 16) // 9)
    for gy in range(8, size - cell, cell):
        for gx in range(8, size - cell, cell):
            if rng.random() < 0.18:
                continue
            x = gx + cell // 2 + int(rng.integers(-3, 4))
            y = gy + cell // 2 + int(rng.integers(-3, 4))
            rr = int(rng.integers(4, 7))
            vv = 255 if rng.random() < 0.5 else 0
            d.ellipse([x - rr, y - rr, x + rr, y + rr], fill=vv, outline=255 - vv, width=2)
    arr = gaussian_filter(np.asarray(im, float), 0.6)
    return Image.fromarray(arr.clip(0, 255).astype(np.uint8))


def make_background(rng: np.random.Generator, size: int) -> np.ndarray:
    """Varied but feature-sparse canvases.

    Textured kinds get a deliberately low contrast span: normalizing blurred
    noise back to full range would hand the detector thousands of background
    blobs that drown out the pasted object.
    """
    kind = int(rng.integers(0, 4))
    if kind == 0:  # smooth blobs
        bg = gaussian_filter(rng.normal(size=(size, size)), rng.uniform(6, 14))
        span_lo, span_hi = 30, 70
    elif kind == 1:  # gradient + mild noise
        gx, gy = rng.uniform(-1, 1, 2)
        yy, xx = np.mgrid[0:size, 0:size]
        bg = gx * xx + gy * yy + gaussian_filter(rng.normal(size=(size, size)), 3.0) * 0.3
        span_lo, span_hi = 60, 180
    elif kind == 2:  # stripes (coarse + soft: fine ones alias into 2-d moire)
        ang = rng.uniform(0, np.pi)
        period = rng.uniform(36, 64)
        yy, xx = np.mgrid[0:size, 0:size]
        bg = np.sin((np.cos(ang) * xx + np.sin(ang) * yy) / period * 2 * np.pi)
        bg = gaussian_filter(bg, 3.5)
        span_lo, span_hi = 25, 55
    else:  # coarse blotches
        bg = gaussian_filter(rng.normal(size=(size, size)), rng.uniform(3.5, 5.5))
        span_lo, span_hi = 25, 55
    lo, hi = bg.min(), bg.max()
    span = hi - lo if hi > lo else 1.0
    width = float(rng.uniform(span_lo, span_hi))
    low = float(rng.uniform(20, 235 - width))
    return (low + (bg - lo) / span * width).astype(np.uint8)


PATCH_NOISE = 9.0  # per-instance pixel noise on the pasted object


def _paste_patch(canvas: Image.Image, patch: Image.Image, rng: np.random.Generator,
                 scale_lo: float, scale_hi: float, max_rot_deg: float,
                 avoid: tuple[int, int, int, int] | None = None,
                 ) -> tuple[int, int, int, int] | None:
    """Paste a scaled/rotated copy; returns its bounding box, or None if skipped.

    With ``avoid`` set, placement is rejection-sampled away from that box: an
    instance pasted over another one occludes it for every query at once, which
    is a far worse failure mode than the slight position bias this introduces.
    """
    # area-uniform scale draw: density grows with s, thinning the small-scale
    # tail where instances carry too few keypoints to match anything
    scale = float(np.sqrt(rng.uniform(scale_lo**2, scale_hi**2)))
    rot = float(rng.uniform(-max_rot_deg, max_rot_deg))
    w = max(12, round(patch.width * scale))
    h = max(12, round(patch.height * scale))
    p = patch.resize((w, h), Image.Resampling.BILINEAR)
    mask = Image.new("L", (w, h), 255)
    p = p.rotate(rot, resample=Image.Resampling.BILINEAR, expand=True, fillcolor=0)
    mask = mask.rotate(rot, resample=Image.Resampling.NEAREST, expand=True, fillcolor=0)
    # instance-specific noise decorrelates otherwise near-identical copies, so
    # nearest-descriptor ties across copies break roughly uniformly instead of
    # funneling matches onto a handful of them
    arr = np.asarray(p, dtype=np.float64)
    on = np.asarray(mask) > 0
    arr[on] += rng.normal(0.0, PATCH_NOISE, size=int(on.sum()))
    p = Image.fromarray(np.clip(arr, 0, 255).astype(np.uint8))
    max_x = canvas.width - p.width
    max_y = canvas.height - p.height
    if max_x < 1 or max_y < 1:
        return None
    x = y = 0
    for _ in range(12):
        x = int(rng.integers(0, max_x))
        y = int(rng.integers(0, max_y))
        if avoid is None:
            break
        ov_w = min(x + p.width, avoid[2]) - max(x, avoid[0])
        ov_h = min(y + p.height, avoid[3]) - max(y, avoid[1])
        overlap = max(0, ov_w) * max(0, ov_h)
        if overlap <= 0.25 * (avoid[2] - avoid[0]) * (avoid[3] - avoid[1]):
            break
    canvas.paste(p, (x, y), mask)
    return (x, y, x + p.width, y + p.height)


def add_caption(im: Image.Image, rng: np.random.Generator, n_words: int | None = None) -> None:
    """Caption words in the classic top/bottom meme bands."""
    d = ImageDraw.Draw(im)
    if n_words is None:
        n_words = int(rng.integers(1, 3))
    for _ in range(n_words):
        word = WORD_POOL[int(rng.integers(0, len(WORD_POOL)))]
        px_size = int(rng.integers(18, 36))
        font = ImageFont.load_default(px_size)
        x = int(rng.integers(0, max(1, im.width - px_size * len(word) // 2)))
        band = int(rng.integers(0, 2))
        top_span = max(1, im.height // 8 - px_size)
        if band == 0:
            y = int(rng.integers(0, top_span))
        else:
            lo = im.height - im.height // 8
            hi = max(lo + 1, im.height - px_size - 4)
            y = int(rng.integers(lo, hi))
        y = min(y, max(0, im.height - px_size - 1))
        fill = 255 if rng.random() < 0.5 else 0
        stroke = 0 if fill == 255 else 255
        d.text((x, y), word, fill=fill, font=font, stroke_width=2, stroke_fill=stroke)


def make_genre_corpus(
    out_dir: str | Path,
    n_images: int = 500,
    n_genres: int = 20,
    seed: int = 0,
    image_size: int = 504,
    secondary_object_prob: float = 0.35,
) -> GenreCorpus:
    """Write a labeled genre corpus: PNGs + manifest.csv + labels.csv."""
    out = Path(out_dir)
    (out / "img").mkdir(parents=True, exist_ok=True)
    rng = _rng([seed, 1])
    patches = [make_object_patch(_rng([seed, 2, g])) for g in range(n_genres)]
    labels: dict[int, int] = {}
    rows = []
    for i in range(n_images):
        g = i % n_genres  # balanced genres
        r = _rng([seed, 3, i])
        canvas = Image.fromarray(make_background(r, image_size))
        box = _paste_patch(canvas, patches[g], r, 0.5, 2.0, 30.0)
        # remix element: a smaller patch borrowed from another genre, like real
        # memes; kept off the main object so it decorates rather than occludes
        if r.random() < secondary_object_prob:
            other = int(r.integers(0, n_genres))
            _paste_patch(canvas, patches[other], r, 0.4, 0.65, 30.0, avoid=box)
        add_caption(canvas, r)
        name = f"img/{i:05d}.png"
        canvas.save(out / name)
        tag = "poolA" if r.random() < 0.6 else "poolB"
        rows.append((name, tag))
        labels[i] = g
    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "source_tag"])
        w.writerows(rows)
    with open(out / "labels.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "genre"])
        for i in range(n_images):
            w.writerow([i, labels[i]])
    return GenreCorpus(root=out, manifest=manifest, labels=labels, n_genres=n_genres)


def load_labels(path: str | Path) -> dict[int, int]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        return {int(r[0]): int(r[1]) for r in rd}


def make_seed_image(rng: np.random.Generator, size: int = 320) -> Image.Image:
    """A distinct feature-rich image (for near-duplicate retrieval tests)."""
    canvas = Image.fromarray(make_background(rng, size))
    for _ in range(int(rng.integers(2, 4))):
        _paste_patch(canvas, make_object_patch(rng), rng, 0.6, 1.4, 45.0)
    return canvas


def transform_copy(
    im: Image.Image,
    rng: np.random.Generator,
    max_rot_deg: float = 30.0,
    scale_lo: float = 0.5,
    scale_hi: float = 2.0,
    crop_frac: float = 0.2,
    caption: bool = True,
) -> Image.Image:
    """Rotation <= 30 deg, scale 0.5-2x, 20% crop, caption overlay."""
    out = im.rotate(
        float(rng.uniform(-max_rot_deg, max_rot_deg)),
        resample=Image.Resampling.BILINEAR,
        fillcolor=int(np.asarray(im).mean()),
    )
    keep = 1.0 - crop_frac
    cw, ch = round(out.width * keep), round(out.height * keep)
    x0 = int(rng.integers(0, out.width - cw + 1))
    y0 = int(rng.integers(0, out.height - ch + 1))
    out = out.crop((x0, y0, x0 + cw, y0 + ch))
    s = float(rng.uniform(scale_lo, scale_hi))
    out = out.resize((max(16, round(cw * s)), max(16, round(ch * s))), Image.Resampling.BILINEAR)
    if caption:
        add_caption(out, rng, n_words=1)
    return out


def make_noise_corpus(out_dir: str | Path, n_images: int = 24, seed: int = 0, size: int = 256) -> Path:
    """Mutually unrelated white-noise images; no shared structure at all."""
    out = Path(out_dir)
    (out / "img").mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(n_images):
        r = _rng([seed, 7, i])
        arr = r.integers(0, 256, size=(size, size)).astype(np.uint8)
        name = f"img/noise_{i:04d}.png"
        Image.fromarray(arr).save(out / name)
        rows.append((name, "noise"))
    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "source_tag"])
        w.writerows(rows)
    return manifest


def make_descriptor_sample(n: int = 10000, n_clusters: int = 150, seed: int = 0) -> np.ndarray:
    """SURF-like unit vectors: clustered, with |d| channels >= signed channels."""
    rng = _rng([seed, 11])
    centers = rng.normal(size=(n_clusters, 32))
    which = rng.integers(0, n_clusters, size=n)
    signed = centers[which] + rng.normal(scale=0.25, size=(n, 32))
    dx, dy = signed[:, :16], signed[:, 16:]
    adx = np.abs(dx) + rng.uniform(0, 0.1, size=dx.shape)
    ady = np.abs(dy) + rng.uniform(0, 0.1, size=dy.shape)
    desc = np.stack([dx, adx, dy, ady], axis=2).reshape(n, 64)
    desc /= np.linalg.norm(desc, axis=1, keepdims=True)
    return desc.astype(np.float32)


def _main() -> None:
    import argparse

    ap = argparse.ArgumentParser(description="generate a labeled synthetic genre corpus")
    ap.add_argument("out_dir")
    ap.add_argument("--images", type=int, default=500)
    ap.add_argument("--genres", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--size", type=int, default=504)
    args = ap.parse_args()
    c = make_genre_corpus(args.out_dir, args.images, args.genres, args.seed, args.size)
    print(f"wrote {args.images} images / {args.genres} genres under {c.root}")


if __name__ == "__main__":
    _main()
