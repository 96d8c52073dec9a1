"""Synthetic scene generator: words rendered with a bitmap font, plus
class-correlated object annotations.

The font is deliberately engineered so that three letter/digit twins render
almost identically: '0'/'o', '1'/'l' and '5'/'s' differ in exactly one small
interior pixel region. An occluding strip over that region makes the word
visually ambiguous, and only the scene objects (whose tags correlate with
digit-ness vs letter-ness of the word) can resolve it. Clean renders stay
distinguishable, so occlusion is what creates the hard samples.
"""

import numpy as np

from .config import GeneratorConfig
from .data import SceneAnnotation
from .errors import ConfigError
from .geometry import Box, DetectedObject, TextInstance

GLYPH_ROWS = 8
GLYPH_COLS = 5
OCCLUDER_ROWS = 3  # 3 of 8 rows = 37.5% of a character, inside the 40% cap

# 5x8 bitmaps. Note the engineered twins:
#   '0' vs 'o'  -> row 3 center dot
#   '1' vs 'l'  -> row 2 flag pixel
#   '5' vs 's'  -> row 3 leftmost pixel
FONT = {
    "0": ("01110", "10001", "10001", "10101", "10001", "10001", "10001", "01110"),
    "1": ("00100", "00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    "2": ("01110", "10001", "00001", "00010", "00100", "01000", "10000", "11111"),
    "3": ("11110", "00001", "00001", "01110", "00001", "00001", "00001", "11110"),
    "4": ("00010", "00110", "01010", "10010", "11111", "00010", "00010", "00010"),
    "5": ("11111", "10000", "10000", "11110", "00001", "00001", "10001", "01110"),
    "6": ("00110", "01000", "10000", "11110", "10001", "10001", "10001", "01110"),
    "7": ("11111", "00001", "00010", "00100", "00100", "01000", "01000", "01000"),
    "8": ("01110", "10001", "10001", "01110", "10001", "10001", "10001", "01110"),
    "9": ("01110", "10001", "10001", "01111", "00001", "00001", "00010", "01100"),
    "a": ("00000", "00000", "01110", "00001", "01111", "10001", "10011", "01101"),
    "b": ("10000", "10000", "10110", "11001", "10001", "10001", "11001", "10110"),
    "c": ("00000", "00000", "01110", "10001", "10000", "10000", "10001", "01110"),
    "d": ("00001", "00001", "01101", "10011", "10001", "10001", "10011", "01101"),
    "e": ("00000", "00000", "01110", "10001", "11111", "10000", "10001", "01110"),
    "f": ("00110", "01001", "01000", "11100", "01000", "01000", "01000", "01000"),
    "g": ("00000", "01111", "10001", "10001", "01111", "00001", "10001", "01110"),
    "h": ("10000", "10000", "10110", "11001", "10001", "10001", "10001", "10001"),
    "i": ("00100", "00000", "01100", "00100", "00100", "00100", "00100", "01110"),
    "j": ("00010", "00000", "00110", "00010", "00010", "00010", "10010", "01100"),
    "k": ("10000", "10000", "10010", "10100", "11000", "10100", "10010", "10001"),
    "l": ("00100", "00100", "00100", "00100", "00100", "00100", "00100", "01110"),
    "m": ("00000", "00000", "11010", "10101", "10101", "10101", "10101", "10101"),
    "n": ("00000", "00000", "10110", "11001", "10001", "10001", "10001", "10001"),
    "o": ("01110", "10001", "10001", "10001", "10001", "10001", "10001", "01110"),
    "p": ("00000", "10110", "11001", "10001", "11001", "10110", "10000", "10000"),
    "q": ("00000", "01101", "10011", "10001", "10011", "01101", "00001", "00001"),
    "r": ("00000", "00000", "10110", "11001", "10000", "10000", "10000", "10000"),
    "s": ("11111", "10000", "10000", "01110", "00001", "00001", "10001", "01110"),
    "t": ("01000", "01000", "11100", "01000", "01000", "01000", "01001", "00110"),
    "u": ("00000", "00000", "10001", "10001", "10001", "10001", "10011", "01101"),
    "v": ("00000", "00000", "10001", "10001", "10001", "10001", "01010", "00100"),
    "w": ("00000", "00000", "10101", "10101", "10101", "10101", "10101", "01010"),
    "x": ("00000", "00000", "10001", "01010", "00100", "00100", "01010", "10001"),
    "y": ("00000", "10001", "10001", "10001", "01111", "00001", "10001", "01110"),
    "z": ("00000", "00000", "11111", "00010", "00100", "01000", "10000", "11111"),
}


def word_class(word):
    """'digits' when every character is a digit, else 'letters'."""
    return "digits" if word.isdigit() else "letters"


def render_word(word, scale):
    """Binary ink bitmap of `word` at integer `scale` pixels per font cell."""
    cols = len(word) * (GLYPH_COLS + 1) - 1
    bitmap = np.zeros((GLYPH_ROWS, cols), dtype=np.float32)
    for i, ch in enumerate(word):
        glyph = FONT[ch]
        x0 = i * (GLYPH_COLS + 1)
        for r, row in enumerate(glyph):
            for c, bit in enumerate(row):
                if bit == "1":
                    bitmap[r, x0 + c] = 1.0
    return np.kron(bitmap, np.ones((scale, scale), dtype=np.float32))


def _warp_layers(layers, theta, shear, stretch, curve_px):
    """Inverse-map affine warp (+ optional sine baseline curve) of stacked
    (H, W, C) layers, bilinear with zero padding, onto an enlarged canvas."""
    h, w = layers.shape[:2]
    ct, st = np.cos(theta), np.sin(theta)
    # forward map: scene <- [stretch, shear; 0, 1] then rotation
    a = np.array([[ct * stretch, ct * shear - st], [st * stretch, st * shear + ct]])
    corners = np.array([[0, 0], [w, 0], [0, h], [w, h]], dtype=np.float64)
    warped = corners @ a.T
    pad = abs(curve_px) + 1.0
    lo = warped.min(axis=0) - pad
    hi = warped.max(axis=0) + pad
    out_w, out_h = int(np.ceil(hi[0] - lo[0])) + 1, int(np.ceil(hi[1] - lo[1])) + 1
    ainv = np.linalg.inv(a)
    xs, ys = np.meshgrid(np.arange(out_w) + lo[0], np.arange(out_h) + lo[1])
    src = np.stack([xs, ys], axis=-1) @ ainv.T
    sx, sy = src[..., 0], src[..., 1].copy()
    if curve_px:
        sy += curve_px * np.sin(np.pi * np.clip(sx, 0, w) / w)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = (sx - x0)[..., None]
    fy = (sy - y0)[..., None]
    out = np.zeros((out_h, out_w, layers.shape[2]), dtype=np.float32)
    for dy, dx, wgt in ((0, 0, (1 - fy) * (1 - fx)), (0, 1, (1 - fy) * fx),
                        (1, 0, fy * (1 - fx)), (1, 1, fy * fx)):
        xc, yc = x0 + dx, y0 + dy
        valid = ((xc >= 0) & (xc < w) & (yc >= 0) & (yc < h))[..., None]
        out += wgt * np.where(valid, layers[yc.clip(0, h - 1), xc.clip(0, w - 1)], 0.0)
    return out


def generate_synthetic_scene(seed, cfg: GeneratorConfig):
    """Render one deterministic 2D scene for the given (seed, cfg)."""
    cfg.validate()
    for word in cfg.vocabulary:
        bad = [c for c in word.lower() if c not in FONT]
        if bad:
            raise ConfigError(f"vocabulary word {word!r} has unrenderable chars {bad}")
    rng = np.random.default_rng(seed)
    size = cfg.scene_size
    bg = float(rng.integers(150, 226))
    image = np.clip(rng.normal(bg, 5.0, (size, size)), 0, 255).astype(np.float32)

    instances, objects, occupied = [], [], []
    n_words = int(rng.integers(cfg.words_per_scene[0], cfg.words_per_scene[1] + 1))
    for _ in range(n_words):
        word = cfg.vocabulary[int(rng.integers(len(cfg.vocabulary)))]
        scale = int(rng.integers(cfg.glyph_scales[0], cfg.glyph_scales[1] + 1))
        ink_alpha = render_word(word, scale)
        gh, gw = ink_alpha.shape
        ink = float(rng.integers(10, 76))
        occluded = rng.random() < cfg.occlusion_rate
        patch_alpha = np.zeros_like(ink_alpha)
        if occluded:
            ci = int(rng.integers(len(word)))
            oy = int(rng.integers(0, GLYPH_ROWS - OCCLUDER_ROWS + 1))
            r0, r1 = oy * scale, (oy + OCCLUDER_ROWS) * scale
            c0 = ci * (GLYPH_COLS + 1) * scale
            c1 = c0 + GLYPH_COLS * scale
            patch_alpha[r0:r1, c0:c1] = 1.0
        patch_color = float(rng.integers(90, 201))
        total_alpha = np.maximum(ink_alpha, patch_alpha)
        color = ink * ink_alpha
        color = np.where(patch_alpha > 0, patch_color, color)
        premult = color * total_alpha

        theta = np.deg2rad(rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg))
        shear = rng.uniform(-cfg.shear_max, cfg.shear_max)
        stretch = rng.uniform(0.9, 1.15)
        curve_px = cfg.curve_amplitude * scale
        layers = np.stack([ink_alpha, total_alpha, premult], axis=-1)
        warped = _warp_layers(layers, theta, shear, stretch, curve_px)
        w_ink, w_total, w_pre = warped[..., 0], warped[..., 1], warped[..., 2]

        ys, xs = np.nonzero(w_ink > 0.05)
        if ys.size == 0:
            continue
        y0, y1, x0, x1 = ys.min(), ys.max() + 1, xs.min(), xs.max() + 1
        w_ink, w_total, w_pre = (arr[y0:y1, x0:x1] for arr in (w_ink, w_total, w_pre))
        bh, bw = w_ink.shape
        if bw > size - 4 or bh > size - 4:
            continue
        spot = None
        for _ in range(25):
            px = int(rng.integers(2, size - bw - 1))
            py = int(rng.integers(2, size - bh - 1))
            cand = Box(px, py, bw, bh)
            if all(not _boxes_touch(cand, b) for b in occupied):
                spot = (px, py)
                break
        if spot is None:
            continue
        px, py = spot
        region = image[py:py + bh, px:px + bw]
        image[py:py + bh, px:px + bw] = region * (1 - w_total) + w_pre
        box = Box(px, py, bw, bh)
        occupied.append(box)
        instances.append(TextInstance(
            box=box,
            mask_area=float((w_ink > 0.5).sum()),
            transcription=word,
            legible=True,
            occluded=occluded,
        ))
        objects.extend(_informative_objects(rng, cfg, word, box, size))

    for _ in range(int(rng.integers(cfg.n_objects[0], cfg.n_objects[1] + 1))):
        ow = float(rng.integers(10, 61))
        oh = float(rng.integers(10, 61))
        ox = float(rng.uniform(0, size - ow))
        oy = float(rng.uniform(0, size - oh))
        tag = cfg.neutral_tags[int(rng.integers(len(cfg.neutral_tags)))]
        objects.append(DetectedObject(Box(ox, oy, ow, oh), tag, float(rng.uniform(0.3, 0.95))))
    if rng.random() < cfg.background_object_rate:
        tag = cfg.neutral_tags[int(rng.integers(len(cfg.neutral_tags)))]
        objects.append(DetectedObject(Box(0, 0, size, size), tag, float(rng.uniform(0.5, 0.99))))
    rng.shuffle(objects)

    noise = rng.normal(0.0, 3.0, image.shape)
    final = np.clip(image + noise, 0, 255).astype(np.uint8)
    return SceneAnnotation(
        image_id=f"synth_{seed:08d}",
        image=final,
        instances=instances,
        objects=objects,
    )


def _boxes_touch(a, b, margin=4.0):
    return not (a.x + a.w + margin < b.x or b.x + b.w + margin < a.x
                or a.y + a.h + margin < b.y or b.y + b.h + margin < a.y)


def _informative_objects(rng, cfg, word, box, size):
    """Objects whose tags statistically predict the word class."""
    out = []
    n = 0
    if rng.random() < cfg.informative_rate:
        n = 1 + (rng.random() < cfg.extra_informative_rate)
    for _ in range(n):
        if rng.random() < cfg.tag_noise:
            pool = cfg.neutral_tags
        elif word_class(word) == "digits":
            pool = cfg.digit_tags
        else:
            pool = cfg.letter_tags
        tag = pool[int(rng.integers(len(pool)))]
        mx = rng.uniform(0.12, 0.6, size=2) * box.w
        my = rng.uniform(0.12, 0.6, size=2) * box.h
        x0 = max(0.0, box.x - mx[0])
        y0 = max(0.0, box.y - my[0])
        x1 = min(float(size), box.x + box.w + mx[1])
        y1 = min(float(size), box.y + box.h + my[1])
        out.append(DetectedObject(Box(x0, y0, x1 - x0, y1 - y0), tag,
                                  float(rng.uniform(0.6, 0.99))))
    return out


def generate_dataset(cfg, n_scenes, base_seed, out_dir=None):
    """n_scenes consecutive-seed scenes; optionally saved via the shared loader
    format (annotations.json + images/)."""
    scenes = [generate_synthetic_scene(base_seed + i, cfg) for i in range(n_scenes)]
    if out_dir is not None:
        from .data import save_annotations

        save_annotations(scenes, out_dir)
    return scenes
