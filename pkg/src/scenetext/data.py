"""Annotation ingestion, the character set, and sample cropping.

The annotation JSON is a top-level list of scenes::

    {
      "image_id": "scene_000",
      "image_path": "images/scene_000.png",
      "instances": [{"bbox": [x, y, w, h], "mask_area": 123.0,
                     "utf8_string": "stop", "legible": true,
                     "occluded": false}],
      "objects":   [{"bbox": [x, y, w, h], "tag": "sign", "score": 0.91}]
    }

``occluded`` is optional ground truth emitted by the synthetic generator;
real annotations simply omit it. Images are grayscale PGM or PNG files next
to the JSON.
"""

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import FormatError, ShapeError
from .geometry import Box, DetectedObject, TextInstance, assign_overlap, assign_scene

log = logging.getLogger(__name__)

CROP_HEIGHT = 32
CROP_WIDTH = 100
MAX_WORD_LEN = 25  # plus EOS -> 26 decode slots, one per visual column


class Charset:
    """Case-insensitive 36-char alphabet plus GO / EOS / PAD specials."""

    SYMBOLS = "0123456789abcdefghijklmnopqrstuvwxyz"
    GO = 36
    EOS = 37
    PAD = 38

    def __init__(self):
        self._index = {c: i for i, c in enumerate(self.SYMBOLS)}

    def __len__(self):
        return 39

    def normalize(self, s):
        """Lowercase and drop anything outside the alphabet."""
        return "".join(c for c in s.lower() if c in self._index)

    def encode(self, s):
        """Token indices of normalize(s), EOS-terminated."""
        return np.array([self._index[c] for c in self.normalize(s)] + [self.EOS],
                        dtype=np.int64)

    def decode(self, tokens):
        """Inverse of encode: stops at EOS, ignores GO/PAD."""
        chars = []
        for t in tokens:
            t = int(t)
            if t == self.EOS:
                break
            if t in (self.GO, self.PAD):
                continue
            chars.append(self.SYMBOLS[t])
        return "".join(chars)


CHARSET = Charset()


@dataclass
class SceneAnnotation:
    """One scene: grayscale image, its text instances, its detected objects."""

    image_id: str
    image: np.ndarray
    instances: list = field(default_factory=list)
    objects: list = field(default_factory=list)


@dataclass
class Sample:
    """One training/eval unit: a cropped word plus its semantic tags."""

    sample_id: str
    image: np.ndarray          # (32, 100) uint8
    target: np.ndarray         # token indices ending in EOS
    tags: list                 # [(tag, weight)] in relevance order
    scene_ref: str
    text: str                  # normalized ground truth
    occluded: bool = False


def _clamp_box(bbox, img_w, img_h):
    """Clip [x, y, w, h] to the image rectangle; None if nothing is left."""
    x, y, w, h = (float(v) for v in bbox)
    x2, y2 = min(x + w, img_w), min(y + h, img_h)
    x, y = max(x, 0.0), max(y, 0.0)
    if x2 - x < 1.0 or y2 - y < 1.0:
        return None
    return Box(x, y, x2 - x, y2 - y)


def _parse_scene(record, base_dir):
    image_id = record["image_id"]
    image_path = record["image_path"]
    if not os.path.isabs(image_path):
        image_path = os.path.join(base_dir, image_path)
    image = np.asarray(Image.open(image_path).convert("L"))
    h, w = image.shape
    instances = []
    for inst in record.get("instances", []):
        box = _clamp_box(inst["bbox"], w, h)
        if box is None:
            continue
        text = inst["utf8_string"]
        mask_area = float(inst.get("mask_area", box.area))
        instances.append(TextInstance(
            box=box,
            mask_area=mask_area,
            transcription=text,
            legible=bool(inst.get("legible", True)),
            occluded=bool(inst.get("occluded", False)),
        ))
    objects = []
    for obj in record.get("objects", []):
        box = _clamp_box(obj["bbox"], w, h)
        if box is None:
            continue
        objects.append(DetectedObject(box=box, tag=obj["tag"], score=float(obj.get("score", 1.0))))
    return SceneAnnotation(image_id=image_id, image=image, instances=instances, objects=objects)


def load_annotations(path):
    """Load a scene list; malformed records are skipped with a warning.

    Raises OSError when the file is unreadable and FormatError when nothing
    in it can be parsed.
    """
    with open(path) as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(f"{path} is not valid annotation JSON: {e}") from e
    if not isinstance(raw, list):
        raise FormatError(f"{path}: top level must be a list of scenes")
    base_dir = os.path.dirname(os.path.abspath(path))
    scenes, skipped = [], 0
    for i, record in enumerate(raw):
        try:
            scenes.append(_parse_scene(record, base_dir))
        except (KeyError, TypeError, ValueError, OSError) as e:
            skipped += 1
            log.warning("skipping malformed scene record %d in %s: %s", i, path, e)
    if skipped:
        log.warning("%s: skipped %d of %d records", path, skipped, len(raw))
    if raw and not scenes:
        raise FormatError(f"{path}: every record was malformed ({skipped} skipped)")
    return scenes


def save_annotations(scenes, out_dir):
    """Write annotations.json plus images/ so generated data uses the loader."""
    img_dir = os.path.join(out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)
    records = []
    for scene in scenes:
        rel = os.path.join("images", f"{scene.image_id}.png")
        Image.fromarray(scene.image).save(os.path.join(out_dir, rel))
        records.append({
            "image_id": scene.image_id,
            "image_path": rel,
            "instances": [{
                "bbox": [inst.box.x, inst.box.y, inst.box.w, inst.box.h],
                "mask_area": inst.mask_area,
                "utf8_string": inst.transcription,
                "legible": inst.legible,
                "occluded": inst.occluded,
            } for inst in scene.instances],
            "objects": [{
                "bbox": [o.box.x, o.box.y, o.box.w, o.box.h],
                "tag": o.tag,
                "score": o.score,
            } for o in scene.objects],
        })
    path = os.path.join(out_dir, "annotations.json")
    with open(path, "w") as f:
        json.dump(records, f)
    return path


def crop_region(image, box):
    """Integer sub-array of `image` covered by `box` (pre-resize pixels)."""
    x0, y0 = int(np.floor(box.x)), int(np.floor(box.y))
    x1, y1 = int(np.ceil(box.x + box.w)), int(np.ceil(box.y + box.h))
    return image[y0:y1, x0:x1]


def resize_keep_aspect(crop, out_h=CROP_HEIGHT, out_w=CROP_WIDTH):
    """Scale into (out_h, out_w) preserving aspect; pad the rest with zeros."""
    h, w = crop.shape
    scale = min(out_h / h, out_w / w)
    nh, nw = max(1, round(h * scale)), max(1, round(w * scale))
    resized = np.asarray(Image.fromarray(crop).resize((nw, nh), Image.BILINEAR))
    out = np.zeros((out_h, out_w), dtype=crop.dtype)
    top = (out_h - nh) // 2
    out[top:top + nh, :nw] = resized
    return out


def crop_samples(ann, assignment, charset=CHARSET, max_objects=15):
    """One Sample per legible instance of a scene.

    `assignment` picks the semantic tags: "overlap" (encompassing objects,
    weight 1.0), "scene" (all objects, IoU-floored weights) or "none".
    """
    if assignment not in ("overlap", "scene", "none"):
        raise ShapeError(f"unknown assignment mode {assignment!r}")
    samples = []
    for i, inst in enumerate(ann.instances):
        if not inst.legible:
            continue
        text = charset.normalize(inst.transcription)
        if not text:
            log.warning("scene %s instance %d: empty transcription after "
                        "normalization, treating as illegible", ann.image_id, i)
            continue
        crop = crop_region(ann.image, inst.box)
        if crop.size == 0:
            log.warning("scene %s instance %d: degenerate crop, skipped", ann.image_id, i)
            continue
        text = text[:MAX_WORD_LEN]
        if assignment == "overlap":
            tags = [(o.tag, 1.0) for o in assign_overlap(inst, ann.objects)]
        elif assignment == "scene":
            tags = [(o.tag, w) for o, w in assign_scene(inst, ann.objects)]
        else:
            tags = []
        samples.append(Sample(
            sample_id=f"{ann.image_id}:{i}",
            image=resize_keep_aspect(crop),
            target=charset.encode(text),
            tags=tags[:max_objects],
            scene_ref=ann.image_id,
            text=text,
            occluded=inst.occluded,
        ))
    return samples


def load_samples(path, assignment, max_objects=15):
    """load_annotations + crop_samples over a whole annotation file."""
    samples = []
    for ann in load_annotations(path):
        samples.extend(crop_samples(ann, assignment, max_objects=max_objects))
    return samples
