"""Bounding-box arithmetic for assigning scene objects to text instances.

Two assignment flavors: overlap keeps only the objects whose boxes fully
encompass the mask-rescaled text box; scene keeps every detected object
weighted by IoU with the text box, floored at 0.1 so nothing is wiped out
entirely.
"""

import math
from dataclasses import dataclass

from .errors import ShapeError

SCENE_WEIGHT_FLOOR = 0.1


@dataclass(frozen=True)
class Box:
    """Axis-aligned box: top-left corner (x, y) plus width/height in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise ShapeError(f"box coordinates must be finite: {self}")
        if self.w <= 0 or self.h <= 0:
            raise ShapeError(f"box needs positive extent: w={self.w}, h={self.h}")

    @property
    def area(self):
        return self.w * self.h

    @property
    def corners(self):
        return (
            (self.x, self.y),
            (self.x + self.w, self.y),
            (self.x, self.y + self.h),
            (self.x + self.w, self.y + self.h),
        )

    def contains_point(self, px, py):
        """Boundary-inclusive membership test."""
        return self.x <= px <= self.x + self.w and self.y <= py <= self.y + self.h


@dataclass
class TextInstance:
    """One annotated word: box, segmentation-mask area, transcription."""

    box: Box
    mask_area: float
    transcription: str
    legible: bool = True
    occluded: bool = False

    def __post_init__(self):
        # masks in real annotations occasionally spill past the box; clamp so
        # the rescale factor stays in (0, 1] and never grows the box
        area = self.box.area
        if not (self.mask_area > 0):
            self.mask_area = area
        self.mask_area = min(self.mask_area, area)


@dataclass
class DetectedObject:
    """A detector output: box, lowercase natural-language tag, confidence."""

    box: Box
    tag: str
    score: float = 1.0

    def __post_init__(self):
        if not self.tag:
            raise ShapeError("detected object needs a nonempty tag")
        self.tag = self.tag.lower()


def scale_box(t: TextInstance) -> Box:
    """Shrink the text box about its center by mask_area / box_area."""
    s = t.mask_area / t.box.area
    b = t.box
    return Box(b.x + (1 - s) * b.w / 2, b.y + (1 - s) * b.h / 2, s * b.w, s * b.h)


def encompasses(obj: Box, txt: Box) -> bool:
    """True iff all four corners of `txt` lie inside or on the border of `obj`."""
    return all(obj.contains_point(px, py) for px, py in txt.corners)


def iou(a: Box, b: Box) -> float:
    """Intersection area over union area; 0 for disjoint boxes."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def assign_overlap(t: TextInstance, objs) -> list:
    """Objects fully encompassing the rescaled text box, most specific first.

    Ordered by ascending object-box area so that after truncation to the
    semantic slot budget the tightest-fitting objects survive.
    """
    scaled = scale_box(t)
    hits = [o for o in objs if encompasses(o.box, scaled)]
    hits.sort(key=lambda o: o.box.area)
    return hits


def assign_scene(t: TextInstance, objs) -> list:
    """Every object paired with max(IoU(obj, text), 0.1), best first."""
    weighted = [(o, max(iou(o.box, t.box), SCENE_WEIGHT_FLOOR)) for o in objs]
    weighted.sort(key=lambda ow: -ow[1])
    return weighted
