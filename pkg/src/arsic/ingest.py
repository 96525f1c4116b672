"""Annotation readers (DOTA text, xView GeoJSON, canonical JSON) and the object cap."""
import json
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import (
    EmptyAnnotation,
    MalformedBounds,
    MalformedLine,
    NonFiniteCoordinate,
    NotFeatureCollection,
    SchemaViolation,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_OBJECTS = 15
DOTA_HEADER_PREFIXES = ("imagesource:", "gsd:")


@dataclass(frozen=True)
class Box:
    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self):
        coords = (self.min_x, self.min_y, self.max_x, self.max_y)
        if not all(math.isfinite(c) for c in coords):
            raise NonFiniteCoordinate(f"non-finite box coordinate in {coords}")
        if self.min_x > self.max_x or self.min_y > self.max_y:
            raise ValueError(f"inverted box {coords}")

    @property
    def center(self):
        return ((self.min_x + self.max_x) / 2.0, (self.min_y + self.max_y) / 2.0)

    @property
    def diagonal(self):
        return math.hypot(self.max_x - self.min_x, self.max_y - self.min_y)

    def as_list(self):
        return [self.min_x, self.min_y, self.max_x, self.max_y]


@dataclass(frozen=True)
class SceneObject:
    id: int
    label: str
    box: Box

    def __post_init__(self):
        if self.id < 0:
            raise ValueError("object id must be non-negative")
        if not isinstance(self.label, str) or not self.label:
            raise ValueError("object label must be a non-empty string")


@dataclass(frozen=True)
class AnnotatedImage:
    image_id: str
    objects: tuple
    width: Optional[float] = None
    height: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if not self.objects:
            raise ValueError(f"image {self.image_id!r} has no objects")
        for i, obj in enumerate(self.objects):
            if obj.id != i:
                raise ValueError(f"image {self.image_id!r}: object ids must be contiguous from 0")
        for dim in (self.width, self.height):
            if dim is not None and not (math.isfinite(dim) and dim > 0):
                raise ValueError(f"image {self.image_id!r}: dimensions must be positive")
        if self.width is not None and self.height is not None:
            for obj in self.objects:
                b = obj.box
                if b.min_x < 0 or b.min_y < 0 or b.max_x > self.width or b.max_y > self.height:
                    raise ValueError(f"image {self.image_id!r}: object {obj.id} lies outside the image")

    @property
    def labels(self):
        return [o.label for o in self.objects]


def make_image(image_id, labelled_boxes, width=None, height=None):
    """Build an AnnotatedImage from ``(label, Box)`` pairs, numbering ids in order."""
    objects = [SceneObject(i, label, box) for i, (label, box) in enumerate(labelled_boxes)]
    return AnnotatedImage(image_id, tuple(objects), width, height)


def polygon_to_box(corners):
    pts = [tuple(p) for p in corners]
    if len(pts) != 4 or any(len(p) != 2 for p in pts):
        raise ValueError("polygon_to_box expects exactly 4 (x, y) points")
    xs = [float(p[0]) for p in pts]
    ys = [float(p[1]) for p in pts]
    if not all(math.isfinite(v) for v in xs + ys):
        raise NonFiniteCoordinate(f"non-finite polygon corner in {pts}")
    return Box(min(xs), min(ys), max(xs), max(ys))


def parse_dota(text, image_id):
    """Parse one DOTA annotation file.

    Object lines are ``x1 y1 x2 y2 x3 y3 x4 y4 category difficulty``; the
    ``imagesource:``/``gsd:`` header lines and blank lines are skipped.
    """
    labelled = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.lower().startswith(DOTA_HEADER_PREFIXES):
            continue
        fields = stripped.split()
        if len(fields) != 10:
            raise MalformedLine(line_no, f"expected 10 fields, got {len(fields)}")
        try:
            coords = [float(v) for v in fields[:8]]
            int(fields[9])
        except ValueError as exc:
            raise MalformedLine(line_no, str(exc)) from None
        try:
            box = polygon_to_box(list(zip(coords[0::2], coords[1::2])))
        except NonFiniteCoordinate as exc:
            raise MalformedLine(line_no, str(exc)) from None
        labelled.append((fields[8], box))
    if not labelled:
        raise EmptyAnnotation(f"no objects in annotation for image {image_id!r}")
    return make_image(image_id, labelled)


def _parse_bounds(value, index):
    if not isinstance(value, str):
        raise MalformedBounds(index, "bounds_imcoords must be a string")
    parts = value.split(",")
    if len(parts) != 4:
        raise MalformedBounds(index, f"expected 4 values, got {len(parts)}")
    try:
        x1, y1, x2, y2 = (float(p) for p in parts)
    except ValueError as exc:
        raise MalformedBounds(index, str(exc)) from None
    if not all(math.isfinite(v) for v in (x1, y1, x2, y2)):
        raise MalformedBounds(index, "non-finite coordinate")
    return Box(min(x1, x2), min(y1, y2), max(x1, x2), max(y1, y2))


def parse_xview_geojson(doc, label_map):
    """Group xView features by image.

    Returns ``(images, dropped)`` where ``dropped`` counts features whose
    ``type_id`` has no entry in ``label_map``. Images left without objects
    are omitted. Output is sorted by image_id.
    """
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise NotFeatureCollection("document is not a GeoJSON FeatureCollection")
    features = doc.get("features")
    if not isinstance(features, list):
        raise NotFeatureCollection("FeatureCollection has no 'features' list")

    per_image = OrderedDict()
    dropped = 0
    for i, feature in enumerate(features):
        props = feature.get("properties") if isinstance(feature, dict) else None
        if not isinstance(props, dict):
            raise SchemaViolation(f"features[{i}].properties", "missing properties")
        for key in ("image_id", "bounds_imcoords", "type_id"):
            if key not in props:
                raise SchemaViolation(f"features[{i}].properties.{key}", "missing")
        box = _parse_bounds(props["bounds_imcoords"], i)
        try:
            type_id = int(props["type_id"])
        except (TypeError, ValueError):
            raise SchemaViolation(f"features[{i}].properties.type_id", "not an integer") from None
        image_id = str(props["image_id"])
        per_image.setdefault(image_id, [])
        label = label_map.get(type_id)
        if label is None:
            dropped += 1
            continue
        per_image[image_id].append((label, box))

    if dropped:
        logger.warning("dropped %d xView feature(s) with unmapped type_id", dropped)
    images = [make_image(image_id, objs) for image_id, objs in sorted(per_image.items()) if objs]
    return images, dropped


def load_label_map(path):
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise SchemaViolation("label_map", "expected a JSON object")
    out = {}
    for key, value in raw.items():
        try:
            out[int(key)] = str(value)
        except ValueError:
            raise SchemaViolation(f"label_map.{key}", "key is not an integer") from None
    return out


def _number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaViolation(path, "expected a number")
    if not math.isfinite(value):
        raise SchemaViolation(path, "non-finite number")
    return value


def parse_canonical(doc):
    if not isinstance(doc, dict):
        raise SchemaViolation("$", "expected an object")
    images_raw = doc.get("images")
    if not isinstance(images_raw, list):
        raise SchemaViolation("images", "expected a list")
    images = []
    for i, img in enumerate(images_raw):
        p = f"images[{i}]"
        if not isinstance(img, dict):
            raise SchemaViolation(p, "expected an object")
        image_id = img.get("image_id")
        if not isinstance(image_id, str):
            raise SchemaViolation(f"{p}.image_id", "expected a string")
        dims = {}
        for dim in ("width", "height"):
            if img.get(dim) is not None:
                dims[dim] = _number(img[dim], f"{p}.{dim}")
        objs = img.get("objects")
        if not isinstance(objs, list) or not objs:
            raise SchemaViolation(f"{p}.objects", "expected a non-empty list")
        labelled = []
        for j, obj in enumerate(objs):
            op = f"{p}.objects[{j}]"
            if not isinstance(obj, dict):
                raise SchemaViolation(op, "expected an object")
            label = obj.get("label")
            if not isinstance(label, str) or not label:
                raise SchemaViolation(f"{op}.label", "expected a non-empty string")
            box = obj.get("box")
            if not isinstance(box, list) or len(box) != 4:
                raise SchemaViolation(f"{op}.box", "expected [min_x, min_y, max_x, max_y]")
            coords = [_number(v, f"{op}.box[{k}]") for k, v in enumerate(box)]
            try:
                labelled.append((label, Box(*coords)))
            except ValueError as exc:
                raise SchemaViolation(f"{op}.box", str(exc)) from None
        try:
            images.append(make_image(image_id, labelled, dims.get("width"), dims.get("height")))
        except ValueError as exc:
            raise SchemaViolation(p, str(exc)) from None
    return images


def write_canonical(images):
    out = []
    for img in images:
        rec = {"image_id": img.image_id}
        if img.width is not None:
            rec["width"] = img.width
        if img.height is not None:
            rec["height"] = img.height
        rec["objects"] = [{"label": o.label, "box": o.box.as_list()} for o in img.objects]
        out.append(rec)
    return {"images": out}


@dataclass
class CapReport:
    skipped: list = field(default_factory=list)  # (image_id, object count)


def apply_object_cap(images, max_objects=DEFAULT_MAX_OBJECTS):
    if max_objects < 1:
        raise ValueError("max_objects must be >= 1")
    kept = []
    report = CapReport()
    for img in images:
        if len(img.objects) > max_objects:
            report.skipped.append((img.image_id, len(img.objects)))
        else:
            kept.append(img)
    return kept, report
