"""Line and surround detection, and assembly of per-image scene descriptions."""
import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import InconsistentClustering, TooFewMembers
from .spatial import group_distance

DEFAULT_TOL_FACTOR = 0.25
DEFAULT_GAP_TOL_DEG = 120.0
DEFAULT_NEAR_FACTOR = 1.5


class RelationKind(str, Enum):
    # declaration order is the sort order of relations in a scene
    STANDS_ALONE = "stands_alone"
    NEAR = "near"
    IN_A_ROW = "in_a_row"
    SURROUNDED_BY = "surrounded_by"
    DISTANCE_FACT = "distance_fact"

    @property
    def rank(self):
        return list(RelationKind).index(self)


@dataclass(frozen=True)
class LineShape:
    direction: tuple
    max_deviation: float


@dataclass(frozen=True)
class Group:
    index: int
    member_ids: tuple
    label_counts: tuple  # (label, count) pairs sorted by label
    line: Optional[LineShape] = None

    @property
    def is_singleton(self):
        return len(self.member_ids) == 1


@dataclass(frozen=True)
class Relation:
    kind: RelationKind
    participants: tuple
    distance: Optional[float] = None

    def sort_key(self):
        return (self.kind.rank, self.participants)


@dataclass(frozen=True)
class SceneDescription:
    image_id: str
    groups: tuple
    relations: tuple

    def to_dict(self):
        return {
            "image_id": self.image_id,
            "groups": [
                {
                    "index": g.index,
                    "members": list(g.member_ids),
                    "label_counts": {label: count for label, count in g.label_counts},
                    "singleton": g.is_singleton,
                    "line": None
                    if g.line is None
                    else {"direction": list(g.line.direction), "max_deviation": g.line.max_deviation},
                }
                for g in self.groups
            ],
            "relations": [
                {"kind": r.kind.value, "participants": list(r.participants), "distance": r.distance}
                for r in self.relations
            ],
        }

    @classmethod
    def from_dict(cls, doc):
        groups = []
        for g in doc["groups"]:
            line = g.get("line")
            groups.append(
                Group(
                    index=int(g["index"]),
                    member_ids=tuple(int(i) for i in g["members"]),
                    label_counts=tuple(sorted((str(k), int(v)) for k, v in g["label_counts"].items())),
                    line=None
                    if line is None
                    else LineShape(tuple(float(v) for v in line["direction"]), float(line["max_deviation"])),
                )
            )
        relations = tuple(
            Relation(RelationKind(r["kind"]), tuple(int(p) for p in r["participants"]), r.get("distance"))
            for r in doc["relations"]
        )
        return cls(str(doc["image_id"]), tuple(groups), relations)


def _centers(objects):
    return np.array([o.box.center for o in objects], dtype=np.float64).reshape(-1, 2)


def detect_line(members, tol_factor=DEFAULT_TOL_FACTOR):
    """Total-least-squares line through box centres.

    Returns a LineShape when every centre lies within ``tol_factor`` times
    the members' mean box diagonal of the fitted line, else None.
    """
    if len(members) < 3:
        raise TooFewMembers(f"line detection needs >= 3 members, got {len(members)}")
    if tol_factor <= 0:
        raise ValueError("tol_factor must be > 0")
    pts = _centers(members)
    centred = pts - pts.mean(axis=0)
    sxx = float(centred[:, 0] @ centred[:, 0])
    syy = float(centred[:, 1] @ centred[:, 1])
    sxy = float(centred[:, 0] @ centred[:, 1])
    # principal axis of the 2x2 scatter matrix in closed form
    theta = 0.5 * math.atan2(2.0 * sxy, sxx - syy)
    direction = np.array([math.cos(theta), math.sin(theta)])
    normal = np.array([-direction[1], direction[0]])
    deviation = float(np.max(np.abs(centred @ normal)))

    scale = float(np.max(np.abs(centred))) if centred.size else 0.0
    mean_diag = float(np.mean([m.box.diagonal for m in members]))
    # floating-point residue of an exact fit
    if deviation <= 1e-9 * (scale + mean_diag):
        deviation = 0.0
    if deviation > tol_factor * mean_diag:
        return None

    dx, dy = float(direction[0]), float(direction[1])
    if abs(dx) <= 1e-12:
        dx = 0.0
        dy = abs(dy)
    elif dx < 0:
        dx, dy = -dx, -dy
    if abs(dy) <= 1e-12:
        dy = 0.0
    norm = math.hypot(dx, dy)
    return LineShape((dx / norm, dy / norm), deviation)


def max_circular_gap(angles_deg):
    """Largest empty arc (degrees) left between bearings on the circle."""
    ordered = sorted(a % 360.0 for a in angles_deg)
    if not ordered:
        return 360.0
    gaps = [b - a for a, b in zip(ordered, ordered[1:])]
    gaps.append(360.0 - ordered[-1] + ordered[0])
    return max(gaps)


def _is_surrounded(inner_objs, outer_objs, gap_tol_deg):
    cx, cy = _centers(inner_objs).mean(axis=0)
    hull_min_x = min(o.box.min_x for o in outer_objs)
    hull_min_y = min(o.box.min_y for o in outer_objs)
    hull_max_x = max(o.box.max_x for o in outer_objs)
    hull_max_y = max(o.box.max_y for o in outer_objs)
    if not (hull_min_x <= cx <= hull_max_x and hull_min_y <= cy <= hull_max_y):
        return False
    angles = []
    for ox, oy in _centers(outer_objs):
        if ox == cx and oy == cy:
            continue
        angles.append(math.degrees(math.atan2(oy - cy, ox - cx)))
    if len(angles) < 3:
        return False
    return max_circular_gap(angles) <= gap_tol_deg


def detect_surrounded(clustering, image, gap_tol_deg=DEFAULT_GAP_TOL_DEG):
    if not 0 < gap_tol_deg < 360:
        raise ValueError("gap_tol_deg must be in (0, 360)")
    objs = image.objects
    relations = []
    for i, inner in enumerate(clustering.clusters):
        for j, outer in enumerate(clustering.clusters):
            if i == j or len(outer) < 3:
                continue
            if _is_surrounded([objs[k] for k in inner], [objs[k] for k in outer], gap_tol_deg):
                relations.append(Relation(RelationKind.SURROUNDED_BY, (i, j)))
    return relations


def assemble_scene(
    image,
    clustering,
    threshold,
    near_factor=DEFAULT_NEAR_FACTOR,
    tol_factor=DEFAULT_TOL_FACTOR,
    gap_tol_deg=DEFAULT_GAP_TOL_DEG,
):
    if near_factor < 1:
        raise ValueError("near_factor must be >= 1")
    ids = sorted(i for c in clustering.clusters for i in c)
    if ids != list(range(len(image.objects))):
        raise InconsistentClustering(f"clustering ids do not match the objects of image {image.image_id!r}")

    objs = image.objects
    groups = []
    relations = []
    for index, members in enumerate(clustering.clusters):
        member_objs = [objs[i] for i in members]
        counts = tuple(sorted(Counter(o.label for o in member_objs).items()))
        line = detect_line(member_objs, tol_factor) if len(members) >= 3 else None
        groups.append(Group(index, tuple(members), counts, line))
        if len(members) == 1:
            relations.append(Relation(RelationKind.STANDS_ALONE, (index,)))
        if line is not None:
            relations.append(Relation(RelationKind.IN_A_ROW, (index,)))

    for cut in clustering.cut_edges:
        a, b = cut.cluster_a, cut.cluster_b
        dist = group_distance(
            [objs[i].box for i in clustering.clusters[a]],
            [objs[i].box for i in clustering.clusters[b]],
        )
        kind = RelationKind.NEAR if dist <= near_factor * threshold else RelationKind.DISTANCE_FACT
        relations.append(Relation(kind, (a, b), dist))

    relations.extend(detect_surrounded(clustering, image, gap_tol_deg))
    relations.sort(key=Relation.sort_key)
    return SceneDescription(image.image_id, tuple(groups), tuple(relations))
