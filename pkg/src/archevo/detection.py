"""Object-detection scoring: IoU, greedy matching, AP, and KITTI labels.

AP uses all-point interpolation (monotone precision envelope integrated over
recall).  mAP@50-95 averages the per-class AP over the ten IoU thresholds
0.50, 0.55, ..., 0.95.  Precision and recall are reported at the 0.5-IoU
operating point over every retained detection; an empty prediction set scores
precision 0 (not a vacuous 1) so that 1 - precision penalizes silent models.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

IOU_GRID_50_95 = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))

# class ids follow the KITTI label set; DontCare boxes are ignore regions
DEFAULT_CLASS_MAP = {
    "Car": 0,
    "Pedestrian": 1,
    "Van": 2,
    "Cyclist": 3,
    "Truck": 4,
    "Misc": 5,
    "Tram": 6,
    "Person_sitting": 7,
}
IGNORE_CLASSES = {"DontCare"}


class MalformedLineError(Exception):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = str(path)
        self.lineno = lineno


@dataclass(frozen=True)
class BBox:
    left: float
    top: float
    right: float
    bottom: float

    @property
    def area(self) -> float:
        return max(0.0, self.right - self.left) * max(0.0, self.bottom - self.top)


@dataclass(frozen=True)
class Detection:
    image_id: str
    class_id: int
    bbox: BBox
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class GroundTruthBox:
    image_id: str
    class_id: int
    bbox: BBox
    ignore: bool = False


@dataclass(frozen=True)
class DetMetrics:
    map50: float
    map50_95: float
    precision: float
    recall: float
    per_class_ap: tuple[tuple[int, float], ...] = ()
    empty_ground_truth: bool = False

    def to_dict(self) -> dict:
        return {
            "map50": self.map50,
            "map50_95": self.map50_95,
            "precision": self.precision,
            "recall": self.recall,
            "per_class_ap": {str(c): ap for c, ap in self.per_class_ap},
            "empty_ground_truth": self.empty_ground_truth,
        }


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0 when the union is empty."""
    iw = min(a.right, b.right) - max(a.left, b.left)
    ih = min(a.bottom, b.bottom) - max(a.top, b.top)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def match_detections(
    dets: list[Detection], gts: list[GroundTruthBox], iou_thresh: float
) -> list[bool | None]:
    """Greedy TP/FP labels for one class on one image.

    Detections are taken in descending confidence order.  Each detection
    matches the highest-IoU unmatched non-ignored ground truth at or above the
    threshold (True); otherwise it is a false positive (False), unless its
    only above-threshold overlap is an ignore region, in which case it is
    dropped (None).
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].confidence)
    real = [g for g in gts if not g.ignore]
    ignored = [g for g in gts if g.ignore]
    taken = [False] * len(real)
    labels: list[bool | None] = [None] * len(dets)
    for i in order:
        det = dets[i]
        best, best_iou = -1, 0.0
        for j, gt in enumerate(real):
            if taken[j]:
                continue
            overlap = iou(det.bbox, gt.bbox)
            if overlap >= iou_thresh and overlap > best_iou:
                best, best_iou = j, overlap
        if best >= 0:
            taken[best] = True
            labels[i] = True
        elif any(iou(det.bbox, g.bbox) >= iou_thresh for g in ignored):
            labels[i] = None
        else:
            labels[i] = False
    return labels


def average_precision(labels: list[bool], confidences: list[float], n_gt: int) -> float:
    """All-point interpolated AP from per-detection TP/FP labels."""
    if n_gt == 0:
        return 0.0 if labels else 1.0
    if not labels:
        return 0.0
    order = np.argsort([-c for c in confidences], kind="stable")
    tp = np.array([bool(labels[i]) for i in order], dtype=float)
    fp = 1.0 - tp
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(fp)
    recall = cum_tp / n_gt
    precision = cum_tp / (cum_tp + cum_fp)
    # monotone non-increasing envelope, integrate over recall steps
    r = np.concatenate(([0.0], recall, [1.0]))
    p = np.concatenate(([1.0], precision, [0.0]))
    p = np.maximum.accumulate(p[::-1])[::-1]
    steps = np.nonzero(r[1:] != r[:-1])[0]
    return float(np.sum((r[steps + 1] - r[steps]) * p[steps + 1]))


@dataclass
class _ClassAccumulator:
    n_gt: int = 0
    labels: dict[float, list[bool]] = field(default_factory=dict)
    confidences: dict[float, list[float]] = field(default_factory=dict)


def evaluate_detections(
    dets: list[Detection],
    gts: list[GroundTruthBox],
    iou_grid: tuple[float, ...] = IOU_GRID_50_95,
    conf_thresh: float = 0.0,
    operating_iou: float = 0.5,
) -> DetMetrics:
    """Full metric set over per-image, per-class greedy matching."""
    dets = [d for d in dets if d.confidence >= conf_thresh]
    thresholds = tuple(iou_grid)
    if operating_iou not in thresholds:
        thresholds = (operating_iou,) + thresholds

    by_slice_dets: dict[tuple[str, int], list[Detection]] = defaultdict(list)
    by_slice_gts: dict[tuple[str, int], list[GroundTruthBox]] = defaultdict(list)
    by_image_ignores: dict[str, list[GroundTruthBox]] = defaultdict(list)
    for d in dets:
        by_slice_dets[(d.image_id, d.class_id)].append(d)
    for g in gts:
        if g.ignore:
            # ignore regions suppress detections of any class on their image
            by_image_ignores[g.image_id].append(g)
        else:
            by_slice_gts[(g.image_id, g.class_id)].append(g)

    classes = sorted({c for _, c in by_slice_gts} | {c for _, c in by_slice_dets})
    acc: dict[int, _ClassAccumulator] = {c: _ClassAccumulator() for c in classes}
    tp_at_op = fp_at_op = 0

    for cls in classes:
        images = {img for img, c in by_slice_dets if c == cls} | {
            img for img, c in by_slice_gts if c == cls
        }
        for img in sorted(images):
            slice_dets = by_slice_dets.get((img, cls), [])
            slice_gts = by_slice_gts.get((img, cls), []) + by_image_ignores.get(img, [])
            acc[cls].n_gt += sum(1 for g in slice_gts if not g.ignore)
            for t in thresholds:
                labels = match_detections(slice_dets, slice_gts, t)
                kept = [(d.confidence, l) for d, l in zip(slice_dets, labels) if l is not None]
                acc[cls].labels.setdefault(t, []).extend(l for _, l in kept)
                acc[cls].confidences.setdefault(t, []).extend(c for c, _ in kept)
                if t == operating_iou:
                    tp_at_op += sum(1 for _, l in kept if l)
                    fp_at_op += sum(1 for _, l in kept if not l)

    scored = [c for c in classes if acc[c].n_gt > 0]
    empty_gt = not scored

    def class_ap(cls: int, t: float) -> float:
        a = acc[cls]
        return average_precision(a.labels.get(t, []), a.confidences.get(t, []), a.n_gt)

    per_class_50 = tuple((c, class_ap(c, operating_iou)) for c in scored)
    map50 = float(np.mean([ap for _, ap in per_class_50])) if scored else 0.0
    map50_95 = (
        float(np.mean([class_ap(c, t) for c in scored for t in iou_grid])) if scored else 0.0
    )
    total_gt = sum(acc[c].n_gt for c in scored)
    precision = tp_at_op / (tp_at_op + fp_at_op) if (tp_at_op + fp_at_op) > 0 else 0.0
    recall = tp_at_op / total_gt if total_gt > 0 else 0.0
    return DetMetrics(
        map50=map50,
        map50_95=map50_95,
        precision=precision,
        recall=recall,
        per_class_ap=per_class_50,
        empty_ground_truth=empty_gt,
    )


def parse_kitti_line(line: str, path, lineno: int, class_map: dict[str, int]) -> GroundTruthBox | None:
    fields = line.split()
    if len(fields) < 8:
        raise MalformedLineError(path, lineno, f"expected >= 8 whitespace-separated fields, got {len(fields)}")
    name = fields[0]
    try:
        left, top, right, bottom = (float(v) for v in fields[4:8])
    except ValueError as exc:
        raise MalformedLineError(path, lineno, f"bad bbox coordinates: {exc}") from exc
    if right < left or bottom < top:
        raise MalformedLineError(path, lineno, f"inverted bbox [{left}, {top}, {right}, {bottom}]")
    image_id = Path(path).stem
    bbox = BBox(left, top, right, bottom)
    if name in IGNORE_CLASSES:
        return GroundTruthBox(image_id, -1, bbox, ignore=True)
    if name not in class_map:
        return None
    return GroundTruthBox(image_id, class_map[name], bbox)


def load_kitti_labels(
    path: str | Path, class_map: dict[str, int] | None = None
) -> list[GroundTruthBox]:
    """Read a KITTI label directory (or a single label file).

    Unknown class names are skipped; DontCare regions come back with
    ignore=True.  Raises MalformedLineError with file/line context.
    """
    class_map = DEFAULT_CLASS_MAP if class_map is None else class_map
    root = Path(path)
    files = sorted(root.glob("*.txt")) if root.is_dir() else [root]
    boxes: list[GroundTruthBox] = []
    for f in files:
        for lineno, line in enumerate(f.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            box = parse_kitti_line(line, f, lineno, class_map)
            if box is not None:
                boxes.append(box)
    return boxes
