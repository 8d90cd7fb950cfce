"""Dataset ingestion, preprocessing, label validation, and the synthetic
skull-image generator used for end-to-end tests.

Label columns are fixed, in this order:
    fracture, not_fractured, linear, depressed, linear_non_depressed,
    facial, comminuted

labels.csv layout: header ``filename,<7 label columns>[,study_id]``,
UTF-8, comma separated, LF line endings, cells strictly 0 or 1. When the
study_id column is absent each file is treated as its own study.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import IngestionError, ShapeError, ValidationError
from .tensor import make_rng

LABEL_COLUMNS = (
    "fracture",
    "not_fractured",
    "linear",
    "depressed",
    "linear_non_depressed",
    "facial",
    "comminuted",
)
NUM_LABELS = len(LABEL_COLUMNS)
TARGET_SIZE = (200, 200)
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".pgm")

_COL_FRACTURE = 0
_COL_NOT_FRACTURED = 1
_TYPE_COLUMNS = (2, 3, 4, 5, 6)


def _bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Pure bilinear resample of an (H, W, C) float array.

    Output pixel centres are mapped back with the half-pixel convention
    src = (dst + 0.5) * scale - 0.5, so resizing to the input size is the
    identity and constant images stay constant.
    """
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()
    sy = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    sx = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    sy = np.clip(sy, 0, h - 1)
    sx = np.clip(sx, 0, w - 1)
    y0 = np.floor(sy).astype(np.intp)
    x0 = np.floor(sx).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (sy - y0)[:, None, None]
    wx = (sx - x0)[None, :, None]
    top = img[y0[:, None], x0[None, :]] * (1 - wx) + img[y0[:, None], x1[None, :]] * wx
    bot = img[y1[:, None], x0[None, :]] * (1 - wx) + img[y1[:, None], x1[None, :]] * wx
    return top * (1 - wy) + bot * wy


def preprocess_image(raw: np.ndarray, target: tuple[int, int] = TARGET_SIZE) -> np.ndarray:
    """Scale to [0, 1], bilinear-resize to `target`, replicate grey to RGB.

    Integer inputs are divided by their dtype maximum (255 for 8-bit);
    float inputs are taken as already scaled and are clipped to [0, 1].
    Accepts (H, W), (H, W, 1), (H, W, 3) or (H, W, 4) arrays (alpha is
    dropped). Returns float32 (target_h, target_w, 3).
    """
    raw = np.asarray(raw)
    if raw.ndim == 2:
        raw = raw[:, :, None]
    if raw.ndim != 3 or raw.shape[0] < 1 or raw.shape[1] < 1:
        raise ShapeError(f"expected a 2-D or 3-D raster with positive size, got {raw.shape}")
    if raw.shape[2] == 4:
        raw = raw[:, :, :3]
    if raw.shape[2] not in (1, 3):
        raise ShapeError(f"expected 1, 3 or 4 channels, got {raw.shape[2]}")

    if raw.dtype.kind == "u" or raw.dtype.kind == "i":
        scale = float(np.iinfo(raw.dtype).max)
        img = raw.astype(np.float32) / scale
    elif raw.dtype.kind == "f":
        img = raw.astype(np.float32)
    else:
        raise ValidationError(f"unsupported image dtype {raw.dtype}")

    img = _bilinear_resize(img, target[0], target[1])
    if img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def load_image(path) -> np.ndarray:
    """Decode a PNG/JPEG/PGM file to a uint8 array, (H, W) or (H, W, 3)."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            if img.mode != "L" and img.mode != "RGB":
                img = img.convert("RGB" if ("A" in img.mode or img.mode == "P") else "L")
            arr = np.asarray(img)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise IngestionError(f"cannot decode image {path}: {exc}") from exc
    if arr.size == 0:
        raise IngestionError(f"image {path} is empty")
    return arr


def load_labels_csv(path) -> tuple[np.ndarray, list[str], list[str]]:
    """Parse labels.csv into (label matrix, filenames, study ids).

    Rejects a wrong header, non-binary cells, and duplicate filenames,
    naming the offending row and column.
    """
    path = Path(path)
    expected = ("filename",) + LABEL_COLUMNS
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot read labels file {path}: {exc}") from exc
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise ValidationError(f"{path}: empty file, expected a header row")
    header = tuple(h.strip() for h in rows[0])
    has_study = header == expected + ("study_id",)
    if not has_study and header != expected:
        raise ValidationError(
            f"{path}: bad header {header}, expected {expected} with optional trailing study_id"
        )

    filenames: list[str] = []
    study_ids: list[str] = []
    matrix = np.zeros((len(rows) - 1, NUM_LABELS), dtype=np.int8)
    seen: set[str] = set()
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValidationError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
        fname = row[0].strip()
        if not fname:
            raise ValidationError(f"{path}: row {r} has an empty filename")
        if fname in seen:
            raise ValidationError(f"{path}: row {r} duplicates filename {fname!r}")
        seen.add(fname)
        filenames.append(fname)
        for j, cell in enumerate(row[1 : 1 + NUM_LABELS]):
            cell = cell.strip()
            if cell not in ("0", "1"):
                raise ValidationError(
                    f"{path}: row {r}, column {LABEL_COLUMNS[j]!r}: "
                    f"expected 0 or 1, got {cell!r}"
                )
            matrix[r - 2, j] = int(cell)
        study_ids.append(row[-1].strip() if has_study else fname)
    return matrix, filenames, study_ids


@dataclass
class Violation:
    row: int
    rule: str
    severity: str  # "error" or "warning"
    message: str


def validate_consistency(labels: np.ndarray) -> list[Violation]:
    """Semantic checks over a label matrix.

    (a) fracture equal to not_fractured is an error; (b) any fracture-type
    bit under not_fractured=1 is an error; (c) fracture=1 with no type bit
    is a warning (an unclassified fracture is conceivable).
    """
    labels = np.asarray(labels)
    if labels.ndim != 2 or labels.shape[1] != NUM_LABELS:
        raise ShapeError(f"expected (n, {NUM_LABELS}) label matrix, got {labels.shape}")
    out: list[Violation] = []
    for i, row in enumerate(labels):
        types = int(row[list(_TYPE_COLUMNS)].sum())
        if row[_COL_FRACTURE] == row[_COL_NOT_FRACTURED]:
            out.append(
                Violation(i, "a", "error", f"row {i}: fracture == not_fractured == {row[0]}")
            )
        if row[_COL_NOT_FRACTURED] == 1 and types > 0:
            out.append(
                Violation(i, "b", "error", f"row {i}: {types} fracture-type bits under not_fractured")
            )
        if row[_COL_FRACTURE] == 1 and types == 0:
            out.append(Violation(i, "c", "warning", f"row {i}: fracture set but no type bit"))
    return out


@dataclass
class Dataset:
    """Preprocessed images plus aligned labels and identifiers."""

    images: np.ndarray  # (n, 200, 200, 3) float32 in [0, 1]
    labels: np.ndarray  # (n, 7) int8
    filenames: list[str]
    study_ids: list[str]

    def __len__(self) -> int:
        return len(self.filenames)


def load_dataset(data_dir, labels_csv=None) -> Dataset:
    """Load every labelled image under `data_dir`, preprocessed.

    `labels_csv` defaults to ``data_dir/labels.csv``; its filename column
    drives which images are loaded and in which order.
    """
    data_dir = Path(data_dir)
    labels_csv = Path(labels_csv) if labels_csv is not None else data_dir / "labels.csv"
    matrix, filenames, study_ids = load_labels_csv(labels_csv)
    if not filenames:
        raise ValidationError(f"{labels_csv}: no data rows")
    images = np.empty((len(filenames), TARGET_SIZE[0], TARGET_SIZE[1], 3), dtype=np.float32)
    for i, fname in enumerate(filenames):
        images[i] = preprocess_image(load_image(data_dir / fname))
    return Dataset(images=images, labels=matrix, filenames=filenames, study_ids=study_ids)


# --- synthetic generator ----------------------------------------------------
#
# Each image is a bright annulus ("skull" rim) on a dark noisy background.
# Fracture types are rendered as defects of the annulus whose placement is
# angle-coded per type, with angles measured clockwise from +x (the row
# axis points down, so +90 degrees is the bottom of the image):
#
#   linear              one thin radial gap, upper-right (-65/-45/-25 deg)
#   linear_non_depressed one thin radial gap, upper-left (-155/-135/-115 deg)
#   depressed           smooth inward dent of the rim, left side (150/180/210)
#   facial              two narrow gaps in the lower third (around +90 deg)
#   comminuted          three radiating gaps spread 120 degrees apart
#
# Defect placement is drawn from small discrete angle sets with +-1 degree
# jitter, so every (type, placement) combination forms a tight cluster in
# pixel space: the generator exists to give the pipeline a learnable,
# metrically separable stand-in dataset, not to simulate radiology.

_CATEGORY_CYCLE = ("not_fractured", "linear", "depressed", "linear_non_depressed", "facial", "comminuted")
_PAIR_PARTNER = {
    "linear": "depressed",
    "depressed": "comminuted",
    "linear_non_depressed": "facial",
    "facial": "comminuted",
    "comminuted": "linear",
}
_GAP_ANGLES = {
    "linear": (-65.0, -45.0, -25.0),
    "linear_non_depressed": (-155.0, -135.0, -115.0),
    "facial": (80.0, 90.0, 100.0),
    "comminuted": (0.0, 40.0, 80.0),
}
_DENT_ANGLES = (150.0, 180.0, 210.0)

_RING_RADIUS = 70.0
_RING_THICKNESS = 11.0
_EDGE_SOFTNESS = 1.5
_GAP_HALF_WIDTH = 8.0
_FACIAL_HALF_WIDTH = 5.0
_RING_INTENSITY = 0.84
_BACKGROUND = 0.06
_NOISE_SIGMA = 0.012


def _angle_diff(theta: np.ndarray, angle: float) -> np.ndarray:
    """Absolute angular distance in degrees, wrapped to [0, 180]."""
    d = np.abs(theta - angle) % 360.0
    return np.minimum(d, 360.0 - d)


def _render_skull(rng: np.random.Generator, types: list[str]) -> np.ndarray:
    h, w = TARGET_SIZE
    cy = h / 2.0 + rng.uniform(-0.25, 0.25)
    cx = w / 2.0 + rng.uniform(-0.25, 0.25)
    radius = _RING_RADIUS + rng.uniform(-0.25, 0.25)
    # one placement slot per image: a paired image renders both defects at
    # the same slot of their angle tables, so label combinations form tight
    # clusters instead of a sparse grid of angle pairs
    slot = int(rng.integers(3))

    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy = yy - cy
    dx = xx - cx
    r = np.hypot(dx, dy)
    theta = np.degrees(np.arctan2(dy, dx))

    if "depressed" in types:
        dent_centre = _DENT_ANGLES[slot] + rng.uniform(-1.0, 1.0)
        dent_depth = 8.0 + rng.uniform(-0.5, 0.5)
        ad = _angle_diff(theta, dent_centre)
        dent = np.where(ad < 25.0, dent_depth * 0.5 * (1.0 + np.cos(np.pi * ad / 25.0)), 0.0)
        r = r + dent  # pushes the rim inward under the dent

    inner = radius - _RING_THICKNESS
    profile = np.clip((r - inner) / _EDGE_SOFTNESS, 0.0, 1.0) * np.clip(
        (radius - r) / _EDGE_SOFTNESS, 0.0, 1.0
    )

    gaps: list[tuple[float, float]] = []  # (centre, half width)
    for t in types:
        if t == "depressed":
            continue
        centre = _GAP_ANGLES[t][slot] + rng.uniform(-1.0, 1.0)
        if t == "facial":
            gaps.extend([(centre - 14.0, _FACIAL_HALF_WIDTH), (centre + 14.0, _FACIAL_HALF_WIDTH)])
        elif t == "comminuted":
            gaps.extend([(centre, _GAP_HALF_WIDTH), (centre + 120.0, _GAP_HALF_WIDTH),
                         (centre + 240.0, _GAP_HALF_WIDTH)])
        else:
            gaps.append((centre, _GAP_HALF_WIDTH))
    for g, half in gaps:
        ad = _angle_diff(theta, g)
        profile = profile * np.clip((ad - half + 1.0) / 1.0, 0.0, 1.0)

    img = _BACKGROUND + _RING_INTENSITY * profile + rng.normal(0.0, _NOISE_SIGMA, (h, w))
    return np.clip(img, 0.0, 1.0)


def _category_types(index: int) -> list[str]:
    """Deterministic round-robin category schedule with every 4th fractured
    image carrying a fixed second type."""
    category = _CATEGORY_CYCLE[index % len(_CATEGORY_CYCLE)]
    if category == "not_fractured":
        return []
    fractured_ordinal = index - index // len(_CATEGORY_CYCLE) - 1  # fractured images seen before
    types = [category]
    if fractured_ordinal % 4 == 3:
        partner = _PAIR_PARTNER[category]
        if partner != category:
            types.append(partner)
    return types


def _labels_for(types: list[str]) -> np.ndarray:
    row = np.zeros(NUM_LABELS, dtype=np.int8)
    if not types:
        row[_COL_NOT_FRACTURED] = 1
        return row
    row[_COL_FRACTURE] = 1
    for t in types:
        row[LABEL_COLUMNS.index(t)] = 1
    return row


def generate_synthetic(n: int, seed: int, out_dir) -> tuple[list[str], np.ndarray]:
    """Write n synthetic grayscale 200x200 PNGs plus labels.csv to out_dir.

    Fully deterministic in (n, seed): the category schedule is index
    arithmetic and all geometry jitter comes from one seeded generator.
    Every generated label row satisfies validate_consistency by
    construction. Returns (filenames, label matrix).
    """
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IngestionError(f"cannot create output directory {out_dir}: {exc}") from exc

    rng = make_rng(seed)
    filenames: list[str] = []
    labels = np.zeros((n, NUM_LABELS), dtype=np.int8)
    for i in range(n):
        types = _category_types(i)
        labels[i] = _labels_for(types)
        img = _render_skull(rng, types)
        fname = f"img_{i:05d}.png"
        filenames.append(fname)
        arr = np.round(img * 255.0).astype(np.uint8)
        try:
            Image.fromarray(arr, mode="L").save(out_dir / fname)
        except OSError as exc:
            raise IngestionError(f"cannot write image {out_dir / fname}: {exc}") from exc

    write_labels_csv(out_dir / "labels.csv", filenames, labels, [Path(f).stem for f in filenames])
    return filenames, labels


def write_labels_csv(path, filenames, labels, study_ids=None) -> None:
    """Write a labels.csv (UTF-8, LF endings) in the documented layout."""
    labels = np.asarray(labels)
    lines = ["filename," + ",".join(LABEL_COLUMNS) + (",study_id" if study_ids is not None else "")]
    for i, fname in enumerate(filenames):
        cells = [fname] + [str(int(v)) for v in labels[i]]
        if study_ids is not None:
            cells.append(str(study_ids[i]))
        lines.append(",".join(cells))
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    except OSError as exc:
        raise IngestionError(f"cannot write labels file {path}: {exc}") from exc
