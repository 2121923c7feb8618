"""Synthetic SAR-like chip generation, crop augmentation, dataset I/O, and
operating-condition splits.

A chip is a 128x128 (configurable) intensity image in [0, 1]: a bright
target region of class-specific geometry near the center, a dark shadow
cast along the +x axis whose length shrinks with depression angle,
low-level clutter everywhere else, and multiplicative unit-mean gamma
speckle over the whole scene. The ground-truth mask marks target pixels
only (shadow counts as background).

On disk a dataset is `images/*.png` (16-bit grayscale), `masks/*.png`
(8-bit class indices), `manifest.csv` with columns
path,mask_path,class,depression,serial,split, and `classes.json`.
Generated intensities are quantized to the 16-bit grid at creation time so
the save/load round trip is exact.
"""

from __future__ import annotations

import csv
import json
import math
import multiprocessing
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from PIL import Image

from .tensor import DTYPE, Rng
from .util import worker_count


class DataError(Exception):
    """Dataset or manifest problem: missing file, bad value, mismatch."""


SHAPES = ("ellipse", "rectangle", "lshape")
_FILL = {"ellipse": math.pi / 4, "rectangle": 1.0, "lshape": 0.75}


@dataclass
class TargetGeometry:
    shape: str
    size_range: tuple      # full extent of the long axis, px
    aspect_range: tuple    # long/short axis ratio, >= 1

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"shape must be one of {SHAPES}, got {self.shape!r}")
        if self.size_range[0] <= 0 or self.size_range[1] < self.size_range[0]:
            raise ValueError("size range must be positive and ordered")
        if self.aspect_range[0] < 1 or self.aspect_range[1] < self.aspect_range[0]:
            raise ValueError("aspect range must be >= 1 and ordered")

    def pixel_area_bounds(self, variant_scale=(0.8, 1.3)) -> tuple:
        """Loose (min, max) target pixel counts over the configured ranges,
        with slack for rasterization and serial variants."""
        f = _FILL[self.shape]
        lo = 0.6 * f * (variant_scale[0] * self.size_range[0]) ** 2 / self.aspect_range[1]
        hi = 1.4 * f * (variant_scale[1] * self.size_range[1]) ** 2 / self.aspect_range[0]
        return max(1.0, lo - 25.0), hi + 25.0


def default_classes(num_classes: int, scale: float = 1.0) -> list:
    """Separable class geometries: shapes cycle through ellipse, rectangle
    and L-compound while the size tier grows every three classes."""
    out = []
    for i in range(num_classes):
        tier = i // 3
        lo = (15.0 + 7.0 * tier) * scale
        hi = lo + 6.0 * scale
        aspect = (1.1, 1.6) if SHAPES[i % 3] == "ellipse" else (1.2, 1.8)
        out.append(TargetGeometry(SHAPES[i % 3], (lo, hi), aspect))
    return out


@dataclass
class SyntheticSpec:
    num_classes: int = 10
    chip_size: int = 128
    classes: list = field(default_factory=list)
    speckle_looks: float = 1.0
    clutter_level: float = 0.06
    target_level: float = 0.60
    shadow_level: float = 0.015
    shadow_offset: int = 2
    shadow_base_len: float = 4.0
    center_jitter: float = 5.0
    geometry_scale: float = 1.0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        if self.chip_size < 16:
            raise ValueError("chip_size too small")
        if not self.classes:
            self.classes = default_classes(self.num_classes, self.geometry_scale)
        elif len(self.classes) != self.num_classes:
            raise ValueError("classes list length must match num_classes")
        self.classes = [c if isinstance(c, TargetGeometry) else TargetGeometry(**c)
                        for c in self.classes]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["classes"] = [asdict(c) for c in self.classes]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown generator keys {sorted(unknown)}; "
                             f"valid keys: {sorted(known)}")
        return cls(**d)


@dataclass
class Sample:
    image: np.ndarray          # (1, 1, h, w) float64 in [0, 1]
    label: int
    mask: np.ndarray           # (h, w) uint8 class indices
    depression_deg: float = 17.0
    serial: str = "s0"
    split: str = "train"

    def spatial(self) -> tuple:
        return self.image.shape[2:]


@dataclass
class Dataset:
    samples: list
    class_names: list

    def __len__(self):
        return len(self.samples)

    def subset(self, pred) -> "Dataset":
        return Dataset([s for s in self.samples if pred(s)], list(self.class_names))


def _variant(serial: str) -> tuple:
    """Deterministic geometry tweak per serial: (size multiplier, aspect
    multiplier). 's*' serials are near-nominal; 'c*' configurations grow
    in size, 'v*' versions change elongation."""
    prefix, idx = serial[:1], int(serial[1:] or 0)
    if prefix == "c":
        return 1.0 + 0.10 * (idx + 1), 1.0
    if prefix == "v":
        return 1.0, 1.0 + 0.15 * (idx + 1)
    return 1.0 + 0.03 * idx, 1.0


def _raster_mask(shape, size, aspect, theta, cy, cx, n) -> np.ndarray:
    a = size / 2.0
    b = a / aspect
    yy, xx = np.mgrid[0:n, 0:n]
    dy = yy - cy
    dx = xx - cx
    u = dx * math.cos(theta) + dy * math.sin(theta)
    v = -dx * math.sin(theta) + dy * math.cos(theta)
    if shape == "ellipse":
        return (u / a) ** 2 + (v / b) ** 2 <= 1.0
    box = (np.abs(u) <= a) & (np.abs(v) <= b)
    if shape == "rectangle":
        return box
    # L-compound: the bounding box minus its upper-right sub-box
    t = 0.5
    notch = (u > -a + 2 * t * a) & (v > -b + 2 * t * b)
    return box & ~notch


def generate_chip(spec: SyntheticSpec, class_id: int, rng: Rng,
                  depression: float = 17.0, serial: str = "s0",
                  split: str = "train") -> Sample:
    """One synthetic chip with its ground-truth target mask.

    Deterministic given the rng state: the same seed reproduces the chip
    bit for bit.
    """
    if not 0 <= class_id < spec.num_classes:
        raise ValueError(f"class_id {class_id} out of range")
    geom = spec.classes[class_id]
    n = spec.chip_size
    size_mult, aspect_mult = _variant(serial)
    size = rng.uniform(*geom.size_range) * size_mult
    aspect = max(1.0, rng.uniform(*geom.aspect_range) * aspect_mult)
    theta = rng.uniform(0.0, math.pi)
    cy = n / 2.0 + rng.uniform(-spec.center_jitter, spec.center_jitter)
    cx = n / 2.0 + rng.uniform(-spec.center_jitter, spec.center_jitter)
    mask = _raster_mask(geom.shape, size, aspect, theta, cy, cx, n)
    if not mask.any():
        raise DataError(f"degenerate geometry for class {class_id}")

    # shadow smeared along +x; length grows as the depression angle drops
    length = int(round(spec.shadow_base_len / math.tan(math.radians(depression))))
    length = min(max(length, 1), n // 4)
    shadow = np.zeros_like(mask)
    for d in range(spec.shadow_offset, spec.shadow_offset + length + 1):
        shadow[:, d:] |= mask[:, : n - d]
    shadow &= ~mask

    reflect = np.full((n, n), spec.clutter_level, dtype=DTYPE)
    reflect[shadow] = spec.shadow_level
    reflect[mask] = spec.target_level
    # a few dominant scatterers inside the target
    ty, tx = np.nonzero(mask)
    n_sc = max(2, int(mask.sum()) // 60)
    pick = rng.integers(0, len(ty), size=n_sc)
    reflect[ty[pick], tx[pick]] = min(1.0, 2.0 * spec.target_level)

    speckle = rng.gamma(spec.speckle_looks, 1.0 / spec.speckle_looks, size=(n, n))
    img = np.clip(reflect * speckle, 0.0, 1.0)
    img = np.round(img * 65535.0) / 65535.0   # 16-bit grid: exact disk round trip
    return Sample(image=img[None, None].astype(DTYPE), label=class_id,
                  mask=mask.astype(np.uint8), depression_deg=float(depression),
                  serial=serial, split=split)


# -- augmentation -------------------------------------------------------------


def _admissible_range(lo_px: int, hi_px: int, crop: int, full: int) -> tuple:
    lo = max(0, hi_px + 1 - crop)
    hi = min(full - crop, lo_px)
    if lo > hi:
        raise DataError(f"target spans {hi_px - lo_px + 1} px, too large for "
                        f"a complete {crop}-px crop")
    return lo, hi


def augment_crops(sample: Sample, count: int = 10, crop: int = 88,
                  rng: Rng | None = None) -> list:
    """`count` random crops of image and mask with identical offsets,
    drawn uniformly over the windows that keep the whole target."""
    h, w = sample.spatial()
    if crop > h or crop > w:
        raise DataError(f"crop {crop} exceeds chip size {h}x{w}")
    ys, xs = np.nonzero(sample.mask)
    if len(ys) == 0:
        raise DataError("sample has an empty mask")
    ylo, yhi = _admissible_range(int(ys.min()), int(ys.max()), crop, h)
    xlo, xhi = _admissible_range(int(xs.min()), int(xs.max()), crop, w)
    rng = rng if rng is not None else Rng(0)
    oy = rng.integers(ylo, yhi + 1, size=count)
    ox = rng.integers(xlo, xhi + 1, size=count)
    out = []
    for k in range(count):
        y0, x0 = int(oy[k]), int(ox[k])
        out.append(Sample(
            image=np.ascontiguousarray(sample.image[:, :, y0 : y0 + crop, x0 : x0 + crop]),
            label=sample.label,
            mask=np.ascontiguousarray(sample.mask[y0 : y0 + crop, x0 : x0 + crop]),
            depression_deg=sample.depression_deg,
            serial=sample.serial,
            split=sample.split,
        ))
    return out


def augment_training_set(samples: list, crop: int = 88, copies: int = 10,
                         quota_per_class: int | None = None,
                         rng: Rng | None = None) -> list:
    """Crop-augment every chip `copies` times; if a per-class quota exceeds
    len(chips)*copies, top up with extra random crops of randomly chosen
    source chips (sampling with replacement)."""
    rng = rng if rng is not None else Rng(0)
    by_class: dict = {}
    for s in samples:
        by_class.setdefault(s.label, []).append(s)
    out = []
    for label in sorted(by_class):
        chips = by_class[label]
        crops = []
        for j, chip in enumerate(chips):
            crops.extend(augment_crops(chip, copies, crop, rng.derive(label, j)))
        if quota_per_class is not None:
            extra_rng = rng.derive(label, len(chips))
            k = 0
            while len(crops) < quota_per_class:
                src = chips[int(extra_rng.integers(0, len(chips)))]
                crops.extend(augment_crops(src, 1, crop, extra_rng.derive(k)))
                k += 1
            crops = crops[:quota_per_class]
        out.extend(crops)
    return out


def center_crop_sample(sample: Sample, crop: int) -> Sample:
    h, w = sample.spatial()
    if crop > h or crop > w:
        raise DataError(f"crop {crop} exceeds chip size {h}x{w}")
    y0, x0 = (h - crop) // 2, (w - crop) // 2
    return Sample(
        image=np.ascontiguousarray(sample.image[:, :, y0 : y0 + crop, x0 : x0 + crop]),
        label=sample.label,
        mask=np.ascontiguousarray(sample.mask[y0 : y0 + crop, x0 : x0 + crop]),
        depression_deg=sample.depression_deg, serial=sample.serial,
        split=sample.split,
    )


def stack_samples(samples: list) -> tuple:
    """(images (n,1,h,w), labels (n,), masks (n,h,w)) training arrays."""
    if not samples:
        raise DataError("empty sample list")
    images = np.concatenate([s.image for s in samples], axis=0)
    labels = np.array([s.label for s in samples], dtype=np.int64)
    masks = np.stack([s.mask for s in samples], axis=0)
    return images, labels, masks


# -- corpus building ----------------------------------------------------------


@dataclass
class CorpusCounts:
    """Per-class chip counts for each metadata cell of the corpus."""
    train: int = 24          # 17 deg, 's' serials
    test: int = 12           # 15 deg, 's' serials
    depression: int = 8      # 30 deg, 's' serials (depression-variant test)
    config: int = 8          # 15 deg, 'c' serials (configuration variants)
    version: int = 8         # 15 deg, 'v' serials (version variants)


def _corpus_jobs(spec: SyntheticSpec, counts: CorpusCounts, seed: int, keys: tuple):
    cells = [
        (counts.train, 17.0, ("s0", "s1"), "train"),
        (counts.test, 15.0, ("s0", "s1"), "test"),
        (counts.depression, 30.0, ("s0", "s1"), "test"),
        (counts.config, 15.0, ("c0", "c1"), "test"),
        (counts.version, 15.0, ("v0", "v1"), "test"),
    ]
    jobs = []
    idx = 0
    for class_id in range(spec.num_classes):
        for n, dep, serials, split in cells:
            for k in range(n):
                jobs.append((spec, class_id, dep, serials[k % len(serials)],
                             split, seed, keys + (idx,)))
                idx += 1
    return jobs


def _generate_job(job) -> Sample:
    spec, class_id, dep, serial, split, seed, keys = job
    return generate_chip(spec, class_id, Rng(seed, keys), depression=dep,
                         serial=serial, split=split)


def build_corpus(spec: SyntheticSpec, counts: CorpusCounts | None = None,
                 rng: Rng | None = None, workers: int | None = None) -> Dataset:
    """Balanced synthetic corpus covering every split scenario.

    Each chip draws from a stream derived from (seed, chip index), so the
    corpus is identical whether generated serially or in parallel.
    """
    counts = counts or CorpusCounts()
    rng = rng if rng is not None else Rng(0)
    jobs = _corpus_jobs(spec, counts, rng.seed, rng.keys)
    workers = worker_count(workers)
    if workers > 1 and len(jobs) > 8:
        with multiprocessing.Pool(workers) as pool:
            samples = pool.map(_generate_job, jobs)
    else:
        samples = [_generate_job(j) for j in jobs]
    names = [f"class{c:02d}" for c in range(spec.num_classes)]
    return Dataset(samples, names)


# -- scenario splits ----------------------------------------------------------

SCENARIOS = ("soc", "eoc-d", "eoc-c", "eoc-v")


def _near(dep: float, target: float) -> bool:
    return abs(dep - target) < 1.0


def make_eoc_splits(dataset: Dataset, scenario: str) -> tuple:
    """(train, test) datasets for a named operating condition.

    soc    train 17 deg, test 15 deg, same serials (shadow regime shifts
           slightly with depression).
    eoc-d  train 17 deg, test 30 deg: a disjoint, far depression band.
    eoc-c  test on held-out 'c*' configuration serials.
    eoc-v  test on held-out 'v*' version serials.
    """
    scenario = scenario.lower()
    if scenario not in SCENARIOS:
        raise DataError(f"unknown scenario {scenario!r}, expected one of {SCENARIOS}")
    train = dataset.subset(lambda s: _near(s.depression_deg, 17.0)
                           and s.serial.startswith("s"))
    if scenario == "soc":
        test = dataset.subset(lambda s: _near(s.depression_deg, 15.0)
                              and s.serial.startswith("s"))
    elif scenario == "eoc-d":
        test = dataset.subset(lambda s: _near(s.depression_deg, 30.0))
    elif scenario == "eoc-c":
        test = dataset.subset(lambda s: s.serial.startswith("c"))
    else:
        test = dataset.subset(lambda s: s.serial.startswith("v"))
    if not train.samples or not test.samples:
        raise DataError(f"scenario {scenario} impossible: the corpus lacks the "
                        f"required depression bands or serials")
    return train, test


# -- disk format --------------------------------------------------------------

MANIFEST_FIELDS = ("path", "mask_path", "class", "depression", "serial", "split")


def save_dataset(dataset: Dataset, out_dir) -> Path:
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    rows = []
    for i, s in enumerate(dataset.samples):
        img16 = np.round(s.image[0, 0] * 65535.0).astype(np.uint16)
        img_rel = f"images/{i:05d}.png"
        mask_rel = f"masks/{i:05d}.png"
        Image.fromarray(img16).save(out / img_rel)
        Image.fromarray(s.mask.astype(np.uint8)).save(out / mask_rel)
        rows.append((img_rel, mask_rel, dataset.class_names[s.label],
                     repr(s.depression_deg), s.serial, s.split))
    with open(out / "manifest.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(MANIFEST_FIELDS)
        wr.writerows(rows)
    with open(out / "classes.json", "w") as fh:
        json.dump({"class_names": dataset.class_names}, fh, indent=2)
        fh.write("\n")
    return out / "manifest.csv"


def load_manifest(path) -> Dataset:
    """Load a dataset directory or manifest.csv path. Images come back as
    float64 in [0, 1]; masks as uint8 class indices."""
    path = Path(path)
    manifest = path / "manifest.csv" if path.is_dir() else path
    root = manifest.parent
    if not manifest.exists():
        raise DataError(f"manifest not found: {manifest}")
    classes_file = root / "classes.json"
    class_names = None
    if classes_file.exists():
        class_names = json.loads(classes_file.read_text())["class_names"]
    with open(manifest, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is not None:
            missing = set(MANIFEST_FIELDS) - set(reader.fieldnames)
            if missing:
                raise DataError(f"manifest missing columns {sorted(missing)}")
        rows = list(reader)
    if class_names is None:
        class_names = sorted({r["class"] for r in rows})
    index = {name: i for i, name in enumerate(class_names)}
    samples = []
    for i, row in enumerate(rows):
        if row["class"] not in index:
            raise DataError(f"manifest row {i}: unknown class name {row['class']!r}")
        if not row["path"] or not (root / row["path"]).is_file():
            raise DataError(f"manifest row {i}: missing image file {row['path']!r}")
        if not row["mask_path"] or not (root / row["mask_path"]).is_file():
            raise DataError(f"manifest row {i}: missing mask file {row['mask_path']!r}")
        try:
            img = np.asarray(Image.open(root / row["path"])).astype(DTYPE) / 65535.0
            mask = np.asarray(Image.open(root / row["mask_path"])).astype(np.uint8)
        except Exception as e:
            raise DataError(f"manifest row {i}: unreadable image data ({e})")
        if img.shape != mask.shape:
            raise DataError(f"manifest row {i}: image {img.shape} and mask "
                            f"{mask.shape} sizes differ")
        samples.append(Sample(image=img[None, None], label=index[row["class"]],
                              mask=mask, depression_deg=float(row["depression"]),
                              serial=row["serial"], split=row["split"]))
    return Dataset(samples, list(class_names))
