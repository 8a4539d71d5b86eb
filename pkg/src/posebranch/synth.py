"""Procedural turntable dataset.

Each category is a 2-d shape family; each instance draws its own size, colour
and shape parameters. A view is the instance rotated in the image plane.
Non-degenerate shapes carry one off-centre spot fixed to the object frame, so
their appearance determines the angle. Degenerate categories are plain discs
with radial texture only, so every view of one instance renders identically.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .pose import PoseBinning, bin_of
from .textconfig import format_key_values, parse_key_values

FAMILIES = ("polygon", "star", "ellipse", "cross")
SPLITS = ("train", "val", "test")
MANIFEST_HEADER = "# posebranch synthetic multi-view manifest v1"
RECORD_COLUMNS = ("sample_id", "category", "instance", "angle_deg", "split", "byte_offset")


@dataclass(frozen=True)
class ObjectInstance:
    category: int
    instance: int
    family: str
    scale: float  # outer radius as a fraction of the half-width of the image
    vertex_count: int = 0
    eccentricity: float = 1.0  # minor/major ratio for ellipses, inner/outer for stars, arm width for crosses
    texture_phase: float = 0.0
    color: tuple = (0.7, 0.7, 0.7)
    degenerate: bool = False


# per-category base colours; instances jitter around them
PALETTE = ((0.9, 0.55, 0.35), (0.45, 0.8, 0.5), (0.5, 0.6, 0.95), (0.9, 0.85, 0.4),
           (0.85, 0.45, 0.85), (0.4, 0.85, 0.9), (0.95, 0.95, 0.95), (0.7, 0.5, 0.5))


def sample_instance(category: int, instance: int, family: str, rng: np.random.Generator,
                    ring_freq: float = 0.0) -> ObjectInstance:
    """Draw instance parameters within the ranges declared for ``family``."""
    base = np.asarray(PALETTE[category % len(PALETTE)])
    color = tuple(float(c) for c in np.clip(base + rng.uniform(-0.06, 0.06, size=3), 0.0, 1.0))
    scale = float(rng.uniform(0.66, 0.8))
    phase = float(rng.uniform(0.0, 2 * math.pi))
    if family == "polygon":
        return ObjectInstance(category, instance, family, scale, int(rng.integers(3, 5)), 1.0, phase, color)
    if family == "star":
        return ObjectInstance(category, instance, family, scale, int(rng.integers(5, 7)),
                              float(rng.uniform(0.4, 0.55)), phase, color)
    if family == "ellipse":
        return ObjectInstance(category, instance, family, scale, 0, float(rng.uniform(0.45, 0.62)), phase, color)
    if family == "cross":
        return ObjectInstance(category, instance, family, scale, 4, float(rng.uniform(0.28, 0.4)), phase, color)
    if family == "disc":
        return ObjectInstance(category, instance, family, float(rng.uniform(0.5, 0.75)), 0, ring_freq,
                              phase, color, degenerate=True)
    raise ValueError(f"unknown shape family {family!r}")


def _inside_distance(inst: ObjectInstance, xo: np.ndarray, yo: np.ndarray) -> np.ndarray:
    """Approximate signed distance to the boundary in object-frame coordinates (positive inside)."""
    R = inst.scale
    r = np.sqrt(xo * xo + yo * yo)
    phi = np.arctan2(yo, xo)
    if inst.family == "polygon":
        sector = 2 * math.pi / inst.vertex_count
        local = np.mod(phi, sector) - sector / 2
        return R * math.cos(sector / 2) / np.cos(local) - r
    if inst.family == "star":
        sector = 2 * math.pi / inst.vertex_count
        t = np.abs(np.mod(phi, sector) / sector * 2 - 1)  # 1 at a tip, 0 between tips
        return R * (inst.eccentricity + (1 - inst.eccentricity) * t) - r
    if inst.family == "ellipse":
        a, b = R, R * inst.eccentricity
        return a * b / np.sqrt((b * np.cos(phi)) ** 2 + (a * np.sin(phi)) ** 2) - r
    if inst.family == "cross":
        half = inst.eccentricity * R / 2
        ax, ay = np.abs(xo), np.abs(yo)
        horizontal = np.minimum(R - ax, half - ay)
        vertical = np.minimum(R - ay, half - ax)
        return np.maximum(horizontal, vertical)
    return R - r


def render_view(inst: ObjectInstance, angle: float, size: int) -> np.ndarray:
    """Render ``inst`` rotated counter-clockwise by ``angle`` degrees as a (3, size, size) image in [0, 1]."""
    if size < 16:
        raise ValueError("image size must be at least 16")
    px = 2.0 / size
    coords = (np.arange(size) + 0.5) * px - 1.0
    x = coords[None, :]
    y = -coords[:, None]
    r = np.sqrt(x * x + y * y)
    edge = 0.6 * px
    if inst.degenerate:
        # depends on r only, so the rendering cannot change with the angle
        inside = 1.0 / (1.0 + np.exp(-(inst.scale - r) / edge))
        spot = np.zeros_like(r)
    else:
        theta = math.radians(angle)
        c, s_ = math.cos(theta), math.sin(theta)
        xo, yo = c * x + s_ * y, -s_ * x + c * y
        inside = 1.0 / (1.0 + np.exp(-np.clip(_inside_distance(inst, xo, yo) / edge, -50, 50)))
        sx, sy = 0.5 * inst.scale * math.cos(theta), 0.5 * inst.scale * math.sin(theta)
        spot_r = 0.28 * inst.scale
        spot = np.exp(-((x - sx) ** 2 + (y - sy) ** 2) / (2 * (spot_r / 1.5) ** 2))
    freq = inst.eccentricity if inst.degenerate else 3.0
    rings = 1.0 + 0.12 * np.cos(2 * math.pi * freq * r / max(inst.scale, 1e-6) + inst.texture_phase)
    bg = 0.08
    img = np.empty((3, size, size))
    for ch, c in enumerate(inst.color):
        body = np.clip(c * rings, 0.0, 1.0)
        body = body * (1.0 - spot) + 0.05 * spot
        img[ch] = bg + (body - bg) * inside
    return np.clip(img, 0.0, 1.0)


@dataclass(frozen=True)
class DataConfig:
    num_categories: int = 4
    instances_per_category: int = 8
    views_per_instance: int = 64
    image_size: int = 36  # stored size; crops are taken from it
    crop_size: int = 32
    seed: int = 0
    degenerate: tuple = (3,)
    view_mode: str = "dense"  # "sparse": few jittered views per instance
    pose_bins: int = 16

    def __post_init__(self):
        if self.instances_per_category < 3:
            raise ValueError("need at least 3 instances per category (train, val, test)")
        if self.view_mode not in ("dense", "sparse"):
            raise ValueError(f"view_mode must be 'dense' or 'sparse', got {self.view_mode!r}")
        if self.crop_size >= self.image_size:
            raise ValueError("crop size must be smaller than the stored image size")
        bad = [d for d in self.degenerate if not 0 <= d < self.num_categories]
        if bad:
            raise ValueError(f"degenerate categories {bad} out of range")
        if self.num_categories - len(set(self.degenerate)) > len(FAMILIES):
            raise ValueError(f"at most {len(FAMILIES)} non-degenerate categories are available")

    def families(self) -> list[str]:
        out, it = [], iter(FAMILIES)
        for c in range(self.num_categories):
            out.append("disc" if c in self.degenerate else next(it))
        return out

    @classmethod
    def from_text(cls, text: str) -> "DataConfig":
        kv = parse_key_values(text, allowed=cls.__dataclass_fields__)
        kw = {}
        for k, v in kv.items():
            if k == "degenerate":
                kw[k] = tuple(int(t) for t in v.replace(",", " ").split())
            elif k == "view_mode":
                kw[k] = v
            else:
                kw[k] = int(v)
        return cls(**kw)

    def to_text(self) -> str:
        d = asdict(self)
        d["degenerate"] = " ".join(str(i) for i in self.degenerate)
        return format_key_values(d)


def view_angles(cfg: DataConfig, rng: np.random.Generator) -> np.ndarray:
    v = cfg.views_per_instance
    base = np.arange(v) * (360.0 / v)
    if cfg.view_mode == "dense":
        return base
    jitter = rng.uniform(-0.25, 0.25, size=v) * (360.0 / v)
    return np.mod(base + jitter, 360.0)


@dataclass
class DatasetManifest:
    """Index of a generated dataset. ``root`` holds ``manifest.txt`` and ``images.f32``."""

    config: DataConfig
    category: np.ndarray
    instance: np.ndarray
    angle: np.ndarray
    split: np.ndarray
    offset: np.ndarray
    root: Path | None = None
    instances: list = field(default_factory=list)
    _blob: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.category)

    @property
    def sample_bytes(self) -> int:
        return 3 * self.config.image_size ** 2 * 4

    @property
    def degenerate_mask(self) -> np.ndarray:
        return np.isin(self.category, np.asarray(self.config.degenerate, dtype=np.int64))

    def indices(self, split: str | None = None) -> np.ndarray:
        if split is None:
            return np.arange(len(self))
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return np.flatnonzero(self.split == split)

    def pose_bins(self) -> np.ndarray:
        return bin_of(self.angle, PoseBinning(self.config.pose_bins))

    def blob(self) -> np.ndarray:
        if self._blob is None:
            if self.root is None:
                raise RuntimeError("manifest has no image blob attached")
            s = self.config.image_size
            self._blob = np.memmap(self.root / "images.f32", dtype="<f4", mode="r").reshape(-1, 3, s, s)
        return self._blob

    def images(self, idx) -> np.ndarray:
        return np.asarray(self.blob()[np.asarray(idx)], dtype=np.float64)

    # ------------------------------------------------------------ text format
    def to_text(self) -> str:
        lines = [MANIFEST_HEADER, self.config.to_text().rstrip("\n"), "---", " ".join(RECORD_COLUMNS)]
        for i in range(len(self)):
            lines.append(
                f"{i} {self.category[i]} {self.instance[i]} {float(self.angle[i])!r} "
                f"{self.split[i]} {self.offset[i]}"
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, root=None) -> "DatasetManifest":
        lines = text.splitlines()
        if not lines or lines[0] != MANIFEST_HEADER:
            raise ValueError("not a posebranch manifest")
        sep = lines.index("---")
        cfg = DataConfig.from_text("\n".join(lines[1:sep]))
        if tuple(lines[sep + 1].split()) != RECORD_COLUMNS:
            raise ValueError("unexpected manifest record columns")
        rows = [ln.split() for ln in lines[sep + 2:] if ln.strip()]
        cols = list(zip(*rows)) if rows else [()] * 6
        m = cls(
            cfg,
            category=np.array(cols[1], dtype=np.int64),
            instance=np.array(cols[2], dtype=np.int64),
            angle=np.array(cols[3], dtype=np.float64),
            split=np.array(cols[4], dtype="<U5"),
            offset=np.array(cols[5], dtype=np.int64),
            root=Path(root) if root is not None else None,
        )
        if not np.array_equal(np.array(cols[0], dtype=np.int64), np.arange(len(rows))):
            raise ValueError("manifest sample ids must be 0..n-1 in order")
        m.instances = _draw_instances(cfg)
        return m


def _draw_instances(cfg: DataConfig) -> list[ObjectInstance]:
    rng = np.random.default_rng([cfg.seed, 1])
    out = []
    fams = cfg.families()
    ring_freqs = {c: 1.5 + k for k, c in enumerate(sorted(set(cfg.degenerate)))}
    for c in range(cfg.num_categories):
        for k in range(cfg.instances_per_category):
            out.append(sample_instance(c, c * cfg.instances_per_category + k, fams[c], rng,
                                       ring_freqs.get(c, 0.0)))
    return out


def make_splits(manifest: DatasetManifest, seed: int | None = None) -> DatasetManifest:
    """Hold out one whole instance per category for validation and one for test."""
    seed = manifest.config.seed if seed is None else seed
    rng = np.random.default_rng([seed, 2])
    split = np.full(len(manifest), "train", dtype="<U5")
    for c in range(manifest.config.num_categories):
        ids = np.unique(manifest.instance[manifest.category == c])
        if len(ids) < 3:
            raise ValueError(f"category {c} has fewer than 3 instances")
        val_id, test_id = rng.choice(ids, size=2, replace=False)
        split[manifest.instance == val_id] = "val"
        split[manifest.instance == test_id] = "test"
    return replace(manifest, split=split)


def generate_dataset(cfg: DataConfig, out_dir=None) -> DatasetManifest:
    """Render every view of every instance; write ``manifest.txt`` and ``images.f32`` when ``out_dir`` is given."""
    instances = _draw_instances(cfg)
    rng = np.random.default_rng([cfg.seed, 3])
    n = len(instances) * cfg.views_per_instance
    s = cfg.image_size
    images = np.empty((n, 3, s, s), dtype="<f4")
    cat = np.empty(n, dtype=np.int64)
    inst_id = np.empty(n, dtype=np.int64)
    angle = np.empty(n, dtype=np.float64)
    i = 0
    for inst in instances:
        for a in view_angles(cfg, rng):
            images[i] = render_view(inst, float(a), s)
            cat[i], inst_id[i], angle[i] = inst.category, inst.instance, a
            i += 1
    nbytes = 3 * s * s * 4
    manifest = DatasetManifest(
        cfg, cat, inst_id, angle, np.full(n, "train", dtype="<U5"), np.arange(n, dtype=np.int64) * nbytes,
        instances=instances,
    )
    manifest = make_splits(manifest)
    if out_dir is not None:
        root = Path(out_dir)
        root.mkdir(parents=True, exist_ok=True)
        images.tofile(root / "images.f32")
        (root / "manifest.txt").write_text(manifest.to_text())
        manifest.root = root
    else:
        manifest._blob = images
    return manifest


def load_manifest(root) -> DatasetManifest:
    root = Path(root)
    return DatasetManifest.from_text((root / "manifest.txt").read_text(), root=root)


@dataclass(frozen=True)
class CropConfig:
    crop_size: int = 32
    flip: bool = False  # horizontal flip with the azimuth relabelled to 180 - angle


def crop_origin(stored: int, crop: int, mode: str, rng=None) -> tuple[int, int]:
    if crop >= stored:
        raise ValueError(f"crop {crop} must be smaller than stored size {stored}")
    if mode == "eval":
        o = (stored - crop) // 2
        return o, o
    return int(rng.integers(0, stored - crop + 1)), int(rng.integers(0, stored - crop + 1))


def load_batch(manifest: DatasetManifest, indices, mode: str = "eval", crop: CropConfig | None = None,
               rng: np.random.Generator | None = None):
    """Return ``(images, category labels, pose-bin labels, angles)`` for ``indices``.

    ``train`` mode crops at a random origin per sample (seeded through ``rng``);
    ``eval`` mode takes the centre crop.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    crop = crop or CropConfig(manifest.config.crop_size)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= len(manifest)):
        raise IndexError(f"sample index out of range [0, {len(manifest)})")
    if mode == "train" and rng is None:
        raise ValueError("train mode needs a random generator")
    raw = manifest.images(idx)
    s, c = manifest.config.image_size, crop.crop_size
    out = np.empty((len(idx), 3, c, c))
    angles = manifest.angle[idx].copy()
    for k in range(len(idx)):
        oy, ox = crop_origin(s, c, mode, rng)
        patch = raw[k, :, oy:oy + c, ox:ox + c]
        if mode == "train" and crop.flip and rng.random() < 0.5:
            patch = patch[:, :, ::-1]
            angles[k] = (180.0 - angles[k]) % 360.0
        out[k] = patch
    bins = bin_of(angles, PoseBinning(manifest.config.pose_bins))
    return out, manifest.category[idx].copy(), np.atleast_1d(bins), angles
