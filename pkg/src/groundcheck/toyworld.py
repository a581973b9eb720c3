"""Procedural toy radiographs with exact finding annotations.

The frame is split into a 6x6 grid of named anatomical regions. A positive
finding is drawn as a glyph filling the *slot* of its region: the region box
shrunk by a small pixel margin, so neighbouring glyphs never touch. Each
finding has its own glyph, a 4x4 block pattern of intensities, so the
task of telling which finding sits where is solvable from pixels.
Negative mentions are absences and are not drawn.
"""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, ImageDraw

from .corpus import GroundedFinding, Sample
from .ffl import Lexicon
from .geometry import BBox

GLYPH_CELLS = 4
GLYPH_LEVELS = (0.35, 0.65, 1.0)

# Fig. 3 legend: predicted = green, indicated = orange, ground truth = red.
OVERLAY_COLORS = {
    "predicted": (0, 200, 0),
    "indicated": (255, 140, 0),
    "ground_truth": (220, 0, 0),
}


class CapacityError(ValueError):
    pass


@dataclass(frozen=True)
class ToyConfig:
    size: int = 128
    grid: int = 6
    margin_px: int = 2
    jitter_px: int = 0
    min_findings: int = 1
    max_findings: int = 4
    negative_prob: float = 0.3
    noise: float = 0.05
    regions_per_finding: int = 12

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ToyImage:
    image_id: str
    pixels: np.ndarray  # (H, W) float32 in [0, 1], quantized to 8-bit levels

    def save(self, path: str | Path) -> None:
        Image.fromarray(np.round(self.pixels * 255).astype(np.uint8), mode="L").save(path)

    @classmethod
    def load(cls, path: str | Path, image_id: str | None = None) -> "ToyImage":
        path = Path(path)
        arr = np.asarray(Image.open(path).convert("L"), dtype=np.float32) / 255.0
        return cls(image_id or path.stem, arr)


@dataclass(frozen=True)
class PlacedFinding:
    finding: str
    region: str
    box: BBox
    glyph_id: int


@dataclass
class SceneSpec:
    image_id: str
    placed: list[PlacedFinding] = field(default_factory=list)
    negatives: list[tuple[str, str]] = field(default_factory=list)  # (finding, region)
    noise: float = 0.0


class RegionLayout:
    """Pixel-aligned grid of named regions that partitions the frame."""

    def __init__(self, regions: Sequence[str], size: int = 128, grid: int = 6, margin_px: int = 2):
        if len(regions) != grid * grid:
            raise ValueError(f"layout needs {grid * grid} regions, lexicon has {len(regions)}")
        self.regions = tuple(regions)
        self.size = size
        self.grid = grid
        self.margin_px = margin_px
        self.edges = [round(k * size / grid) for k in range(grid + 1)]
        self._index = {r: i for i, r in enumerate(self.regions)}

    @classmethod
    def for_lexicon(cls, lex: Lexicon, config: ToyConfig | None = None) -> "RegionLayout":
        config = config or ToyConfig()
        return cls(lex.regions, config.size, config.grid, config.margin_px)

    def index(self, region: str) -> int:
        return self._index[region]

    def pixel_region(self, region: str, margin: int = 0) -> tuple[int, int, int, int]:
        i = self._index[region]
        r, c = divmod(i, self.grid)
        return (
            self.edges[c] + margin,
            self.edges[r] + margin,
            self.edges[c + 1] - margin,
            self.edges[r + 1] - margin,
        )

    def _to_box(self, x0: int, y0: int, x1: int, y1: int) -> BBox:
        s = self.size
        return BBox(x0 / s, y0 / s, (x1 - x0) / s, (y1 - y0) / s)

    def region_box(self, region: str) -> BBox:
        return self._to_box(*self.pixel_region(region))

    def slot_box(self, region: str) -> BBox:
        """Where a finding in ``region`` is drawn; the location an anatomy
        lookup reports for that region."""
        return self._to_box(*self.pixel_region(region, self.margin_px))

    def region_of(self, box: BBox) -> str:
        cx, cy = box.x + box.w / 2, box.y + box.h / 2
        col = min(int(np.searchsorted(self.edges, cx * self.size, side="right")) - 1, self.grid - 1)
        row = min(int(np.searchsorted(self.edges, cy * self.size, side="right")) - 1, self.grid - 1)
        return self.regions[row * self.grid + col]


def _name_rng(name: str, salt: int = 0) -> np.random.Generator:
    return np.random.default_rng([zlib.crc32(name.encode()), salt])


def glyph_pattern(glyph_id: int) -> np.ndarray:
    """4x4 intensity pattern for a glyph; distinct for distinct ids."""
    rng = np.random.default_rng([7919, glyph_id])
    levels = np.asarray(GLYPH_LEVELS, dtype=np.float32)
    return levels[rng.integers(len(levels), size=(GLYPH_CELLS, GLYPH_CELLS))]


def glyph_id(lex: Lexicon, finding: str) -> int:
    return lex.findings.index(finding)


def allowed_regions(lex: Lexicon, finding: str, k: int) -> list[str]:
    """Deterministic subset of regions where ``finding`` may appear."""
    k = min(k, len(lex.regions))
    idx = _name_rng(finding).permutation(len(lex.regions))[:k]
    return [lex.regions[i] for i in sorted(idx)]


def _draw_glyph(pixels: np.ndarray, x0: int, y0: int, x1: int, y1: int, pattern: np.ndarray) -> None:
    ys = np.linspace(y0, y1, GLYPH_CELLS + 1).round().astype(int)
    xs = np.linspace(x0, x1, GLYPH_CELLS + 1).round().astype(int)
    for i in range(GLYPH_CELLS):
        for j in range(GLYPH_CELLS):
            pixels[ys[i] : ys[i + 1], xs[j] : xs[j + 1]] = pattern[i, j]


def sample_scene(
    image_id: str,
    lex: Lexicon,
    layout: RegionLayout,
    config: ToyConfig,
    rng: np.random.Generator,
) -> SceneSpec:
    n = int(rng.integers(config.min_findings, config.max_findings + 1))
    scene = SceneSpec(image_id, noise=config.noise)
    chosen: list[str] = []
    used_regions: set[str] = set()
    for f in rng.permutation(list(lex.findings)):
        if len(chosen) == n:
            break
        f = str(f)
        if any(lex.contradicts(f, c) for c in chosen):
            continue
        free = [r for r in allowed_regions(lex, f, config.regions_per_finding) if r not in used_regions]
        if not free:
            continue
        region = free[int(rng.integers(len(free)))]
        x0, y0, x1, y1 = layout.pixel_region(region, config.margin_px)
        if config.jitter_px:
            j = config.jitter_px
            dx0, dy0, dx1, dy1 = rng.integers(0, j + 1, size=4)
            x0, y0, x1, y1 = x0 + dx0, y0 + dy0, x1 - dx1, y1 - dy1
        box = layout._to_box(x0, y0, x1, y1)
        chosen.append(f)
        used_regions.add(region)
        scene.placed.append(PlacedFinding(f, region, box, glyph_id(lex, f)))
    if len(chosen) < n:
        raise CapacityError(f"{image_id}: could only place {len(chosen)} of {n} findings")
    if rng.random() < config.negative_prob:
        absent = [f for f in lex.findings if f not in chosen]
        if absent:
            f = absent[int(rng.integers(len(absent)))]
            regions = allowed_regions(lex, f, config.regions_per_finding)
            scene.negatives.append((f, regions[int(rng.integers(len(regions)))]))
    return scene


def render_scene(scene: SceneSpec, layout: RegionLayout, rng: np.random.Generator) -> ToyImage:
    s = layout.size
    pixels = np.zeros((s, s), dtype=np.float32)
    for p in scene.placed:
        x0, y0 = round(p.box.x * s), round(p.box.y * s)
        x1, y1 = round(p.box.x2 * s), round(p.box.y2 * s)
        _draw_glyph(pixels, x0, y0, x1, y1, glyph_pattern(p.glyph_id))
    if scene.noise > 0:
        pixels += rng.uniform(-scene.noise, scene.noise, size=pixels.shape).astype(np.float32)
    pixels = np.clip(pixels, 0.0, 1.0)
    pixels = (np.round(pixels * 255) / 255).astype(np.float32)
    return ToyImage(scene.image_id, pixels)


def scene_sample(scene: SceneSpec, lex: Lexicon, layout: RegionLayout, image_ref: str) -> Sample:
    reals = [GroundedFinding(lex.make("yes", p.finding, p.region), p.box, 1) for p in scene.placed]
    reals += [GroundedFinding(lex.make("no", f, r), layout.slot_box(r), 1) for f, r in scene.negatives]
    return Sample(scene.image_id, image_ref, findings_real=tuple(reals))


def image_id_for(i: int) -> str:
    return f"toy-{i:06d}"


def generate_gold(
    n: int,
    lex: Lexicon,
    config: ToyConfig | None = None,
    seed: int = 0,
) -> tuple[list[ToyImage], list[Sample]]:
    config = config or ToyConfig()
    if n < 1:
        raise ValueError("n must be >= 1")
    if config.max_findings > min(len(lex.findings), config.grid * config.grid):
        raise CapacityError(f"max_findings={config.max_findings} exceeds placement capacity")
    if config.min_findings < 1 or config.min_findings > config.max_findings:
        raise ValueError("need 1 <= min_findings <= max_findings")
    layout = RegionLayout.for_lexicon(lex, config)
    images, samples = [], []
    for i in range(n):
        iid = image_id_for(i)
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(iid.encode())]))
        scene = sample_scene(iid, lex, layout, config, rng)
        images.append(render_scene(scene, layout, rng))
        samples.append(scene_sample(scene, lex, layout, f"images/{iid}.png"))
    return images, samples


def render_overlay(
    img: ToyImage,
    boxes: Sequence[tuple[BBox, str, str]],
    path: str | Path | None = None,
    scale: int = 1,
) -> Image.Image:
    """Draw (box, color tag, caption) triples; tags follow OVERLAY_COLORS."""
    gray = np.round(img.pixels * 255).astype(np.uint8)
    im = Image.fromarray(gray, mode="L").convert("RGB")
    if scale != 1:
        im = im.resize((im.width * scale, im.height * scale), Image.NEAREST)
    draw = ImageDraw.Draw(im)
    W, H = im.size
    for box, tag, caption in boxes:
        color = OVERLAY_COLORS.get(tag)
        if color is None:
            raise ValueError(f"unknown color tag {tag!r}")
        if box.w <= 0 or box.h <= 0:
            continue
        x0, y0 = round(box.x * W), round(box.y * H)
        x1, y1 = min(round(box.x2 * W), W) - 1, min(round(box.y2 * H), H) - 1
        draw.rectangle([x0, y0, x1, y1], outline=color, width=1)
        if caption:
            draw.text((x0 + 2, y0 + 1), caption, fill=color)
    if path is not None:
        im.save(path)
    return im
