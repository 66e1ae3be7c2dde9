"""Synthetic pick-and-place scenes: four source boxes on a tabletop
raster, colored shape candidates, templated fetch instructions.

A dataset directory holds `scenes.jsonl` (one JSON record per scene),
one binary PPM per scene, `vocab.txt` and `meta.txt`.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, GenerationError, InputError
from .image import crop as crop_px
from .image import read_ppm, resize_nearest, to_bytes, write_ppm
from .rng import SplitMix64
from .text import Vocabulary

IMAGE_SIZE = 128

SHAPES = ["circle", "square", "triangle", "bar"]
COLORS = {
    "red": (255, 40, 40),
    "green": (40, 200, 40),
    "blue": (60, 60, 255),
    "yellow": (255, 230, 40),
    "white": (255, 255, 255),
    "orange": (255, 150, 30),
}
COLOR_NAMES = list(COLORS)

BACKGROUND = (40, 40, 40)
BOX_EDGE = (100, 100, 100)

# four fixed source boxes (x, y, w, h), quadrant layout
SOURCE_BOXES = [(2, 2, 60, 60), (66, 2, 60, 60), (2, 66, 60, 60), (66, 66, 60, 60)]
SOURCE_NAMES = ["top left", "top right", "bottom left", "bottom right"]

MIN_OBJ, MAX_OBJ = 8, 20
# landmark clusters use smaller objects so two of them fit in one box
CLUSTER_MAX_OBJ = 14
MAX_PLACEMENT_ATTEMPTS = 1000
CROWDING_RADIUS_FRAC = 0.15

# every word any template can emit, so one fixed vocabulary covers all
# modes and on-the-fly negative instructions
TEMPLATE_WORDS = [
    "take", "pick", "up", "grab", "move", "please", "the", "and", "put",
    "it", "in", "to", "from", "by", "near", "next", "beside", "box",
    "tray", "table", "top", "bottom", "left", "right",
]
ALL_WORDS = TEMPLATE_WORDS + COLOR_NAMES + SHAPES


def build_vocabulary() -> Vocabulary:
    return Vocabulary(ALL_WORDS)


@dataclass
class ObjectSpec:
    shape: str
    color: str
    bbox: tuple  # (x, y, w, h) in pixels
    source: int  # index into SOURCE_BOXES

    def center(self):
        x, y, w, h = self.bbox
        return (x + w / 2.0, y + h / 2.0)


@dataclass
class Scene:
    image: np.ndarray  # uint8 [3,H,W]
    sources: list = field(default_factory=lambda: list(SOURCE_BOXES))
    candidates: list = field(default_factory=list)
    instruction: str = ""
    target_index: int = 0
    source_index: int = 0
    mode: str = "unique"


@dataclass
class CropImage:
    pixels: np.ndarray  # float64 [3,h,w] in [0,1]
    bbox: tuple  # source-image coordinates
    kind: str  # "target" | "context"


@dataclass
class GenConfig:
    n_candidates: int = 6
    ambiguity_mode: str = "unique"  # unique | landmark | source_qualified


def _iou(a, b):
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = max(0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union if union else 0.0


def _center_dist(a, b):
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    return float(np.hypot((ax + aw / 2) - (bx + bw / 2),
                          (ay + ah / 2) - (by + bh / 2)))


class _Placer:
    """Rejection-sampling placement with a shared attempt budget."""

    def __init__(self, rng: SplitMix64):
        self.rng = rng
        self.bboxes = []
        self.attempts = 0

    def _spend(self):
        self.attempts += 1
        if self.attempts > MAX_PLACEMENT_ATTEMPTS:
            raise GenerationError(
                f"no valid placement after {MAX_PLACEMENT_ATTEMPTS} attempts")

    def _fits(self, bbox):
        return all(_iou(bbox, other) < 0.1 for other in self.bboxes)

    def place_in_box(self, box_idx, accept=None, hi=MAX_OBJ):
        bx, by, bw, bh = SOURCE_BOXES[box_idx]
        while True:
            self._spend()
            w = MIN_OBJ + self.rng.randint(hi - MIN_OBJ + 1)
            h = MIN_OBJ + self.rng.randint(hi - MIN_OBJ + 1)
            x = bx + 1 + self.rng.randint(bw - 2 - w + 1)
            y = by + 1 + self.rng.randint(bh - 2 - h + 1)
            bbox = (x, y, w, h)
            if self._fits(bbox) and (accept is None or accept(bbox)):
                self.bboxes.append(bbox)
                return bbox

    def place_adjacent(self, anchor, box_idx, hi=MAX_OBJ):
        """Place a new bbox a pixel or two off one side of `anchor`,
        inside source box `box_idx`."""
        ax, ay, aw, ah = anchor
        bx, by, bw, bh = SOURCE_BOXES[box_idx]
        while True:
            self._spend()
            w = MIN_OBJ + self.rng.randint(hi - MIN_OBJ + 1)
            h = MIN_OBJ + self.rng.randint(hi - MIN_OBJ + 1)
            gap = 1 + self.rng.randint(2)
            side = self.rng.randint(4)
            jitter = self.rng.randint(7) - 3
            if side == 0:  # right of anchor
                x, y = ax + aw + gap, ay + (ah - h) // 2 + jitter
            elif side == 1:  # left
                x, y = ax - gap - w, ay + (ah - h) // 2 + jitter
            elif side == 2:  # below
                x, y = ax + (aw - w) // 2 + jitter, ay + ah + gap
            else:  # above
                x, y = ax + (aw - w) // 2 + jitter, ay - gap - h
            bbox = (x, y, w, h)
            inside = (bx + 1 <= x and by + 1 <= y and
                      x + w <= bx + bw - 1 and y + h <= by + bh - 1)
            if inside and self._fits(bbox):
                self.bboxes.append(bbox)
                return bbox


def _draw_object(img, obj: ObjectSpec):
    """Hard-edged fill; img is uint8 [3,H,W]."""
    x, y, w, h = obj.bbox
    color = np.array(COLORS[obj.color], dtype=np.uint8)
    if obj.shape == "square":
        img[:, y:y + h, x:x + w] = color[:, None, None]
    elif obj.shape == "bar":
        t0, t1 = y + h // 3, y + 2 * h // 3
        img[:, t0:t1, x:x + w] = color[:, None, None]
    elif obj.shape == "circle":
        cy, cx = y + h / 2.0, x + w / 2.0
        ys = np.arange(y, y + h) + 0.5
        xs = np.arange(x, x + w) + 0.5
        mask = (((ys[:, None] - cy) / (h / 2.0)) ** 2 +
                ((xs[None, :] - cx) / (w / 2.0)) ** 2) <= 1.0
        region = img[:, y:y + h, x:x + w]
        region[:, mask] = color[:, None]
    elif obj.shape == "triangle":
        # apex at top center, base along the bottom edge
        for r in range(h):
            half = (r + 1) / h * (w / 2.0)
            c0 = int(np.floor(x + w / 2.0 - half))
            c1 = int(np.ceil(x + w / 2.0 + half))
            img[:, y + r, max(x, c0):min(x + w, c1)] = color[:, None]
    else:
        raise InputError(f"unknown shape '{obj.shape}'")


def render_scene(sources, candidates) -> np.ndarray:
    img = np.empty((3, IMAGE_SIZE, IMAGE_SIZE), dtype=np.uint8)
    img[...] = np.array(BACKGROUND, dtype=np.uint8)[:, None, None]
    for (bx, by, bw, bh) in sources:
        edge = np.array(BOX_EDGE, dtype=np.uint8)[:, None]
        img[:, by, bx:bx + bw] = edge
        img[:, by + bh - 1, bx:bx + bw] = edge
        img[:, by:by + bh, bx] = edge
        img[:, by:by + bh, bx + bw - 1] = edge
    for obj in candidates:
        _draw_object(img, obj)
    return img


def _nearest_other(candidates, idx):
    """Index of the candidate whose center is closest to candidate idx."""
    best, best_d = None, None
    for n, other in enumerate(candidates):
        if n == idx:
            continue
        d = _center_dist(candidates[idx].bbox, other.bbox)
        if best_d is None or d < best_d or (d == best_d and n < best):
            best, best_d = n, d
    return best


UNIQUE_TEMPLATES = [
    "take the {c} {s}",
    "pick up the {c} {s}",
    "grab the {c} {s} and put it in the tray",
    "move the {c} {s} to the tray",
    "please take the {c} {s} from the table",
    "pick up the {c} {s} and put it in the tray",
]
LANDMARK_TEMPLATES = [
    "take the {c} {s} near the {lc} {ls}",
    "pick up the {c} {s} next to the {lc} {ls}",
    "grab the {c} {s} beside the {lc} {ls}",
    "move the {c} {s} by the {lc} {ls} to the tray",
    "please take the {c} {s} near the {lc} {ls}",
    "pick up the {c} {s} beside the {lc} {ls} and put it in the tray",
]
SOURCE_TEMPLATES = [
    "take the {c} {s} from the {pos} box",
    "pick up the {c} {s} in the {pos} box",
    "grab the {c} {s} from the {pos} box and put it in the tray",
    "move the {c} {s} in the {pos} box to the tray",
    "please take the {c} {s} from the {pos} box",
    "pick the {c} {s} in the {pos} box",
]


def generate_instruction(scene: Scene, idx: int, rng: SplitMix64,
                         mode: str | None = None) -> str:
    """Instruction naming candidate idx as if it were the target.

    Landmark mode names the candidate nearest to idx, so for the true
    target it names the planted landmark.
    """
    mode = mode or scene.mode
    obj = scene.candidates[idx]
    if mode == "landmark" and len(scene.candidates) > 1:
        lm = scene.candidates[_nearest_other(scene.candidates, idx)]
        tpl = LANDMARK_TEMPLATES[rng.randint(len(LANDMARK_TEMPLATES))]
        return tpl.format(c=obj.color, s=obj.shape, lc=lm.color, ls=lm.shape)
    if mode == "source_qualified":
        tpl = SOURCE_TEMPLATES[rng.randint(len(SOURCE_TEMPLATES))]
        return tpl.format(c=obj.color, s=obj.shape, pos=SOURCE_NAMES[obj.source])
    tpl = UNIQUE_TEMPLATES[rng.randint(len(UNIQUE_TEMPLATES))]
    return tpl.format(c=obj.color, s=obj.shape)


def generate_scene(seed: int, config: GenConfig) -> Scene:
    """Deterministic scene synthesis; raises GenerationError when the
    rejection sampler runs out of attempts."""
    n = config.n_candidates
    if not 2 <= n <= 16:
        raise InputError(f"n_candidates must be in [2,16], got {n}")
    mode = config.ambiguity_mode
    if mode not in ("unique", "landmark", "source_qualified"):
        raise InputError(f"unknown ambiguity_mode '{mode}'")
    rng = SplitMix64(seed)
    pairs = [(c, s) for c in COLOR_NAMES for s in SHAPES]
    target_pair = pairs[rng.randint(len(pairs))]
    placer = _Placer(rng)
    objs = []

    def add(pair, bbox, box_idx):
        objs.append(ObjectSpec(shape=pair[1], color=pair[0], bbox=bbox,
                               source=box_idx))

    target_box = rng.randint(4)
    target_obj = 0
    if mode == "unique":
        add(target_pair, placer.place_in_box(target_box), target_box)
        while len(objs) < n:
            pair = pairs[rng.randint(len(pairs))]
            if pair == target_pair:
                continue
            box = rng.randint(4)
            add(pair, placer.place_in_box(box), box)
    elif mode == "landmark":
        if n < 4:
            raise InputError("landmark mode needs n_candidates >= 4 "
                             "(two duplicates, each with a neighbor)")
        # Two clusters inside one box, each a target-pair object with an
        # adjacent neighbor. The relation vector cannot separate them
        # (same box, same crowding); only the neighbor's pair, visible in
        # the context window, identifies the true target.
        hi = CLUSTER_MAX_OBJ
        anchor1 = placer.place_in_box(target_box, hi=hi)
        comp1 = placer.place_adjacent(anchor1, target_box, hi=hi)
        lm1 = _center_dist(anchor1, comp1)
        # 17 bounds an adjacency span (sizes <= 14, gap <= 2, jitter 3),
        # so cluster 2 ends up farther than lm1 + 5 from all of cluster 1
        thr = lm1 + 17 + 5

        def far_cluster(bbox):
            return (_center_dist(bbox, anchor1) > thr and
                    _center_dist(bbox, comp1) > thr)

        anchor2 = placer.place_in_box(target_box, accept=far_cluster, hi=hi)
        comp2 = placer.place_adjacent(anchor2, target_box, hi=hi)
        lm2 = _center_dist(anchor2, comp2)

        comp_pairs = []
        while len(comp_pairs) < 2:
            pair = pairs[rng.randint(len(pairs))]
            if pair == target_pair:
                continue
            if comp_pairs and pair[0] == comp_pairs[0][0]:
                continue  # distinct neighbor colors survive narrow crops
            comp_pairs.append(pair)

        add(target_pair, anchor1, target_box)
        add(comp_pairs[0], comp1, target_box)
        add(target_pair, anchor2, target_box)
        add(comp_pairs[1], comp2, target_box)
        target_obj = 2 * rng.randint(2)  # either cluster, symmetrically

        def far_frees(bbox):
            return (_center_dist(bbox, anchor1) > lm1 + 5 and
                    _center_dist(bbox, comp1) > lm1 + 5 and
                    _center_dist(bbox, anchor2) > lm2 + 5 and
                    _center_dist(bbox, comp2) > lm2 + 5)

        used = {target_pair, comp_pairs[0], comp_pairs[1]}
        while len(objs) < n:
            pair = pairs[rng.randint(len(pairs))]
            if pair in used:
                continue
            box = rng.randint(4)
            add(pair, placer.place_in_box(box, accept=far_frees), box)
    else:  # source_qualified
        add(target_pair, placer.place_in_box(target_box), target_box)
        n_dups = 1 + rng.randint(min(2, n - 1))
        used = {target_box}
        for _ in range(n_dups):
            if len(used) == 4:
                break
            box = rng.randint(4)
            while box in used:
                box = rng.randint(4)
            used.add(box)
            add(target_pair, placer.place_in_box(box), box)
        while len(objs) < n:
            pair = pairs[rng.randint(len(pairs))]
            if pair == target_pair:
                continue
            box = rng.randint(4)
            add(pair, placer.place_in_box(box), box)

    order = list(range(len(objs)))
    rng.shuffle(order)
    candidates = [objs[i] for i in order]
    target_index = order.index(target_obj)
    if mode == "landmark":
        _check_landmark_structure(candidates, target_index)
    scene = Scene(image=render_scene(SOURCE_BOXES, candidates),
                  sources=list(SOURCE_BOXES), candidates=candidates,
                  target_index=target_index,
                  source_index=candidates[target_index].source, mode=mode)
    scene.instruction = generate_instruction(scene, target_index, rng)
    return scene


def _check_landmark_structure(candidates, target_index):
    """The placement margins should guarantee all of this; treat any
    violation as a failed sample rather than shipping an ambiguous scene."""
    tgt = candidates[target_index]
    lm = candidates[_nearest_other(candidates, target_index)]
    lm_pair = (lm.color, lm.shape)
    named = sum((c.color, c.shape) == lm_pair for c in candidates)
    if named != 1:
        raise GenerationError("landmark pair is not unique in the scene")
    if _nearest_other(candidates, candidates.index(lm)) != target_index:
        raise GenerationError("target is not the landmark's nearest object")
    for i, c in enumerate(candidates):
        if i == target_index or (c.color, c.shape) != (tgt.color, tgt.shape):
            continue
        near = candidates[_nearest_other(candidates, i)]
        if (near.color, near.shape) == lm_pair:
            raise GenerationError("a duplicate also sits next to the "
                                  "landmark pair")


def generate_dataset(seed: int, n_scenes: int, config: GenConfig) -> list:
    """Scene seeds come from one master stream; a scene whose rejection
    sampler exhausts its budget is reseeded deterministically."""
    master = SplitMix64(seed)
    scenes = []
    for _ in range(n_scenes):
        for _ in range(64):
            try:
                scenes.append(generate_scene(master.next_u64(), config))
                break
            except GenerationError:
                continue
        else:
            raise GenerationError(
                f"could not build scene {len(scenes)} after 64 reseeds")
    return scenes


def scene_float_image(scene: Scene) -> np.ndarray:
    return scene.image.astype(np.float64) / 255.0


def target_crop(scene: Scene, idx: int) -> CropImage:
    bbox = scene.candidates[idx].bbox
    x, y, w, h = bbox
    return CropImage(pixels=crop_px(scene_float_image(scene), x, y, w, h),
                     bbox=bbox, kind="target")


def context_window(bbox, delta: int, width=IMAGE_SIZE, height=IMAGE_SIZE):
    """Grow bbox by delta split across the two sides of each axis
    (floor half before, remainder after), clamped to the image."""
    if delta < 0:
        raise InputError(f"context margin must be >= 0, got {delta}")
    x, y, w, h = bbox
    lo = delta // 2
    x0 = max(0, x - lo)
    y0 = max(0, y - lo)
    x1 = min(width, x + w + (delta - lo))
    y1 = min(height, y + h + (delta - lo))
    return (x0, y0, x1 - x0, y1 - y0)


def context_crop(scene: Scene, idx: int, delta: int) -> CropImage:
    win = context_window(scene.candidates[idx].bbox, delta)
    x, y, w, h = win
    return CropImage(pixels=crop_px(scene_float_image(scene), x, y, w, h),
                     bbox=win, kind="context")


def crop_to_input(crop: CropImage, size: int) -> np.ndarray:
    return resize_nearest(crop.pixels, size, size)


def relation_features(scene: Scene, idx: int) -> np.ndarray:
    """9-vector: candidate center (2) and size (2) in image units, offset
    from the scene's source box center (2), source box size (2), and
    local crowding (1)."""
    W = H = IMAGE_SIZE
    obj = scene.candidates[idx]
    cx, cy = obj.center()
    _, _, w, h = obj.bbox
    sx, sy, sw, sh = scene.sources[scene.source_index]
    scx, scy = sx + sw / 2.0, sy + sh / 2.0
    radius = CROWDING_RADIUS_FRAC * W
    near = 0
    for n, other in enumerate(scene.candidates):
        if n == idx:
            continue
        ox, oy = other.center()
        if np.hypot(ox - cx, oy - cy) <= radius:
            near += 1
    crowding = near / len(scene.candidates)
    return np.array([cx / W, cy / H, w / W, h / H,
                     (cx - scx) / W, (cy - scy) / H, sw / W, sh / H,
                     crowding], dtype=np.float64)


def save_dataset(scenes: list, out_dir, meta: dict | None = None):
    os.makedirs(out_dir, exist_ok=True)
    build_vocabulary().save(os.path.join(out_dir, "vocab.txt"))
    with open(os.path.join(out_dir, "meta.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"scenes = {len(scenes)}\n")
        for k, v in (meta or {}).items():
            fh.write(f"{k} = {v}\n")
    with open(os.path.join(out_dir, "scenes.jsonl"), "w", encoding="utf-8") as fh:
        for i, sc in enumerate(scenes):
            name = f"scene_{i:05d}.ppm"
            write_ppm(os.path.join(out_dir, name), sc.image)
            rec = {
                "image": name,
                "sources": [list(b) for b in sc.sources],
                "candidates": [{"bbox": list(c.bbox), "shape": c.shape,
                                "color": c.color, "source": c.source}
                               for c in sc.candidates],
                "instruction": sc.instruction,
                "target_index": sc.target_index,
                "source_index": sc.source_index,
                "mode": sc.mode,
            }
            fh.write(json.dumps(rec) + "\n")


def load_dataset(data_dir) -> tuple[list, Vocabulary]:
    jsonl = os.path.join(data_dir, "scenes.jsonl")
    if not os.path.exists(jsonl):
        raise DataFormatError(f"{jsonl}: not found")
    vocab = Vocabulary.load(os.path.join(data_dir, "vocab.txt"))
    scenes = []
    with open(jsonl, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataFormatError(f"{jsonl}:{ln}: bad record: {e}") from e
            try:
                img = to_bytes(read_ppm(os.path.join(data_dir, rec["image"])))
                cands = [ObjectSpec(shape=c["shape"], color=c["color"],
                                    bbox=tuple(c["bbox"]), source=c["source"])
                         for c in rec["candidates"]]
                scenes.append(Scene(
                    image=img,
                    sources=[tuple(b) for b in rec["sources"]],
                    candidates=cands,
                    instruction=rec["instruction"],
                    target_index=rec["target_index"],
                    source_index=rec["source_index"],
                    mode=rec.get("mode", "unique")))
            except KeyError as e:
                raise DataFormatError(f"{jsonl}:{ln}: missing field {e}") from e
    return scenes, vocab
