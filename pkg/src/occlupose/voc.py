"""Pascal-VOC ingestion: annotation parsing, instance cutout extraction,
filter rules and the on-disk occluder library.

The library format is one RGBA PNG per cutout (binary alpha, values 0 or 255)
plus a JSON manifest listing {id, class, area_px, source_id, width, height}
records in load order. Ordering is stable: cutouts sort by source image id and
1-based instance index, which the zero-padded cutout id encodes.
"""

from __future__ import annotations

import json
import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

logger = logging.getLogger(__name__)

#: Palette index marking void/boundary pixels in VOC instance masks.
VOID_INDEX = 255

MANIFEST_NAME = "manifest.json"
CUTOUT_DIR = "cutouts"


class VocParseError(ValueError):
    """Malformed or inconsistent VOC annotation content."""


class LibraryIntegrityError(RuntimeError):
    """On-disk occluder library is incomplete or self-inconsistent."""


@dataclass(frozen=True)
class AnnotationObject:
    """One <object> entry of a VOC annotation.

    instance_index is the 1-based position in the annotation, matching the
    object's palette index in the instance segmentation mask.
    """

    class_name: str
    difficult: bool
    truncated: bool
    bbox: tuple
    instance_index: int

    def __post_init__(self):
        xmin, ymin, xmax, ymax = self.bbox
        if not (xmin < xmax and ymin < ymax):
            raise VocParseError(f"degenerate bbox {self.bbox} for <object> {self.class_name}")
        if self.instance_index < 1:
            raise VocParseError(f"instance_index must be >= 1, got {self.instance_index}")


@dataclass(eq=False)
class SegmentedObject:
    """A tight-cropped occluder cutout: color pixels plus a binary mask."""

    pixels: np.ndarray
    alpha: np.ndarray
    area_px: int
    class_name: str
    source_id: str

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"pixels must be (h, w, 3), got {self.pixels.shape}")
        if self.alpha.shape != self.pixels.shape[:2]:
            raise ValueError(
                f"alpha shape {self.alpha.shape} does not match pixels "
                f"{self.pixels.shape[:2]}"
            )
        if self.area_px < 1:
            raise ValueError("cutout must contain at least one opaque pixel")
        if self.area_px != int(np.count_nonzero(self.alpha)):
            raise ValueError(
                f"area_px {self.area_px} does not match mask "
                f"({int(np.count_nonzero(self.alpha))} opaque pixels)"
            )
        rows = np.any(self.alpha, axis=1)
        cols = np.any(self.alpha, axis=0)
        if not (rows[0] and rows[-1] and cols[0] and cols[-1]):
            raise ValueError("cutout is not tight-cropped to its mask")

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


@dataclass(frozen=True)
class FilterRules:
    """Which extracted objects survive into the occluder library."""

    exclude_classes: frozenset = frozenset({"person"})
    exclude_difficult: bool = True
    exclude_truncated: bool = True
    min_area_px: int = 500

    def __post_init__(self):
        if self.min_area_px < 0:
            raise ValueError(f"min_area_px must be >= 0, got {self.min_area_px}")
        object.__setattr__(self, "exclude_classes", frozenset(self.exclude_classes))

    def keeps(self, obj, annot):
        return (
            obj.class_name not in self.exclude_classes
            and not (self.exclude_difficult and annot.difficult)
            and not (self.exclude_truncated and annot.truncated)
            and obj.area_px >= self.min_area_px
        )


@dataclass
class OccluderLibrary:
    """Filtered occluder cutouts plus their manifest records, in stable order."""

    objects: list
    manifest: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.objects) != len(self.manifest):
            raise ValueError(
                f"manifest length {len(self.manifest)} != object count {len(self.objects)}"
            )

    def __len__(self):
        return len(self.objects)

    def __getitem__(self, i):
        return self.objects[i]


def _require_text(element, tag, context):
    child = element.find(tag)
    if child is None or child.text is None or not child.text.strip():
        raise VocParseError(f"missing <{tag}> in {context}")
    return child.text.strip()


def _parse_int(text, tag, context):
    try:
        return int(text)
    except ValueError:
        try:
            value = float(text)
        except ValueError:
            raise VocParseError(f"non-integer <{tag}> value {text!r} in {context}") from None
        if not value.is_integer():
            raise VocParseError(f"non-integer <{tag}> value {text!r} in {context}") from None
        return int(value)


def _parse_flag(element, tag):
    child = element.find(tag)
    return child is not None and child.text is not None and child.text.strip() == "1"


def parse_annotation(xml_bytes):
    """Parse a VOC annotation document into AnnotationObject records.

    Objects appear in document order; the k-th object receives instance index
    k (1-based), matching VOC instance-mask palette indices. Flags are read
    from <difficult> and <truncated> ("1" means set).
    """
    try:
        root = ET.fromstring(xml_bytes)
    except ET.ParseError as exc:
        raise VocParseError(f"malformed annotation XML: {exc}") from exc
    size = root.find("size")
    width = height = None
    if size is not None:
        width = _parse_int(_require_text(size, "width", "<size>"), "width", "<size>")
        height = _parse_int(_require_text(size, "height", "<size>"), "height", "<size>")
    objects = []
    for index, element in enumerate(root.findall("object"), start=1):
        context = f"<object> #{index}"
        name = _require_text(element, "name", context)
        bnd = element.find("bndbox")
        if bnd is None:
            raise VocParseError(f"missing <bndbox> in {context}")
        coords = tuple(
            _parse_int(_require_text(bnd, tag, context), tag, context)
            for tag in ("xmin", "ymin", "xmax", "ymax")
        )
        if width is not None and not (0 <= coords[0] and coords[2] <= width):
            raise VocParseError(f"bbox x range {coords[0]}..{coords[2]} outside image in {context}")
        if height is not None and not (0 <= coords[1] and coords[3] <= height):
            raise VocParseError(f"bbox y range {coords[1]}..{coords[3]} outside image in {context}")
        objects.append(
            AnnotationObject(
                class_name=name,
                difficult=_parse_flag(element, "difficult"),
                truncated=_parse_flag(element, "truncated"),
                bbox=coords,
                instance_index=index,
            )
        )
    return objects


def extract_cutouts(image, instance_mask, annotations, source_id=""):
    """Cut each annotated instance out of the image using the instance mask.

    Returns (objects, used_annotations): one tight-cropped SegmentedObject per
    annotation whose palette index actually occurs in the mask, paired with
    that annotation. Annotations whose index never appears are skipped with a
    warning. Void pixels (index 255) never belong to any cutout.
    """
    image = np.asarray(image)
    instance_mask = np.asarray(instance_mask)
    if image.shape[:2] != instance_mask.shape:
        raise ValueError(
            f"image size {image.shape[:2]} does not match mask {instance_mask.shape}"
        )
    objects = []
    used = []
    for annot in annotations:
        if annot.instance_index == VOID_INDEX:
            logger.warning("%s: instance index 255 is reserved for void, skipping", source_id)
            continue
        on = instance_mask == annot.instance_index
        area = int(np.count_nonzero(on))
        if area == 0:
            logger.warning(
                "%s: instance %d (%s) has no mask pixels, skipping",
                source_id,
                annot.instance_index,
                annot.class_name,
            )
            continue
        rows = np.flatnonzero(on.any(axis=1))
        cols = np.flatnonzero(on.any(axis=0))
        y0, y1 = rows[0], rows[-1] + 1
        x0, x1 = cols[0], cols[-1] + 1
        alpha = np.where(on[y0:y1, x0:x1], np.uint8(255), np.uint8(0))
        objects.append(
            SegmentedObject(
                pixels=np.ascontiguousarray(image[y0:y1, x0:x1]),
                alpha=alpha,
                area_px=area,
                class_name=annot.class_name,
                source_id=source_id,
            )
        )
        used.append(annot)
    return objects, used


def filter_objects(objects, annots, rules):
    """Keep the objects allowed by the rules, preserving order."""
    if len(objects) != len(annots):
        raise ValueError(f"{len(objects)} objects but {len(annots)} annotations")
    return [obj for obj, annot in zip(objects, annots) if rules.keeps(obj, annot)]


def filter_breakdown(objects, annots, rules):
    """Cumulative survivor counts as each rule is applied in turn.

    Returns an ordered list of (stage name, count) starting with the raw count.
    """
    if len(objects) != len(annots):
        raise ValueError(f"{len(objects)} objects but {len(annots)} annotations")
    pairs = list(zip(objects, annots))
    stages = [("extracted", len(pairs))]
    pairs = [(o, a) for o, a in pairs if o.class_name not in rules.exclude_classes]
    stages.append((f"class not in {sorted(rules.exclude_classes)}", len(pairs)))
    if rules.exclude_difficult:
        pairs = [(o, a) for o, a in pairs if not a.difficult]
    stages.append(("not difficult", len(pairs)))
    if rules.exclude_truncated:
        pairs = [(o, a) for o, a in pairs if not a.truncated]
    stages.append(("not truncated", len(pairs)))
    pairs = [(o, a) for o, a in pairs if o.area_px >= rules.min_area_px]
    stages.append((f"area >= {rules.min_area_px} px", len(pairs)))
    return stages


def _voc_image_ids(root, split):
    """Image ids carrying instance masks, honoring the split list when present."""
    split_file = root / "ImageSets" / "Segmentation" / f"{split}.txt"
    mask_dir = root / "SegmentationObject"
    if split_file.is_file():
        ids = [line.strip() for line in split_file.read_text().splitlines() if line.strip()]
        return [i for i in ids if (mask_dir / f"{i}.png").is_file()]
    return sorted(p.stem for p in mask_dir.glob("*.png"))


def _load_voc_frame(root, image_id):
    xml_path = root / "Annotations" / f"{image_id}.xml"
    jpg_path = root / "JPEGImages" / f"{image_id}.jpg"
    mask_path = root / "SegmentationObject" / f"{image_id}.png"
    annotations = parse_annotation(xml_path.read_bytes())
    image = np.asarray(Image.open(jpg_path).convert("RGB"))
    # PIL keeps palette PNGs in "P" mode; the array holds raw palette indices.
    mask = np.asarray(Image.open(mask_path))
    return image, mask, annotations


def collect_voc_objects(dataset_root, split="trainval", n_threads=1):
    """Parse and extract every instance of a VOC segmentation split.

    Returns (objects, annotations) aligned one-to-one, sorted by source image
    id and instance index. Per-image work is independent; with n_threads > 1 it
    runs concurrently and is merged back in sorted image order.
    """
    root = Path(dataset_root)
    for sub in ("Annotations", "JPEGImages", "SegmentationObject"):
        if not (root / sub).is_dir():
            raise FileNotFoundError(f"missing VOC directory: {root / sub}")
    image_ids = sorted(_voc_image_ids(root, split))

    def extract_one(image_id):
        image, mask, annotations = _load_voc_frame(root, image_id)
        return extract_cutouts(image, mask, annotations, source_id=image_id)

    if n_threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            per_image = list(pool.map(extract_one, image_ids))
    else:
        per_image = [extract_one(image_id) for image_id in image_ids]

    objects = []
    annots = []
    for extracted, used in per_image:
        objects.extend(extracted)
        annots.extend(used)
    return objects, annots


def _cutout_id(source_id, instance_index):
    return f"{source_id}_{instance_index:03d}"


def _manifest_record(cutout_id, obj):
    return {
        "id": cutout_id,
        "class": obj.class_name,
        "area_px": obj.area_px,
        "source_id": obj.source_id,
        "width": obj.width,
        "height": obj.height,
    }


def save_library(library, out_dir):
    """Write manifest.json and one RGBA PNG per cutout."""
    out = Path(out_dir)
    cutout_dir = out / CUTOUT_DIR
    cutout_dir.mkdir(parents=True, exist_ok=True)
    for record, obj in zip(library.manifest, library.objects):
        rgba = np.dstack([obj.pixels, obj.alpha])
        Image.fromarray(rgba, mode="RGBA").save(cutout_dir / f"{record['id']}.png")
    with open(out / MANIFEST_NAME, "w") as fh:
        json.dump(library.manifest, fh, indent=1)


def library_from_objects(objects, annots, rules=FilterRules()):
    """Filter aligned (objects, annotations) into a library in stable order.

    Raises if no object survives the filters (an empty library is useless).
    """
    if len(objects) != len(annots):
        raise ValueError(f"{len(objects)} objects but {len(annots)} annotations")
    kept = [
        (obj, annot) for obj, annot in zip(objects, annots) if rules.keeps(obj, annot)
    ]
    if not kept:
        raise LibraryIntegrityError("empty library: no objects survived the filters")
    kept.sort(key=lambda pair: (pair[0].source_id, pair[1].instance_index))
    manifest = [
        _manifest_record(_cutout_id(obj.source_id, annot.instance_index), obj)
        for obj, annot in kept
    ]
    return OccluderLibrary(objects=[obj for obj, _ in kept], manifest=manifest)


def build_library(dataset_root, rules=FilterRules(), out_dir=None, split="trainval",
                  n_threads=1):
    """Parse, extract and filter a VOC tree into an occluder library.

    Writes the library to out_dir when given.
    """
    objects, annots = collect_voc_objects(dataset_root, split=split, n_threads=n_threads)
    library = library_from_objects(objects, annots, rules)
    if out_dir is not None:
        save_library(library, out_dir)
    return library


def load_library(path):
    """Load a library directory, validating every cutout against its manifest."""
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise LibraryIntegrityError(f"missing manifest: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise LibraryIntegrityError(f"corrupt manifest {manifest_path}: {exc}") from exc
    objects = []
    for record in manifest:
        png_path = root / CUTOUT_DIR / f"{record['id']}.png"
        if not png_path.is_file():
            raise LibraryIntegrityError(f"missing cutout file: {png_path}")
        rgba = np.asarray(Image.open(png_path))
        if rgba.ndim != 3 or rgba.shape[2] != 4:
            raise LibraryIntegrityError(f"{png_path} is not an RGBA image")
        pixels, alpha = rgba[:, :, :3], rgba[:, :, 3]
        if not np.all(np.isin(alpha, (0, 255))):
            raise LibraryIntegrityError(f"{png_path} has non-binary alpha")
        if (record["height"], record["width"]) != alpha.shape:
            raise LibraryIntegrityError(
                f"{png_path}: size {alpha.shape[::-1]} does not match manifest "
                f"({record['width']}x{record['height']})"
            )
        area = int(np.count_nonzero(alpha))
        if area != record["area_px"]:
            raise LibraryIntegrityError(
                f"{png_path}: manifest area {record['area_px']} but mask has "
                f"{area} opaque pixels"
            )
        try:
            objects.append(
                SegmentedObject(
                    pixels=np.ascontiguousarray(pixels),
                    alpha=np.ascontiguousarray(alpha),
                    area_px=area,
                    class_name=record["class"],
                    source_id=record["source_id"],
                )
            )
        except ValueError as exc:
            raise LibraryIntegrityError(f"{png_path}: {exc}") from exc
    return OccluderLibrary(objects=objects, manifest=manifest)
