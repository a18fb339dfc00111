"""Command-line front end.

Every command prints exactly one JSON document on stdout; diagnostics go to
stderr.  Exit codes: 0 success, 1 validation findings (or an incorrect
placement), 2 usage/config error, 3 data error.
"""

from __future__ import annotations

import argparse
import enum
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .augment import DEFAULT_MIN_AREA, augment_dataset, load_image, load_pipeline, save_image
from .coco import RLE, parse_dataset, serialize_dataset, validate
from .errors import AmbiguityError, ConfigError, GeometryError, MultilabelError
from .geometry import rasterize_polygon, rle_decode
from .labelstudio import convert, load_category_specs, parse_jsonmin
from .post_detect import (
    coco_to_index,
    compare_depth_methods,
    depth_from_keypoint,
    depth_from_mask,
    load_depth,
    verify_configuration,
)

JOBS_ENV = "MULTILABEL_COCO_JOBS"


class ExitStatus(enum.IntEnum):
    OK = 0
    FINDINGS = 1
    USAGE = 2
    DATA = 3


class _Fail(Exception):
    def __init__(self, status: ExitStatus, message: str, payload=None):
        super().__init__(message)
        self.status = status
        self.payload = payload


def _emit(doc) -> None:
    sys.stdout.write(json.dumps(doc, allow_nan=False) + "\n")


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_text(path: Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


def _read_text(path, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise _Fail(ExitStatus.USAGE, f"{what} file not found: {path}") from None
    except OSError as exc:
        raise _Fail(ExitStatus.DATA, f"cannot read {what} file {path}: {exc}") from None


def _load_coco(path):
    return parse_dataset(_read_text(path, "COCO"))


def _annotation(ds, annotation_id: int):
    try:
        return ds.annotation_by_id(annotation_id)
    except KeyError:
        raise _Fail(ExitStatus.DATA, f"annotation {annotation_id} not found") from None


def _mask_of(ds, ann):
    img = ds.image_by_id(ann.image_id)
    if isinstance(ann.segmentation, RLE):
        return rle_decode(ann.segmentation)
    return rasterize_polygon(ann.segmentation, img.height, img.width)


def _labeled_keypoints(ann):
    return [(x, y) for x, y, v in ann.keypoint_triples if v > 0]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_convert(args) -> ExitStatus:
    tasks = parse_jsonmin(_read_text(args.tasks, "tasks"))
    if not Path(args.categories).exists():
        raise _Fail(ExitStatus.USAGE, f"categories file not found: {args.categories}")
    specs = load_category_specs(args.categories)
    if args.images_dir is not None:
        missing = [t.file_name for t in tasks if not (Path(args.images_dir) / t.file_name).is_file()]
        if missing:
            raise _Fail(ExitStatus.DATA, f"image file(s) not found in {args.images_dir}: {missing}")
    ds = convert(tasks, specs)
    text = serialize_dataset(ds)
    _atomic_write_text(Path(args.out), text)
    _emit({
        "images": len(ds.images),
        "annotations": len(ds.annotations),
        "keypoints": sum(a.num_keypoints for a in ds.annotations),
        "categories": len(ds.categories),
        "out": str(args.out),
    })
    return ExitStatus.OK


def cmd_validate(args) -> ExitStatus:
    ds = _load_coco(args.coco)
    violations = validate(ds)
    lines = ",\n".join(json.dumps(v.to_json()) for v in violations)
    sys.stdout.write(f"[\n{lines}\n]\n" if lines else "[]\n")
    if violations:
        _note(f"{len(violations)} violation(s)")
        return ExitStatus.FINDINGS
    return ExitStatus.OK


def _default_jobs() -> int:
    env = os.environ.get(JOBS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise _Fail(ExitStatus.USAGE, f"{JOBS_ENV} must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def cmd_augment(args) -> ExitStatus:
    ds = _load_coco(args.coco)
    if not Path(args.pipeline).exists():
        raise _Fail(ExitStatus.USAGE, f"pipeline file not found: {args.pipeline}")
    config = load_pipeline(args.pipeline)
    if args.seed is not None:
        config = type(config)(config.transforms, config.multiplicity, args.seed)
    jobs = args.jobs if args.jobs is not None else _default_jobs()
    if jobs < 1:
        raise _Fail(ExitStatus.USAGE, "--jobs must be >= 1")
    images_dir = Path(args.images_dir)
    out_dir = Path(args.out_dir)

    out, rasters = augment_dataset(ds, lambda name: load_image(images_dir / name), config,
                                   jobs=jobs, min_area=args.min_area)
    text = serialize_dataset(out)

    # everything is computed before the first write
    for img in ds.images:
        src = images_dir / img.file_name
        dst = out_dir / img.file_name
        if src.resolve() != dst.resolve():
            try:
                _atomic_write_bytes(dst, src.read_bytes())
            except OSError as exc:
                raise _Fail(ExitStatus.DATA, f"cannot copy {src}: {exc}") from None
    for name, raster in rasters:
        dst = out_dir / name
        dst.parent.mkdir(parents=True, exist_ok=True)
        tmp = dst.with_name(f".{dst.stem}.tmp{dst.suffix}")
        save_image(raster, tmp)
        os.replace(tmp, dst)
    coco_path = out_dir / "annotations.json"
    _atomic_write_text(coco_path, text)
    _emit({
        "source_images": len(ds.images),
        "images": len(out.images),
        "annotations": len(out.annotations),
        "multiplicity": config.multiplicity,
        "seed": config.seed,
        "coco": str(coco_path),
    })
    return ExitStatus.OK


def cmd_orient(args) -> ExitStatus:
    ds = _load_coco(args.coco)
    ann = _annotation(ds, args.annotation_id)
    kps = _labeled_keypoints(ann)
    if len(kps) < 3:
        raise _Fail(ExitStatus.DATA, f"annotation {ann.id} has {len(kps)} labeled keypoints; need 3",
                    {"placement": "undecidable"})
    try:
        verdict = verify_configuration(_mask_of(ds, ann), coco_to_index(kps), args.expected_side)
    except (AmbiguityError, GeometryError) as exc:
        raise _Fail(ExitStatus.DATA, f"configuration undecidable: {exc}", {"placement": "undecidable"}) from None
    _emit({"annotation_id": ann.id, **verdict.to_json()})
    return ExitStatus.OK if verdict.correct else ExitStatus.FINDINGS


def _finite(x: float):
    return x if math.isfinite(x) else None


def cmd_depth(args) -> ExitStatus:
    ds = _load_coco(args.coco)
    ann = _annotation(ds, args.annotation_id)
    if not Path(args.depth).exists():
        raise _Fail(ExitStatus.USAGE, f"depth file not found: {args.depth}")
    try:
        depth = load_depth(args.depth)
    except OSError as exc:
        raise _Fail(ExitStatus.DATA, f"cannot read depth map: {exc}") from None
    img = ds.image_by_id(ann.image_id)
    if (depth.width, depth.height) != (img.width, img.height):
        raise _Fail(ExitStatus.DATA, f"depth map is {depth.width}x{depth.height}, "
                                     f"image is {img.width}x{img.height}")
    mask = _mask_of(ds, ann)
    kp = None
    if args.method in ("keypoint", "both"):
        triples = ann.keypoint_triples
        if args.keypoint_index is not None:
            if not (0 <= args.keypoint_index < len(triples)) or triples[args.keypoint_index][2] == 0:
                raise _Fail(ExitStatus.DATA, f"keypoint {args.keypoint_index} is not labeled")
            x, y, _ = triples[args.keypoint_index]
        else:
            labeled = _labeled_keypoints(ann)
            if not labeled:
                raise _Fail(ExitStatus.DATA, f"annotation {ann.id} has no labeled keypoints")
            x, y = labeled[0]
        kp = tuple(coco_to_index([(x, y)])[0])

    doc = {"annotation_id": ann.id}
    if args.method == "mask":
        doc["mask_average"] = depth_from_mask(depth, mask).to_json()
    elif args.method == "keypoint":
        doc["keypoint"] = depth_from_keypoint(depth, kp).to_json()
    else:
        res = compare_depth_methods(depth, mask, kp)
        doc["mask_average"] = res["mask_average"].to_json()
        doc["keypoint"] = res["keypoint"].to_json()
        doc["range_ratio"] = _finite(res["range_ratio"])
    _emit(doc)
    return ExitStatus.OK


def _summary(values) -> dict:
    if not values:
        return {"count": 0, "min": 0, "max": 0, "mean": 0, "median": 0}
    arr = np.asarray(values, dtype=float)
    return {"count": int(arr.size), "min": float(arr.min()), "max": float(arr.max()),
            "mean": float(arr.mean()), "median": float(np.median(arr))}


def cmd_stats(args) -> ExitStatus:
    ds = _load_coco(args.coco)
    per_cat = []
    for cat in sorted(ds.categories, key=lambda c: c.id):
        anns = [a for a in ds.annotations if a.category_id == cat.id]
        per_cat.append({"id": cat.id, "name": cat.name, "annotations": len(anns),
                        "keypoints_labeled": sum(a.num_keypoints for a in anns)})
    vis = {"0": 0, "1": 0, "2": 0}
    for a in ds.annotations:
        for _, _, v in a.keypoint_triples:
            vis[str(v)] = vis.get(str(v), 0) + 1
    _emit({
        "images": len(ds.images),
        "annotations": len(ds.annotations),
        "categories": per_cat,
        "keypoint_visibility": vis,
        "area": _summary([a.area for a in ds.annotations]),
    })
    return ExitStatus.OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multilabel-coco", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("convert", help="Label Studio JSON-min -> combined COCO")
    c.add_argument("--tasks", required=True)
    c.add_argument("--categories", required=True)
    c.add_argument("--images-dir", help="check that every task image exists here")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_convert)

    v = sub.add_parser("validate", help="check a COCO file")
    v.add_argument("coco")
    v.set_defaults(func=cmd_validate)

    a = sub.add_parser("augment", help="expand a dataset with augmented copies")
    a.add_argument("--coco", required=True)
    a.add_argument("--images-dir", required=True)
    a.add_argument("--pipeline", required=True)
    a.add_argument("--out-dir", required=True)
    a.add_argument("--jobs", type=int, help=f"worker threads (default: ${JOBS_ENV} or CPU count)")
    a.add_argument("--seed", type=int, help="override the pipeline seed")
    a.add_argument("--min-area", type=float, default=DEFAULT_MIN_AREA)
    a.set_defaults(func=cmd_augment)

    o = sub.add_parser("orient", help="verify object placement from mask + keypoints")
    o.add_argument("--coco", required=True)
    o.add_argument("--annotation-id", type=int, required=True)
    o.add_argument("--expected-side", choices=("positive", "negative"), required=True)
    o.set_defaults(func=cmd_orient)

    d = sub.add_parser("depth", help="object depth from mask average and/or a keypoint")
    d.add_argument("--coco", required=True)
    d.add_argument("--annotation-id", type=int, required=True)
    d.add_argument("--depth", required=True)
    d.add_argument("--method", choices=("mask", "keypoint", "both"), default="both")
    d.add_argument("--keypoint-index", type=int, help="keypoint slot to sample (default: first labeled)")
    d.set_defaults(func=cmd_depth)

    s = sub.add_parser("stats", help="dataset statistics")
    s.add_argument("coco")
    s.set_defaults(func=cmd_stats)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = int(exc.code or 0)
        if code:
            # argparse already explained the problem on stderr
            _emit({"error": "usage error", "status": code})
        return code
    try:
        return int(args.func(args))
    except _Fail as exc:
        _note(f"error: {exc}")
        _emit({"error": str(exc), "status": int(exc.status), **(exc.payload or {})})
        return int(exc.status)
    except ConfigError as exc:
        _note(f"config error: {exc}")
        _emit({"error": str(exc), "status": int(ExitStatus.USAGE)})
        return int(ExitStatus.USAGE)
    except MultilabelError as exc:
        _note(f"error: {exc}")
        _emit({"error": str(exc), "status": int(ExitStatus.DATA)})
        return int(ExitStatus.DATA)


if __name__ == "__main__":
    sys.exit(main())
