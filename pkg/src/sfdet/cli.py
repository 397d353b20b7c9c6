"""``sfdet`` command-line front end.

Every subcommand resolves its parameters as built-in defaults, then values
from ``--config`` (either top-level keys or a section named after the
subcommand), then explicit flags. The resolved parameters and tool version
are embedded in every report.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .anchors import (ADJUSTED_SIZES, DEFAULT_RATIOS, FPN_STRIDES, ORIGINAL_SIZES, AnchorSpec,
                      CoverageReport, coverage_report, multi_anchor_lattice, worst_case_iou)
from .costmodel import BUNDLED_MODELS, load_model_config, reduction
from .dota import (annotations_extent, clip_annotations, quad_to_obox, read_annotation_dir,
                   serialize_annotations, size_histogram, tile_plan)
from .formats import dumps_csv, dumps_json, dumps_table, encode_tensor, read_tensor, round6
from .oracles import reference_nms, worst_case_iou_grid
from .geom import OBox, iou_obb
from .proposals import (PROPOSAL_HEADER, DEFAULT_BUDGETS, PipelineConfig, Proposal,
                        proposals_to_json, proposals_to_rows, read_proposals, roi_budget_sweep,
                        rotated_nms, rpn_postprocess)
from .scoremap import Kernel, apply_hpf, convolve2d, make_kernel, sigmoid_map

DEFAULTS = {
    "coverage": {
        "annotations": None, "sizes": list(ADJUSTED_SIZES), "strides": list(FPN_STRIDES),
        "ratios": list(DEFAULT_RATIOS), "threshold": 0.5, "mode": "hbb", "compare": False,
        "image_size": None, "jobs": 1,
    },
    "worstcase": {
        "anchor_sizes": [16, 32, 64, 128, 256], "strides": [4, 8, 16, 32, 64],
        "object_sizes": [16, 32, 64, 128, 256], "threshold": 0.5, "self_test": False,
        "grid_step": 0.01,
    },
    "propose": {
        "scores": None, "deltas": None, "stride": 8, "sizes": list(ADJUSTED_SIZES),
        "ratios": list(DEFAULT_RATIOS), "k_pre": 2000, "k_post": 2000, "nms_threshold": 0.8,
        "hpf": False, "hpf_kind": "unsharp", "hpf_size": 5, "sweep": None, "jobs": 1,
    },
    "filter": {
        "input": None, "kind": "unsharp", "size": 5, "kernel": None, "sigmoid": False,
        "no_clip": False,
    },
    "nms": {"input": None, "threshold": 0.8, "self_test": 0},
    "flops": {"model": "oriented-rcnn"},
    "tile": {
        "image_size": None, "annotations": None, "patch": 1024, "overlap": 200, "step": None,
        "min_area_fraction": 0.5,
    },
    "stats": {
        "annotations": None, "bins": [0, 8, 16, 32, 64, 128, 256, 512, 1024, 4096],
    },
}


class CLIError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with parameter values")
    p.add_argument("--output", "-o", help="output path (default: stdout)")
    p.add_argument("--format", choices=("json", "csv", "table"), default=None)
    p.add_argument("--seed", type=int, default=0, help="seed for self-test sampling")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sfdet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"sfdet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("coverage", help="matched-anchor ratio per pyramid level")
    _common(p)
    p.add_argument("--annotations", help="directory of DOTA label files")
    p.add_argument("--sizes", type=float, nargs="+")
    p.add_argument("--strides", type=float, nargs="+")
    p.add_argument("--ratios", type=float, nargs="+")
    p.add_argument("--threshold", type=float)
    p.add_argument("--mode", choices=("hbb", "obb"))
    p.add_argument("--compare", action="store_true", default=None,
                   help="report both the original and the adjusted anchor sizes")
    p.add_argument("--image-size", type=int, nargs=2, metavar=("W", "H"))
    p.add_argument("--jobs", type=int)

    p = sub.add_parser("worstcase", help="worst-case anchor IoU table")
    _common(p)
    p.add_argument("--anchor-sizes", type=float, nargs="+")
    p.add_argument("--strides", type=float, nargs="+")
    p.add_argument("--object-sizes", type=float, nargs="+")
    p.add_argument("--threshold", type=float)
    p.add_argument("--self-test", action="store_true", default=None,
                   help="cross-check every cell against an offset-grid search")
    p.add_argument("--grid-step", type=float)

    p = sub.add_parser("propose", help="single-feature RPN post-processing")
    _common(p)
    p.add_argument("--scores", help="SFT1 logits (H, W, A)")
    p.add_argument("--deltas", help="SFT1 deltas (H, W, 5A)")
    p.add_argument("--stride", type=float)
    p.add_argument("--sizes", type=float, nargs="+")
    p.add_argument("--ratios", type=float, nargs="+")
    p.add_argument("--k-pre", type=int)
    p.add_argument("--k-post", type=int)
    p.add_argument("--nms-threshold", type=float)
    p.add_argument("--hpf", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--hpf-kind")
    p.add_argument("--hpf-size", type=int)
    p.add_argument("--sweep", type=int, nargs="*",
                   help=f"RoI budgets (no values: {' '.join(map(str, DEFAULT_BUDGETS))})")
    p.add_argument("--jobs", type=int)

    p = sub.add_parser("filter", help="apply a high-pass filter to a tensor")
    _common(p)
    p.add_argument("--input", help="SFT1 tensor or rank-2 CSV map")
    p.add_argument("--kind", choices=("unsharp", "gaussian", "laplacian", "log", "identity"))
    p.add_argument("--size", type=int)
    p.add_argument("--kernel", help="JSON file holding a square weight matrix")
    p.add_argument("--sigmoid", action="store_true", default=None)
    p.add_argument("--no-clip", action="store_true", default=None)

    p = sub.add_parser("nms", help="rotated NMS over a proposal file")
    _common(p)
    p.add_argument("--input", help="proposals as CSV or JSON")
    p.add_argument("--threshold", type=float)
    p.add_argument("--self-test", type=int, metavar="N",
                   help="check N seeded random proposal sets against a reference")

    p = sub.add_parser("flops", help="baseline vs simplified GFLOPs breakdown")
    _common(p)
    p.add_argument("--model", help=f"bundled name ({', '.join(BUNDLED_MODELS)}) or JSON path")

    p = sub.add_parser("tile", help="tile plan and label transfer")
    _common(p)
    p.add_argument("--image-size", type=int, nargs=2, metavar=("W", "H"))
    p.add_argument("--annotations", help="directory of DOTA label files")
    p.add_argument("--patch", type=int)
    p.add_argument("--overlap", type=int)
    p.add_argument("--step", type=int, help="window step; overrides --overlap")
    p.add_argument("--min-area-fraction", type=float)

    p = sub.add_parser("stats", help="object-size histogram")
    _common(p)
    p.add_argument("--annotations", help="directory of DOTA label files")
    p.add_argument("--bins", type=float, nargs="+")
    return parser


def resolve(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[args.command])
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CLIError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise CLIError("config file must hold a JSON object")
        section = data.get(args.command, data)
        for k, v in section.items():
            key = k.replace("-", "_")
            if key in cfg:
                cfg[key] = v
    for k in cfg:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    return cfg


def _envelope(command: str, cfg: dict, body: dict) -> dict:
    return {"tool": "sfdet", "version": __version__, "command": command, "config": cfg, **body}


def _provenance_line(command: str, cfg: dict) -> str:
    return f"# sfdet {__version__} {command} " + json.dumps(round6(cfg), sort_keys=True) + "\n"


def _tabular(fmt: str, command: str, cfg: dict, header, rows, body: dict) -> str:
    if fmt == "json":
        return dumps_json(_envelope(command, cfg, body))
    if fmt == "csv":
        return _provenance_line(command, cfg) + dumps_csv(header, rows)
    return _provenance_line(command, cfg) + dumps_table(header, rows)


def _load_dir(directory) -> dict:
    if directory is None:
        raise CLIError("--annotations is required")
    try:
        files = read_annotation_dir(directory)
    except FileNotFoundError as exc:
        raise CLIError(str(exc)) from None
    return files


def cmd_coverage(cfg: dict, fmt: str) -> str:
    files = _load_dir(cfg["annotations"])
    if not cfg["sizes"]:
        raise CLIError("anchor spec needs at least one size")
    sets = {"adjusted": cfg["sizes"]}
    if cfg["compare"]:
        sets = {"original": list(ORIGINAL_SIZES), "adjusted": list(ADJUSTED_SIZES)}
    total = sum(len(v) for v in files.values())
    if total == 0:
        raise CLIError("no parsable annotations found")
    reports = {}
    for name, sizes in sets.items():
        spec = AnchorSpec(tuple(sizes), tuple(cfg["ratios"]), tuple(cfg["strides"]))
        counts = [0] * len(spec.strides)
        unmatched = 0
        for annos in files.values():
            if not annos:
                continue
            objects = [quad_to_obox(a) for a in annos]
            if cfg["image_size"]:
                w, h = cfg["image_size"]
            else:
                w, h = (math.ceil(v) for v in annotations_extent(annos))
            rep = coverage_report(objects, spec, max(w, 1), max(h, 1), cfg["threshold"],
                                  cfg["mode"], cfg["jobs"])
            counts = [a + b for a, b in zip(counts, rep.matched_counts)]
            unmatched += rep.unmatched_count
        reports[name] = CoverageReport(spec.strides, spec.base_sizes, cfg["threshold"], total,
                                       counts, unmatched)
    header = ("anchor_set", "level", "matched_count", "matched_fraction")
    rows = [(name,) + row for name, rep in reports.items() for row in rep.rows()]
    if len(reports) == 1:
        header, rows = header[1:], [r[1:] for r in rows]
    body = {"reports": {k: v.to_dict() for k, v in reports.items()}}
    return _tabular(fmt, "coverage", cfg, header, rows, body)


def cmd_worstcase(cfg: dict, fmt: str) -> str:
    for key in ("anchor_sizes", "strides", "object_sizes"):
        if not cfg[key]:
            raise CLIError(f"{key.replace('_', '-')} must not be empty")
    rows = []
    failures = 0
    for a in sorted(set(cfg["anchor_sizes"])):
        for s in sorted(set(cfg["strides"])):
            for o in sorted(set(cfg["object_sizes"])):
                v = worst_case_iou(a, s, o)
                row = [a, s, o, v, v < cfg["threshold"]]
                if cfg["self_test"]:
                    g = worst_case_iou_grid(a, s, o, cfg["grid_step"])
                    ok = abs(g - v) <= 1e-3
                    failures += not ok
                    row += [g, ok]
                rows.append(tuple(row))
    header = ["anchor_size", "stride", "object_size", "worst_iou", "below_threshold"]
    if cfg["self_test"]:
        header += ["grid_iou", "agrees"]
    body = {"rows": [dict(zip(header, r)) for r in rows]}
    if cfg["self_test"]:
        body["self_test_failures"] = failures
    out = _tabular(fmt, "worstcase", cfg, header, rows, body)
    if failures:
        raise CLIError(f"self-test failed on {failures} cells", out)
    return out


def _pipeline_config(cfg: dict) -> PipelineConfig:
    return PipelineConfig(int(cfg["k_pre"]), int(cfg["k_post"]), float(cfg["nms_threshold"]),
                          bool(cfg["hpf"]), make_kernel(cfg["hpf_kind"], int(cfg["hpf_size"])))


def _read(path, what: str) -> np.ndarray:
    if path is None:
        raise CLIError(f"--{what} is required")
    try:
        return read_tensor(path)
    except OSError as exc:
        raise CLIError(f"cannot read {what} file: {exc}") from None


def cmd_propose(cfg: dict, fmt: str) -> str:
    scores = _read(cfg["scores"], "scores")
    deltas = _read(cfg["deltas"], "deltas")
    if scores.ndim == 2:
        scores = scores[:, :, None]
    if scores.ndim != 3 or deltas.ndim != 3:
        raise CLIError(f"tensor shape mismatch: scores {scores.shape}, deltas {deltas.shape}")
    sizes = tuple(cfg["sizes"])
    spec = AnchorSpec(sizes, tuple(cfg["ratios"]), (cfg["stride"],) * len(sizes))
    lattice = multi_anchor_lattice(spec, cfg["stride"], scores.shape[0], scores.shape[1])
    pcfg = _pipeline_config(cfg)
    if cfg["sweep"] is not None:
        budgets = cfg["sweep"] or list(DEFAULT_BUDGETS)
        cfg["sweep"] = budgets
        rows = roi_budget_sweep(scores, deltas, lattice, budgets, pcfg)
        header = ("budget", "proposal_count", "mean_pairwise_iou")
        table = [(r.budget, r.proposal_count, r.mean_pairwise_iou) for r in rows]
        body = {"sweep": [dict(zip(header, t)) for t in table]}
        return _tabular(fmt, "propose", cfg, header, table, body)
    props = rpn_postprocess(scores, deltas, lattice, pcfg, n_jobs=cfg["jobs"])
    body = {"proposals": proposals_to_json(props)}
    return _tabular(fmt, "propose", cfg, PROPOSAL_HEADER, proposals_to_rows(props), body)


def cmd_filter(cfg: dict, fmt: str) -> bytes:
    m = _read(cfg["input"], "input")
    if cfg["kernel"]:
        try:
            weights = json.loads(Path(cfg["kernel"]).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CLIError(f"cannot read kernel file: {exc}") from None
        if isinstance(weights, dict):
            weights = weights.get("weights")
        kernel = Kernel(np.asarray(weights, dtype=float), "custom")
    else:
        kernel = make_kernel(cfg["kind"], int(cfg["size"]))
    if m.ndim not in (2, 3):
        raise CLIError(f"filter expects a rank-2 or rank-3 map, got rank {m.ndim}")
    x = sigmoid_map(m) if cfg["sigmoid"] else m.astype(float)
    out = convolve2d(x, kernel) if cfg["no_clip"] else apply_hpf(x, kernel)
    return encode_tensor(out)


def _random_proposals(rng: np.random.Generator, n: int) -> list[Proposal]:
    out = []
    for _ in range(n):
        box = OBox(*rng.uniform(0, 200, 2), *rng.uniform(4, 80, 2), rng.uniform(-np.pi, np.pi))
        out.append(Proposal(box, float(rng.uniform())))
    return out


def cmd_nms(cfg: dict, fmt: str, seed: int) -> str:
    thr = float(cfg["threshold"])
    if cfg["self_test"]:
        rng = np.random.default_rng(seed)
        failures = 0
        for _ in range(int(cfg["self_test"])):
            props = _random_proposals(rng, int(rng.integers(1, 60)))
            kept = rotated_nms(props, thr)
            ok = [id(p) for p in kept] == [id(p) for p in reference_nms(props, thr)]
            ok &= rotated_nms(kept, thr) == kept
            ok &= all(iou_obb(p.box, q.box) < thr for n, p in enumerate(kept) for q in kept[n + 1:])
            failures += not ok
        body = {"sets": int(cfg["self_test"]), "failures": failures}
        out = _tabular(fmt, "nms", cfg, ("sets", "failures"), [(body["sets"], failures)], body)
        if failures:
            raise CLIError(f"nms self-test failed on {failures} sets", out)
        return out
    if cfg["input"] is None:
        raise CLIError("--input is required")
    path = Path(cfg["input"])
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CLIError(f"cannot read proposals: {exc}") from None
    kind = "json" if path.suffix.lower() == ".json" else "csv"
    props = read_proposals(text, kind)
    kept = rotated_nms(props, thr)
    body = {"proposals": proposals_to_json(kept)}
    return _tabular(fmt, "nms", cfg, PROPOSAL_HEADER, proposals_to_rows(kept), body)


def cmd_flops(cfg: dict, fmt: str) -> str:
    model = load_model_config(cfg["model"])
    base, simple = model.breakdowns()
    red = reduction(base, simple)
    header = ("model", "backbone", "neck", "rpn", "high_pass_filter", "roi_head", "total")

    def row(label, b):
        return (label, b.backbone_gflops, b.neck_gflops, b.rpn_gflops, b.filter_gflops,
                b.roi_head_gflops, b.total_gflops)

    rows = [row(model.name, base), row(f"single-feature {model.name}", simple)]
    body = {"model": model.to_dict(), "baseline": base.to_dict(), "simplified": simple.to_dict(),
            "reduction": red}
    if fmt == "json":
        return dumps_json(_envelope("flops", cfg, body))
    text = _tabular(fmt, "flops", cfg, header, rows, body)
    if fmt == "table":
        text += f"total reduction: {red * 100:.1f}%\n"
    return text


def cmd_tile(cfg: dict, fmt: str, output) -> str:
    patch, overlap, step = int(cfg["patch"]), int(cfg["overlap"]), cfg["step"]
    if step is not None:
        step = int(step)
        overlap = patch - step
    if not patch > overlap:
        raise CLIError(f"patch ({patch}) must exceed overlap ({overlap})")
    header = ("image", "x_offset", "y_offset", "width", "height", "objects")
    rows = []
    if cfg["annotations"] is None:
        if not cfg["image_size"]:
            raise CLIError("give --image-size W H or --annotations DIR")
        w, h = cfg["image_size"]
        for win in tile_plan(int(w), int(h), patch, overlap):
            rows.append(("-", win.x_offset, win.y_offset, win.width, win.height, 0))
    else:
        files = _load_dir(cfg["annotations"])
        outdir = Path(output) if output else None
        if outdir is None:
            raise CLIError("--output DIR is required when transferring annotations")
        outdir.mkdir(parents=True, exist_ok=True)
        for stem, annos in files.items():
            if cfg["image_size"]:
                w, h = cfg["image_size"]
            else:
                w, h = (max(1, math.ceil(v)) for v in annotations_extent(annos))
            for win in tile_plan(int(w), int(h), patch, overlap):
                kept = clip_annotations(annos, win, float(cfg["min_area_fraction"]))
                name = f"{stem}__{win.x_offset}_{win.y_offset}.txt"
                (outdir / name).write_text(serialize_annotations(kept), encoding="utf-8")
                rows.append((stem, win.x_offset, win.y_offset, win.width, win.height, len(kept)))
    body = {"windows": [dict(zip(header, r)) for r in rows]}
    return _tabular(fmt, "tile", cfg, header, rows, body)


def cmd_stats(cfg: dict, fmt: str) -> str:
    files = _load_dir(cfg["annotations"])
    annos = [a for v in files.values() for a in v]
    if not annos:
        raise CLIError("no parsable annotations found")
    edges = [float(e) for e in cfg["bins"]]
    counts = size_histogram(annos, edges)
    header = ("bin_low", "bin_high", "count")
    rows = [(lo, hi, int(c)) for lo, hi, c in zip(edges, edges[1:], counts)]
    cats: dict[str, int] = {}
    for a in annos:
        cats[a.category] = cats.get(a.category, 0) + 1
    body = {"num_objects": len(annos), "num_files": len(files),
            "histogram": [dict(zip(header, r)) for r in rows], "categories": cats}
    return _tabular(fmt, "stats", cfg, header, rows, body)


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except CLIError as exc:
        print(f"sfdet: error: {exc.args[0]}", file=sys.stderr)
        return 2
    try:
        cfg = resolve(args)
        fmt = args.format or ("table" if args.command == "flops" else "json")
        cmd = args.command
        if cmd == "filter":
            result = cmd_filter(cfg, fmt)
        elif cmd == "nms":
            result = cmd_nms(cfg, fmt, args.seed)
        elif cmd == "tile":
            result = cmd_tile(cfg, fmt, args.output if cfg["annotations"] else None)
            if cfg["annotations"]:
                sys.stdout.write(result)
                return 0
        else:
            result = globals()[f"cmd_{cmd}"](cfg, fmt)
        _emit(result, args.output)
        return 0
    except CLIError as exc:
        if len(exc.args) > 1:
            _emit(exc.args[1], args.output)
        print(f"sfdet: error: {exc.args[0]}", file=sys.stderr)
        return 1
    except (ValueError, OSError, KeyError, TypeError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"sfdet: error: {msg}", file=sys.stderr)
        return 1


def _emit(result, output) -> None:
    if output:
        mode = "wb" if isinstance(result, bytes) else "w"
        kwargs = {} if mode == "wb" else {"encoding": "utf-8", "newline": "\n"}
        with open(output, mode, **kwargs) as fh:
            fh.write(result)
    elif isinstance(result, bytes):
        sys.stdout.buffer.write(result)
        sys.stdout.buffer.flush()
    else:
        sys.stdout.write(result)


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
