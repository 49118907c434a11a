"""``iqm-curator`` command line.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import OutlierReport, compare_splits, iqr_outliers, outlier_table, rank_iqms
from .errors import PairingError
from .iqm import METRICS, compute_iqm_vector, read_iqm_csv, write_iqm_csv
from .phantom import PhantomSpec, expected_iqms, generate
from .report import render_report
from .seg_metrics import evaluate_cohort, read_scores_csv, write_scores_csv
from .splits import STRATEGIES, Cohort, iqm_split, kfold, manifests_to_json
from .tables import read_csv_rows, render_csv
from .volume_io import atomic_write_bytes, load_nifti, save_nifti

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

DEFAULTS = {
    "k": 5,
    "top_k": 8,
    "threshold": None,
    "patch_halfwidth": 2,
    "min_fg": 100,
    "min_bg": 25,
    "seed": 0,
    "threads": None,
    "score": "dice",
    "baseline": "kfold",
    "dtype": "float64",
}
# not echoed into outputs: results must not depend on them
_UNECHOED = {"threads", "config", "command", "func"}

NIFTI_SUFFIXES = (".nii.gz", ".nii")


class DataError(Exception):
    pass


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    atomic_write_bytes(path, text.encode("utf-8"))


def _provenance(cfg: dict) -> list[str]:
    echoed = {k: v for k, v in sorted(cfg.items()) if k not in _UNECHOED}
    return [f"iqm-curator {__version__}", "config: " + json.dumps(echoed, sort_keys=True)]


def _nifti_files(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise DataError(f"{directory} is not a directory")
    return sorted(p for p in directory.iterdir() if p.is_file() and p.name.endswith(NIFTI_SUFFIXES))


def _pool_map(fn, items, threads):
    if threads == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# commands


def cmd_scan(cfg: dict) -> int:
    files = _nifti_files(Path(cfg["image_dir"]))
    if not files:
        raise DataError(f"no NIfTI files in {cfg['image_dir']}")

    def run(path):
        try:
            v = load_nifti(path)
            return compute_iqm_vector(
                v, half_width=cfg["patch_halfwidth"], min_fg=cfg["min_fg"], min_bg=cfg["min_bg"]
            ), None
        except (ValueError, OSError, TypeError) as exc:
            return None, f"{type(exc).__name__}: {exc}"

    results = _pool_map(run, files, cfg["threads"])
    rows = [r for r, _ in results if r is not None]
    errors = [(p.name, err) for p, (_, err) in zip(files, results) if err is not None]
    out = Path(cfg["output"])
    prov = _provenance(cfg)
    _write_text(out.with_name(out.name + ".errors.csv"), render_csv(("file", "error"), errors, prov))
    if not rows:
        raise DataError(f"no readable images in {cfg['image_dir']} ({len(errors)} failed)")
    _write_text(out, write_iqm_csv(rows, prov))
    print(f"scanned {len(rows)} images, {len(errors)} errors -> {out}")
    return EXIT_OK


def cmd_eval(cfg: dict) -> int:
    try:
        rows = evaluate_cohort(cfg["pred_dir"], cfg["gt_dir"], threads=cfg["threads"])
    except PairingError as exc:
        raise DataError(str(exc)) from exc
    _write_text(cfg["output"], write_scores_csv(rows, _provenance(cfg)))
    print(f"scored {len(rows)} pairs -> {cfg['output']}")
    return EXIT_OK


def _score_column(rows, name: str) -> dict[str, float]:
    if name not in ("dice", "hd95", "dice_whole", "dice_core", "dice_enh"):
        raise DataError(f"unknown score column {name!r}")
    return {r.image_id: getattr(r, name) for r in rows}


def cmd_correlate(cfg: dict) -> int:
    iqms = read_iqm_csv(cfg["iqm_csv"])
    scores = _score_column(read_scores_csv(cfg["scores_csv"]), cfg["score"])
    by_id = {r.image_id: r for r in iqms}
    joined = sorted(set(by_id) & set(scores))
    print(f"joined {len(joined)} ids ({len(by_id)} IQM rows, {len(scores)} score rows)")
    if not joined:
        raise DataError("IQM and score tables share no image ids")
    report = rank_iqms(
        {i: by_id[i] for i in joined},
        {i: scores[i] for i in joined},
        top_k=cfg["top_k"],
        threshold=cfg["threshold"],
    )
    outliers = []
    for m in METRICS:
        vals = [getattr(r, m) for r in iqms]
        if sum(not math.isnan(v) for v in vals) >= 4:
            outliers.append(iqr_outliers(vals, [r.image_id for r in iqms], m))
    prov = _provenance(cfg)
    out = Path(cfg["output_dir"])
    _write_text(out / "correlations.csv", report.to_csv(prov))
    _write_text(out / "outliers.csv", outlier_table(outliers, prov))
    for e in report.entries:
        mark = "*" if e.selected else " "
        print(f"{mark} {e.iqm:5s} r={e.r: .4f} n={e.n_pairs}" + (f" ({e.reason})" if e.reason else ""))
    return EXIT_OK


def cmd_split(cfg: dict) -> int:
    iqms = read_iqm_csv(cfg["iqm_csv"])
    strategy = cfg["strategy"]
    if strategy == "kfold":
        manifests = kfold([r.image_id for r in iqms], k=cfg["k"], seed=cfg["seed"])
        text = manifests_to_json(manifests)
    else:
        if not cfg.get("metric"):
            raise _UsageError(f"--metric is required for the {strategy} strategy")
        try:
            cohort = Cohort(iqms)
        except ValueError as exc:
            raise DataError(str(exc)) from exc
        m = iqm_split(strategy, cohort, cfg["metric"], k=cfg["k"])
        text = m.to_json()
        print(f"{strategy} split on {cfg['metric']}: {len(m.train)} train / {len(m.test)} test"
              + (f", {len(m.excluded)} excluded" if m.excluded else ""))
    _write_text(cfg["output"], text)
    return EXIT_OK


def _read_outliers(path) -> list[OutlierReport]:
    header, rows = read_csv_rows(path)
    need = ("iqm", "q1", "q2", "q3", "lo", "hi", "mean", "outlier_ids")
    if tuple(header) != need:
        raise ValueError(f"{path}: header must be {','.join(need)}")
    out = []
    for lineno, r in rows:
        try:
            out.append(
                OutlierReport(
                    r["iqm"], *(float(r[c]) for c in need[1:7]),
                    [i for i in r["outlier_ids"].split(";") if i],
                )
            )
        except ValueError as exc:
            raise ValueError(f"{path}: line {lineno}: {exc}") from exc
    return out


def cmd_report(cfg: dict) -> int:
    header, corr_rows = read_csv_rows(cfg["correlations_csv"])
    if tuple(header) != ("iqm", "r", "n_pairs", "rank", "selected"):
        raise DataError(f"{cfg['correlations_csv']}: unexpected header {','.join(header)}")
    for lineno, r in corr_rows:
        try:
            float(r["r"])
            int(r["n_pairs"])
        except ValueError:
            raise DataError(f"{cfg['correlations_csv']}: line {lineno}: malformed row") from None
    outliers = _read_outliers(cfg["outliers_csv"])
    iqms = read_iqm_csv(cfg["iqm"])
    scores = _score_column(read_scores_csv(cfg["scores"]), cfg["score"])
    summaries = []
    if cfg.get("split"):
        tables = {}
        for item in cfg["split"]:
            label, sep, path = item.partition("=")
            if not sep:
                raise _UsageError(f"--split expects LABEL=PATH, got {item!r}")
            tables[label] = read_scores_csv(path)
        summaries = compare_splits(tables, baseline=cfg["baseline"])
    prov = _provenance(cfg)
    doc, svgs = render_report([r for _, r in corr_rows], outliers, iqms, scores, summaries, prov, cfg["score"])
    out = Path(cfg["output_dir"])
    stamp = "<!-- " + " | ".join(p.replace("--", "- -") for p in prov) + " -->\n"
    for name, svg in svgs.items():
        _write_text(out / name, svg.replace(">\n", ">\n" + stamp, 1))
    _write_text(out / "report.html", doc)
    print(f"wrote {out / 'report.html'} and {len(svgs)} SVG files")
    return EXIT_OK


def cmd_phantom(cfg: dict) -> int:
    try:
        spec = PhantomSpec.from_json(Path(cfg["spec_json"]).read_text())
    except (ValueError, TypeError) as exc:
        raise DataError(f"invalid phantom spec: {exc}") from exc
    vol, mask = generate(spec)
    target = np.dtype(cfg["dtype"])
    if np.issubdtype(target, np.integer):
        info = np.iinfo(target)
        vol = vol.with_data(np.clip(np.rint(vol.data), info.min, info.max))
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    save_nifti(vol, out / f"{spec.id}_image.nii.gz", dtype=cfg["dtype"])
    save_nifti(mask, out / f"{spec.id}_mask.nii.gz", dtype="uint8")
    expected = expected_iqms(spec)
    doc = {
        "version": __version__,
        "config": {k: v for k, v in sorted(cfg.items()) if k not in _UNECHOED},
        "spec": spec.to_dict(),
        "expected": {m: (None if math.isnan(v) else v) for m, v in expected.metrics().items()},
    }
    _write_text(out / "expected_iqms.json", json.dumps(doc, indent=2) + "\n")
    print(f"wrote phantom {spec.id!r} to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option defaults (explicit flags win)")
    common.add_argument("--threads", type=int, help="worker threads (env IQM_CURATOR_THREADS)")

    p = _Parser(prog="iqm-curator", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"iqm-curator {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("scan", parents=[common], help="compute the 13 IQMs for every image")
    s.add_argument("image_dir")
    s.add_argument("-o", "--output", default="iqm.csv")
    s.add_argument("--patch-halfwidth", dest="patch_halfwidth", type=int)
    s.add_argument("--min-fg", dest="min_fg", type=int, help="minimum foreground pixels per slice")
    s.add_argument("--min-bg", dest="min_bg", type=int, help="minimum background pixels per slice")
    s.set_defaults(func=cmd_scan)

    s = sub.add_parser("eval", parents=[common], help="score predictions against references")
    s.add_argument("pred_dir")
    s.add_argument("gt_dir")
    s.add_argument("-o", "--output", default="scores.csv")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("correlate", parents=[common], help="rank IQMs by correlation with scores")
    s.add_argument("iqm_csv")
    s.add_argument("scores_csv")
    sel = s.add_mutually_exclusive_group()
    sel.add_argument("--top-k", dest="top_k", type=int)
    sel.add_argument("--threshold", type=float, help="select IQMs with |r| >= threshold")
    s.add_argument("--score", help="score column to correlate against (default dice)")
    s.add_argument("-o", "--output-dir", dest="output_dir", default=".")
    s.set_defaults(func=cmd_correlate)

    s = sub.add_parser("split", parents=[common], help="write a train/test manifest")
    s.add_argument("iqm_csv")
    s.add_argument("--strategy", required=True, choices=STRATEGIES)
    s.add_argument("--metric", choices=METRICS)
    s.add_argument("--k", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("-o", "--output", default="manifest.json")
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("report", parents=[common], help="render static HTML/SVG figures")
    s.add_argument("correlations_csv")
    s.add_argument("outliers_csv")
    s.add_argument("--iqm", required=True, help="iqm.csv from scan")
    s.add_argument("--scores", required=True, help="scores.csv from eval")
    s.add_argument("--split", action="append", metavar="LABEL=SCORES_CSV",
                   help="score table of a retrained split; repeat per split")
    s.add_argument("--baseline", help="label of the baseline split (default kfold)")
    s.add_argument("--score")
    s.add_argument("-o", "--output-dir", dest="output_dir", default="report")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("phantom", parents=[common], help="generate a synthetic phantom")
    s.add_argument("spec_json")
    s.add_argument("out_dir")
    s.add_argument("--dtype", choices=["uint8", "int16", "int32", "float32", "float64"],
                   help="image datatype; integer types round and clip the voxels (default float64)")
    s.set_defaults(func=cmd_phantom)
    return p


def _effective_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise _UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise _UsageError("config file must hold a JSON object")
        cfg.update({k.replace("-", "_"): v for k, v in loaded.items()})
    env = os.environ.get("IQM_CURATOR_THREADS")
    if env:
        try:
            cfg["threads"] = int(env)
        except ValueError:
            raise _UsageError(f"IQM_CURATOR_THREADS must be an integer, got {env!r}") from None
    for k, v in vars(args).items():
        if v is not None or k not in cfg:
            cfg[k] = v
    if cfg["threads"] is None:
        cfg["threads"] = os.cpu_count() or 1
    if cfg["threads"] < 1:
        raise _UsageError("--threads must be >= 1")
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _effective_config(args)
        return args.func(cfg)
    except _UsageError as exc:
        print(f"iqm-curator: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ValueError, KeyError, OSError) as exc:
        print(f"iqm-curator: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
