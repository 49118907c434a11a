"""
From images to a correlation report with the command line
=========================================================

Generate a small cohort, scan it, score made-up segmentations, rank the
metrics by their correlation with Dice and render the static report.
"""

# %%
import tempfile
from pathlib import Path

import numpy as np

from iqm_curator import PhantomSpec, generate, save_nifti
from iqm_curator.cli import main

root = Path(tempfile.mkdtemp())
(root / "images").mkdir()
rng = np.random.default_rng(11)
noise = rng.uniform(1, 12, 24)
for i, s in enumerate(noise):
    spec = PhantomSpec(dims=(48, 48, 20), radius=9.5, center=(23.5, 23.5, 9.5), muF=100, sigmaF=float(s),
                       muB=5, sigmaB=1.5, seed=i, id=f"sub{i:02d}")
    vol, _ = generate(spec)
    save_nifti(vol, root / "images" / f"{spec.id}.nii.gz", dtype="float32")

# %%
# Scan every image; rows go to iqm.csv, failures to iqm.csv.errors.csv.
main(["scan", str(root / "images"), "-o", str(root / "iqm.csv")])

# %%
# Pretend a network segments noisier images worse.
lines = ["image_id,dice,hd95,dice_whole,dice_core,dice_enh,flags"]
for i, s in enumerate(noise):
    d = float(0.97 - 0.01 * s + rng.normal(0, 0.005))
    lines.append(f"sub{i:02d},{d!r},{float(1 + 0.2 * s)!r},nan,nan,nan,")
(root / "scores.csv").write_text("\n".join(lines) + "\n")

# %%
# Rank the metrics and flag outliers, then split on the top-ranked metric.
main(["correlate", str(root / "iqm.csv"), str(root / "scores.csv"), "--top-k", "5", "-o", str(root / "corr")])
main(["split", str(root / "iqm.csv"), "--strategy", "trimmed", "--metric", "cjv", "-o", str(root / "split.json")])

# %%
# Static HTML with inline SVG: one scatter per metric, box plots, and a split
# comparison when score tables for retrained splits are supplied.
main(["report", str(root / "corr" / "correlations.csv"), str(root / "corr" / "outliers.csv"),
      "--iqm", str(root / "iqm.csv"), "--scores", str(root / "scores.csv"),
      "--split", f"kfold={root / 'scores.csv'}", "-o", str(root / "report")])
print(sorted(p.name for p in (root / "report").iterdir())[:6], "...")
print("open", root / "report" / "report.html")
