"""
Dice and 95th-percentile Hausdorff distance
===========================================

Score a perturbed prediction against a reference mask, then a small
cohort of BraTS-style label maps written to disk.
"""

# %%
import tempfile
from pathlib import Path

import numpy as np

from iqm_curator import BinaryMask, LabelVolume, dice, evaluate_cohort, hausdorff95, save_nifti
from iqm_curator.phantom import PhantomSpec

ref = PhantomSpec(dims=(48, 48, 32), radius=12).mask()
pred = np.roll(ref, 6, axis=0)  # shifted by six voxels along x
print("dice", round(dice(pred, ref), 4))
print("hd95 (1 mm voxels)", hausdorff95(pred, ref))

# %%
# Distances follow the voxel spacing: the same masks on 2 mm voxels along x.
# All non-zero voxels take part, so interior voxels contribute zeros.
print("hd95 (2 mm along x)", hausdorff95(BinaryMask(pred, (2, 1, 1)), BinaryMask(ref, (2, 1, 1))))

# %%
# A cohort of label maps. Labels 1, 2 and 4 make up the whole tumour; 1 and 4
# the tumour core; 4 alone the enhancing region.
root = Path(tempfile.mkdtemp())
rng = np.random.default_rng(0)
for d in ("pred", "gt"):
    (root / d).mkdir()
for i in range(4):
    gt = np.zeros((32, 32, 24), np.uint8)
    gt[8:24, 8:24, 6:18] = 2
    gt[12:20, 12:20, 9:15] = 1
    gt[14:18, 14:18, 11:13] = 4
    pred = gt.copy()
    flip = rng.random(gt.shape) < 0.05 * i
    pred[flip & (gt == 1)] = 2  # core voxels mislabelled as edema
    for d, arr in (("pred", pred), ("gt", gt)):
        save_nifti(LabelVolume(f"case{i}", arr, (1.0, 1.0, 1.0)), root / d / f"case{i}.nii.gz")

for row in evaluate_cohort(root / "pred", root / "gt"):
    print(row.image_id, f"whole {row.dice_whole:.3f}  core {row.dice_core:.3f}  enh {row.dice_enh:.3f}  hd95 {row.hd95:.2f}")
