"""MR image quality metrics, segmentation scoring and IQM-guided dataset curation."""

__version__ = "0.1.0"

from .volume_io import (  # noqa: E402
    BinaryMask,
    LabelVolume,
    PatchPair,
    Volume,
    combine_labels,
    load_nifti,
    resize,
    resize_labels,
    sample_patches,
    save_nifti,
    zscore_normalize,
)
from .foreground import ForegroundMask, PatchSpec, detect_foreground, otsu_threshold, place_patches  # noqa: E402
from .iqm import METRICS, IqmVector, SliceStats, compute_iqm_vector  # noqa: E402
from .seg_metrics import ScoreRow, brats_region_scores, dice, evaluate_cohort, hausdorff95  # noqa: E402
from .splits import Cohort, SplitManifest, ascending_split, descending_split, kfold, trimmed_split  # noqa: E402
from .analytics import compare_splits, iqr_outliers, pearson, rank_iqms  # noqa: E402
from .phantom import PhantomSpec, expected_iqms, generate  # noqa: E402
