"""
Train/test splits ordered by an image quality metric
====================================================

Rank a cohort by one metric and hold out the high end, the low end, or both
tails; compare against seeded k-fold partitions.
"""

# %%
import numpy as np

from iqm_curator import Cohort, IqmVector
from iqm_curator.splits import ascending_split, descending_split, kfold, trimmed_split

rng = np.random.default_rng(3)
rows = [IqmVector(f"sub-{i:03d}", cv=float(v)) for i, v in enumerate(rng.lognormal(-2, 0.4, 125))]
rows[7] = IqmVector("sub-007")  # a scan whose metric could not be computed
cohort = Cohort(rows)

# %%
# With k=5 the held-out share matches one fold: round(n/5) images.
for split in (ascending_split, descending_split, trimmed_split):
    m = split(cohort, "cv", k=5)
    test_cv = [cohort.iqms[i].cv for i in m.test]
    print(f"{m.strategy:10s} train {len(m.train):3d}  test {len(m.test):2d}  "
          f"test cv {min(test_cv):.3f}..{max(test_cv):.3f}  excluded {m.excluded}")

# %%
# The trimmed split keeps the middle of the ranking for training. With an odd
# held-out count the extra image goes to the top tail.
m = trimmed_split(cohort, "cv")
values = cohort.column("cv")
train_max = max(values[i] for i in m.train)
print("top tail:", sum(values[i] > train_max for i in m.test), "bottom tail:", sum(values[i] < train_max for i in m.test))

# %%
# Seeded k-fold: same seed, same folds.
folds = kfold(cohort.ids, k=5, seed=7)
print([len(f.test) for f in folds])
print(folds[0].to_json()[:200], "...")
