# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # Layer-wise probes
#
# Trains a short early-branch model, then runs the linear, kernel ridge, kNN,
# singular-value and kernel-regression probes on every layer.

# %%
import tempfile
from pathlib import Path

from posebranch import harness as H
from posebranch import probes as P
from posebranch.synth import DataConfig, generate_dataset

work = Path(tempfile.mkdtemp())
data = generate_dataset(DataConfig(), work / "data")
model = H.train(H.ExperimentConfig(model_kind="ebm", max_iterations=400, val_interval=0), data).model

# %%
report = P.run_layer_sweep(model, data, include_input=True)
cols = ("layer", "cat_acc", "pose_aaai", "knn_pose_aaai_k1", "eff_sv90", "nuclear_norm", "kreg_err_deg", "cross_eval")
print(" ".join(f"{c:>16s}" for c in cols))
for r in report.rows:
    print(" ".join(f"{r[c]:>16.3f}" if isinstance(r[c], float) else f"{r[c]:>16}" for c in cols))

# %% [markdown]
# Rows with `cross_eval = 1` probe one task inside the other task's branch.

# %%
report.to_csv(work / "probes.csv")
print((work / "probes.csv").read_text().splitlines()[0])
