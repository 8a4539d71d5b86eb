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
# # Loss-weight sweep and convergence comparison
#
# Short runs over the three loss-weight settings, then iterations-to-threshold
# for the four two-task models.

# %%
import tempfile
from pathlib import Path

from posebranch import harness as H
from posebranch.synth import DataConfig, generate_dataset

work = Path(tempfile.mkdtemp())
data = generate_dataset(DataConfig(), work / "data")

# %%
rows = H.lambda_sweep(H.ExperimentConfig(model_kind="ebm", max_iterations=300, val_interval=0), data)
H.write_lambda_table(work / "lambda.csv", rows)
print((work / "lambda.csv").read_text())
print("selected", H.select_lambda(rows))

# %%
configs = {k: H.ExperimentConfig(model_kind=k, max_iterations=300, val_interval=50) for k in ("cpm", "lbm", "ebm")}
curves, summary = H.convergence_compare(configs, data, threshold=0.8)
for s in summary:
    print(s)
