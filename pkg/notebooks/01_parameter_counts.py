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
# # Parameter counts of the five topologies
#
# Weight counts (biases excluded) at full AlexNet scale, for a 51-category
# and an 11-category label space with 16 pose bins.

# %%
from posebranch import topology as T

rgbd, pascal = T.LabelSpace(51, 16), T.LabelSpace(11, 16)

for labels, name in ((rgbd, "51 categories"), (pascal, "11 categories")):
    print(name)
    for kind in T.MODEL_KINDS:
        print(f"  {kind:5s} {T.count_parameters(T.build_topology(kind, labels, T.FULL)):>13,}")

# %% [markdown]
# The parallel model is two independent AlexNets; its halves differ only in
# the size of the output layer.

# %%
cat, pose = T.build_topology("pm", rgbd, T.FULL)
print(f"category half {T.count_parameters(cat):,}  pose half {T.count_parameters(pose):,}")

# %% [markdown]
# Narrower pose branches shrink the early-branch model quickly.

# %%
for width in T.FULL_EBM_WIDTHS:
    n = T.count_parameters(T.build_topology("ebm", rgbd, T.FULL, ebm_width=width))
    print(f"ebm width {width:>4}: {n:>13,}")

# %% [markdown]
# Per-layer table for the early-branch model.

# %%
for name, shape, n in T.parameter_table(T.build_topology("ebm", rgbd, T.FULL)):
    print(f"{name:14s} {str(shape):22s} {n:>12,}")
