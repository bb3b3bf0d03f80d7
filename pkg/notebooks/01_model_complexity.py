"""
Model size and compute across widths
====================================

Parameter and MAC counts for the 16 kHz and 44.1 kHz networks, compared
against the published table. Counts come straight from the layer graph.
"""

# %%
from aclnet import NetworkConfig, build, report_for
from aclnet.complexity import format_table, mmacs_ratios, paper_grid_configs

# %% [markdown]
# The grid: the ten published rows followed by a width sweep per family.
# ``flag`` names any component whose MAC count is more than 2x off.

# %%
reports = [report_for(c) for c in paper_grid_configs()]
print(format_table(reports[:10]))

# %% [markdown]
# Per-layer view of the front end (LLF) at 16 kHz and full width.

# %%
r = report_for(NetworkConfig())
for layer in r.rows:
    if layer.part == "LLF":
        print(f"{layer.name:8s} params {layer.params:6d}  MACs {layer.macs:>10,d}")
print("LLF total MACs per 1.28 s window:", f"{r.llf_macs:,}")

# %% [markdown]
# Where the MAC counts drift from the published values: the DWSC back end
# comes out at about half for WM >= 0.5.

# %%
for rep in reports[:10]:
    ratios = mmacs_ratios(rep)
    print(f"{rep.config.label:10s} WM {rep.config.width_multiplier:<5g}",
          "  ".join(f"{k} {v:.2f}" for k, v in ratios.items()))

# %% [markdown]
# One graph accepts any input length: the tail is fully convolutional
# and ends in a global average pool.

# %%
g = build(NetworkConfig(width_multiplier=0.25), 16000)
for node in list(g)[:3] + list(g)[-3:]:
    print(f"{node.name:8s} {node.out_shape}")
