"""Tour of the synthetic red/blue motif dataset.

Run:  python demos/01_synthetic_dataset.py
"""
import numpy as np

from sts_bench import synthgen
from sts_bench.explanations import mask_density
from sts_bench.matching import match_motif

ds = synthgen.generate(synthgen.SynthConfig(graph_count=200, seed=0))
labels = ds.labels()
print(f"{len(ds)} graphs, {np.sum(labels == 1)} active / {np.sum(labels == 0)} inactive")

g = ds.graphs[0]
print("\nfirst graph:", g.node_count, "nodes,", g.edge_count // 2, "undirected edges")
print("  class:", g.metadata["label"], "| red motif:", g.metadata["red_motif"],
      "| blue motif:", g.metadata["blue_motif"])
print("  red motif nodes:", g.metadata["red_nodes"])
print("  their colors:\n", g.node_features[g.metadata["red_nodes"]])

# The ground-truth mask marks the red motif in the channel of the class.
channel = int(np.argmax(g.targets))
print("  nodes marked in channel", channel, ":", np.flatnonzero(g.masks.node_importance[:, channel]).tolist())

# The matcher recovers the planted motif from colors alone.
found = match_motif(g, synthgen.MOTIFS[g.metadata["red_motif"]])
print("  matcher found", len(found), "embeddings, e.g.", found[0])

# Blue motifs carry no label information: a 2x2 table is flat.
table = np.zeros((2, 2), dtype=int)
for graph in ds.graphs:
    table[int(np.argmax(graph.targets)), graph.metadata["blue_motif"] == "blue_star"] += 1
print("\nclass x blue-motif table (rows inactive/active, cols ring/star):\n", table)

adv = synthgen.adversarial_masks(g)
print("\nadversarial mask marks nodes", np.flatnonzero(adv.node_importance.any(1)).tolist())
print("ground-truth mask density over the dataset:", round(mask_density([x.masks for x in ds.graphs]), 4))
