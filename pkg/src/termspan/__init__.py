"""Near-isometric terminal spanners, distance labelings, oracles and embeddings
for doubling metrics, with brute-force audits."""

from .base import BaseLabeling, BaseSpanner, build_base_labeling, build_base_spanner
from .harness import audit_stretch, exact_graph_distances, gen_instance, lower_bound_audit, lower_bound_instance
from .linf import embed_l2_terminal, embed_linf
from .metric import FiniteMetric, Net, TerminalInstance, estimate_doubling_constant, greedy_net, refine_net
from .partition import build_partial_partitions, mark_clusters
from .terminal import (build_k_doubling_labeling, build_k_doubling_oracle, build_k_doubling_spanner,
                       build_terminal_labeling, build_terminal_oracle, build_terminal_spanner, hang_points)

__version__ = "0.1.0"
