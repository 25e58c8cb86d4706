"""Core/periphery blockmodels of co-authorship networks and their stability over time."""

from .blockmodel import FitOptions, ImageSpec, criterion, default_image, fit_blockmodel, local_search
from .equivalence import DissimilarityMatrix, corrected_euclidean, cut_dendrogram, ward_cluster
from .errors import BlockstabError
from .network import Network, PeriodSpec, PublicationRecord, build_network, density, parse_publications
from .partition import Partition, Role
from .stability import adjusted_rand, align, mc_adjust, pair_counts, stability_report
from .transitions import classify_events, core_flows, emit_alluvial_svg, emit_flow_json

__version__ = "0.1.0"
