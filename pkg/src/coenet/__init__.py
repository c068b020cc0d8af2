"""Co-enrolment network analysis: projection, RCP pruning, map-equation communities, entropy."""

__version__ = "0.1.0"

from .community import (InfomapResult, Partition, VisitRates, detect_infomap, map_equation, modularity,
                        nmi, run_infomap, stationary_visit_rates)
from .entropy import EntropyEstimate, SubpopCounts, bootstrap_entropy, entropy, subpop_counts
from .graphcore import BipartiteGraph, CoGraph, SliceSpec, build_bipartite, project_standards
from .ingest import (EnrolmentRecord, GeneratorConfig, StudentMeta, SubpopSelector, assign_cohorts,
                     filter_population, generate_synthetic, parse_enrolments, parse_students)
from .rcp import RcpResult, compute_rcp, prune

__all__ = [
    "BipartiteGraph", "CoGraph", "EnrolmentRecord", "EntropyEstimate", "GeneratorConfig", "InfomapResult",
    "Partition", "RcpResult", "SliceSpec", "StudentMeta", "SubpopCounts", "SubpopSelector", "VisitRates",
    "assign_cohorts", "bootstrap_entropy", "build_bipartite", "compute_rcp", "detect_infomap", "entropy",
    "filter_population", "generate_synthetic", "map_equation", "modularity", "nmi", "parse_enrolments",
    "parse_students", "project_standards", "prune", "run_infomap", "stationary_visit_rates", "subpop_counts",
]
