"""Training-free neural architecture search from zero-cost proxies.

Four proxies (expressivity, progressivity, trainability, complexity) score an
untrained network from one forward pass and a few block-local backward
passes; a non-linear rank aggregation combines them and an evolutionary
search optimizes the aggregate under a MAC budget.
"""

from .config import RunConfig
from .errors import (ArgumentError, ConfigError, GenotypeParseError, InfeasibleBudget, JoinError,
                     LoadError, NumericError, UndefinedCorrelation, UnsupportedOperation,
                     ZcnasError)
from .proxies import ProxyScores, Scorer, ScoringConfig, score_architecture, score_many
from .ranking import (BUILTIN_PROXIES, ScoreTable, aggregate, aggregate_linear,
                      aggregate_nonlinear, assign_ranks, kendall_tau, spearman_rho)
from .search import SearchConfig, evolutionary_search, random_search
from .space import (CellGenotype, MacroGenotype, MacroSpace, Nb201Space, count_flops,
                    format_genotype, instantiate, parse_genotype)

__version__ = "0.1.0"
