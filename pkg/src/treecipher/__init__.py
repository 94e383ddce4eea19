"""Search-space reduction for isomorphism of labeled unordered trees up to a substitution cipher."""

from .trees import LabeledTree, ParseError, parse, serialize, from_json, to_json, loads, load
from .ahu import color, topologically_isomorphic, n_equiv, log10_n_equiv, children_signature
from .engine import (
    CipherMode,
    Reason,
    PartialBijection,
    EngineState,
    Outcome,
    Isomorphic,
    NotIsomorphic,
    Undecided,
    ext_bij,
    run,
    search_space_size,
    log_ratio,
)

__version__ = "0.1.0"
