"""Travel-mode choice prediction with language-model prompting and boosted-tree baselines."""
from .codes import MODES, Mode
from .errors import (BackendTimeout, CacheMiss, ConfigError, CredentialError, DegenerateLabels, EmptyEvaluation,
                     EncodingError, ParseError, SchemaError, SizeError, TransmodeError, TransportError,
                     UnknownCode)
from .survey import Dataset, TripRecord, load_records, sociodemographic_filter, speed_consistency_filter, \
    stratified_split
from .narrative import encode_trip
from .prompting import Strategy, build_prompt, parse_prediction, select_demonstrations
from .metrics import confusion, evaluate, score
from .synthetic import generate_synthetic

__version__ = "0.1.0"
