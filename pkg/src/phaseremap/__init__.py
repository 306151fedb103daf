"""Phase-remapping intercept-and-resend attack on plug-and-play BB84: simulator and analysis."""

__version__ = "0.1.0"
#: Version of the bundled profile / measured-data files.
DATA_VERSION = "2026.10-1"

from .core import (  # noqa: E402
    SECURITY_BOUND,
    Bb84State,
    DarkDominatedWarning,
    DomainError,
    EveBasis,
    LimitValueWarning,
    NoDiscriminationError,
    RemappedPhaseSet,
    detection_probabilities,
    phase_differences,
    phase_from_counts,
    qber_general,
    qber_symmetric,
)
