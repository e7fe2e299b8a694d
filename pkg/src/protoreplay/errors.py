"""Exception types shared across the package.

Everything raised deliberately by this package derives from
:class:`ProtoReplayError`, so callers can catch one base class at the
boundary. Input problems (bad files, bad configs, bad shapes) also derive
from :class:`ValueError` to stay friendly to generic handling.
"""


class ProtoReplayError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(ProtoReplayError, ValueError):
    """A document (JSON manifest, CSV table, config file) is malformed."""


class ValidationError(ProtoReplayError, ValueError):
    """A document parsed fine but its content violates the format rules."""


class NonFiniteError(ProtoReplayError, ValueError):
    """A NaN or infinity appeared where only finite values are allowed."""


class DimensionMismatch(ProtoReplayError, ValueError):
    """Arrays or components disagree about the feature dimension."""


class EmptyInput(ProtoReplayError, ValueError):
    """An operation received no data where at least one row is required."""


class SingularCovariance(ProtoReplayError, ValueError):
    """A covariance matrix cannot be inverted for a distance computation."""


class UnknownLabel(ProtoReplayError, ValueError):
    """A class label was referenced that the receiving component does not know."""


class DuplicateLabel(ProtoReplayError, ValueError):
    """A class label was registered twice where labels must be unique."""


class EmptyTestSet(ProtoReplayError, ValueError):
    """Evaluation was requested but no usable test rows remain."""


class TooFewSessions(ProtoReplayError, ValueError):
    """A session plan needs at least a base session to be runnable."""


class InsufficientShots(ProtoReplayError, ValueError):
    """A class holds fewer training rows than the requested shot count."""


class InfeasibleSpec(ProtoReplayError, ValueError):
    """A benchmark description cannot be realized (e.g. means cannot be placed)."""
