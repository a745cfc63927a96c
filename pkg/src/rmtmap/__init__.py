"""Resource mapping of P4 programs onto a reconfigurable match-action pipeline."""

__version__ = "0.1.0"
