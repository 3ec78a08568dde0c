"""In-vehicle CAN intrusion detection: parallel lightweight model,
resource-aware branch placement, and an ECU simulation harness.

The heavy lifting lives in the `_lipar` extension module; this package
re-exports its surface.
"""

from _lipar import (  # noqa: F401
    LABELS,
    ConfigError,
    IoError,
    Model,
    ParseError,
    __version__,
    allocate,
    availability,
    conv_param_count,
    idle_rate,
    occupation,
    parse_can_csv,
    receptive_field,
    simulate,
    split_indices,
    synthesize_traffic,
    train,
)
