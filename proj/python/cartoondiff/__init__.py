"""Token-normalized classifier-free diffusion sampling on a miniature transformer.

The heavy lifting lives in the C++ extension ``cartoondiff._core``; this
package re-exports it.
"""

from ._core import (
    FormatError,
    IoError,
    Model,
    NonFiniteError,
    RangeError,
    ShapeError,
    TruncationError,
    __version__,
    cfg_combine,
    decode_netpbm,
    encode_netpbm,
    equidistant_subsequence,
    generate_shapes,
    high_freq_energy,
    linear_schedule,
    run_cli,
    token_normalize,
    total_variation,
)

__all__ = [
    "FormatError",
    "IoError",
    "Model",
    "NonFiniteError",
    "RangeError",
    "ShapeError",
    "TruncationError",
    "__version__",
    "cfg_combine",
    "decode_netpbm",
    "encode_netpbm",
    "equidistant_subsequence",
    "generate_shapes",
    "high_freq_energy",
    "linear_schedule",
    "run_cli",
    "token_normalize",
    "total_variation",
]
