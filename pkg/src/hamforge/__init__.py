"""hamforge: engineering precise and robust effective Hamiltonians.

Library and CLI for deciding which zeroth-order average Hamiltonians a
control system can reach, finding annealed control sequences that realize
them while suppressing control errors and higher-order corrections, and
evaluating the result under parameter dispersion.
"""

__version__ = "0.1.0"
