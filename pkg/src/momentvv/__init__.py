# Copyright 2025 Nic Cravino. All rights reserved.
# SPDX-License-Identifier: Apache-2.0

"""Moment-LMI verification and validation of adaptive flight control laws (momentvv).

Core package exposing polynomial systems, the F-16 MRAC closed loop, the
occupation-measure relaxation hierarchy with its embedded SDP solver, and the
Monte-Carlo baseline it is compared against.
"""

__all__ = [
    "Polynomial",
    "VarRegistry",
    "PiecewiseSystem",
    "CaseLibrary",
    "build_closed_loop",
    "build",
    "solve",
    "sweep",
    "RunConfig",
    "ValidationRunner",
]

from .poly import Polynomial, VarRegistry
from .dynamics import PiecewiseSystem
from .cases import CaseLibrary, build_closed_loop
from .relax import build
from .sdp import solve
from .mc import sweep
from .runner import RunConfig, ValidationRunner
