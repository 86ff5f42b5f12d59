"""
Exception hierarchy
"""

from typing import Any, Dict, Optional

import numpy as np


class BranchedFlowError(Exception):
    """Base class for all simulation errors"""


class ConstructionError(BranchedFlowError, ValueError):
    """Invalid parameters for a physics object"""


class ConvergenceError(BranchedFlowError, RuntimeError):
    """An iterative refinement failed to converge"""


class PropagationError(BranchedFlowError, RuntimeError):
    """Propagation produced non-finite values"""

    def __init__(
        self,
        message: str,
        snapshot: Optional[np.ndarray] = None,
        time: Optional[float] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        super().__init__(message)
        self.snapshot = snapshot
        self.time = time
        self.details = details or {}
