"""A problem bundled with everything needed to differentiate through it."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..forward import StepperConfig
from ..optimize import Bounds
from ..problem import DAEProblem, Objective, ParamMap


@dataclass
class ProblemSetup:
    """``target`` says which variable the reduced functional lives on:
    'param' (p, through eta and f) or 'initial' (u_0 with p fixed)."""

    name: str
    problem: DAEProblem
    objective: Objective
    param_map: ParamMap
    config: StepperConfig
    p0: np.ndarray
    target: str = "param"
    bounds: Optional[Bounds] = None
    x0: Optional[np.ndarray] = None
    reference: Optional[np.ndarray] = None  # known true control, when there is one
    model: object = None  # the object that built the callbacks

    def with_config(self, **changes) -> "ProblemSetup":
        return replace(self, config=replace(self.config, **changes))

    @property
    def initial_guess(self) -> np.ndarray:
        if self.x0 is not None:
            return np.array(self.x0, dtype=float)
        if self.target == "param":
            return np.array(self.p0, dtype=float)
        return self.param_map.initial_state(self.p0)
