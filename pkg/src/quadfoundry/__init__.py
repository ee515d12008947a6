"""quadfoundry: sample random quadrotors, train per-vehicle RL teachers, and
distill them into a tiny adaptive recurrent flight policy."""

__version__ = "0.1.0"

from .dynamics import (QuadParams, QuadState, SimConfig, SimulationFault,
                       hover_command, integrate_step, thrust_curve)
from .env import QuadEnv, BatchEnv, EpisodeRecord, observe, reward, terminal
from .policy import PolicyGRU, export_policy, flop_count, load_policy, param_count
from .sampling import SamplerConfig, SampleTrace, sample_fleet, sample_quadrotor
from .trajectory import (FigureEightConfig, LangevinConfig, ReferenceState,
                         langevin_step, lissajous_figure_eight)

__all__ = [
    "QuadParams", "QuadState", "SimConfig", "SimulationFault", "hover_command",
    "integrate_step", "thrust_curve", "QuadEnv", "BatchEnv", "EpisodeRecord",
    "observe", "reward", "terminal", "PolicyGRU", "export_policy", "flop_count",
    "load_policy", "param_count", "SamplerConfig", "SampleTrace", "sample_fleet",
    "sample_quadrotor", "FigureEightConfig", "LangevinConfig", "ReferenceState",
    "langevin_step", "lissajous_figure_eight",
]
