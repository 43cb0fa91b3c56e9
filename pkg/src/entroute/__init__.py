"""entroute: discrete-event simulation of contention-aware asynchronous
entanglement routing in multi-tenant quantum networks."""

from .engine import HAVE_SPEEDCORE, SimConfig, TopologySpec, run, simulate

__version__ = "0.1.0"

__all__ = ["SimConfig", "TopologySpec", "run", "simulate", "HAVE_SPEEDCORE", "__version__"]
