from .annealing import simulated_annealing_solve
from .exhaustive import EXHAUSTIVE_CAP, exhaustive_solve
from .remote import EndpointConfig, remote_sample

__all__ = ["EXHAUSTIVE_CAP", "EndpointConfig", "exhaustive_solve", "remote_sample",
           "simulated_annealing_solve"]
