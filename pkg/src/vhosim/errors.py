"""Exception types shared across the simulator modules."""

from __future__ import annotations


class SimulationError(Exception):
    """Base class for errors raised by simulator components."""


class IllegalState(SimulationError):
    """An operation was attempted in a state that does not permit it."""


class UnknownSession(SimulationError, KeyError):
    """A command referenced a session id that is not in the session table."""


class EmptyCandidateSet(SimulationError):
    """A priority list was requested for a class that needs candidates, with none given."""


class NoAddressAvailable(SimulationError):
    """The care-of address pool of the target network is exhausted."""


class InvalidSchedule(SimulationError):
    """An event was scheduled before the current simulation clock."""


class ValidationError(SimulationError):
    """A scenario file failed validation.  `path` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")
