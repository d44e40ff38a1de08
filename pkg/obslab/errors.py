"""Exception hierarchy shared by every obslab module.

The CLI maps these onto exit codes: ConfigError -> 2, any other
ObsLabError -> 3.
"""

from __future__ import annotations


class ObsLabError(Exception):
	"""Base class for all errors raised by obslab."""


class ConfigError(ObsLabError):
	"""Invalid experiment configuration or command-line usage."""


class DomainError(ObsLabError, ValueError):
	"""A precondition on the arguments of an operation does not hold."""


class EmptyObservationSetError(DomainError):
	def __init__(self, message: str = "empty observation set") -> None:
		super().__init__(message)


class NumericalGuardError(ObsLabError):
	"""A guard protecting the discretisation was violated."""


class NyquistError(NumericalGuardError):
	def __init__(self, lam: float, nyquist: float) -> None:
		super().__init__(f"cutoff exceeds Nyquist: lambda={lam:g} >= pi/h={nyquist:g}")
		self.lam = lam
		self.nyquist = nyquist


class AliasingError(NumericalGuardError):
	def __init__(self, edge_value: float) -> None:
		super().__init__(f"aliasing risk: multiplier is {edge_value:.3e} at Nyquist")
		self.edge_value = edge_value


class QuadratureTruncationError(NumericalGuardError):
	def __init__(self, detail: str) -> None:
		super().__init__(f"OU quadrature truncation unsafe: {detail}")


class ObservationAnnihilatesError(NumericalGuardError):
	def __init__(self, detail: str = "") -> None:
		message = "observation annihilates test function"
		super().__init__(f"{message}: {detail}" if detail else message)


class DegenerateFitError(NumericalGuardError):
	pass


class SamplingError(NumericalGuardError):
	pass


class InfeasibleControlError(NumericalGuardError):
	def __init__(self, detail: str = "") -> None:
		message = "target ball unreachable with this discretization"
		super().__init__(f"{message}: {detail}" if detail else message)


class SolverError(NumericalGuardError):
	pass
