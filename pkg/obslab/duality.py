"""Finite-dimensional control/observation duality.

System x' = -A x + B u on [0, T] with a uniform grid t_i = i*dt, dt = T/N.
State norm is the max-norm, its dual the sum-norm; controls are piecewise
constant with the sup norm over time and coordinates.

The discrete Duhamel operator is G u = dt * sum_i S_{T - t_i} B u_i, so the
observability density paired with it is t_i -> B^T S_{T - t_i}^T x' and

	Psi(x') = dt * sum_i ||B^T S_{T - t_i}^T x'||_1 = ||G^T x'||_1.

With this pairing the optimal control cost and the observability constant
coincide exactly on the grid (LP duality), leaving only the time
discretisation error against the continuum constant.
"""

from __future__ import annotations

import itertools
import logging
import math
import typing as t
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm, null_space
from scipy.optimize import minimize

from .errors import DomainError, InfeasibleControlError, SolverError
from .parallel import parallel_map
from .simplex import linprog_dense

logger = logging.getLogger(__name__)

MAX_EXPM_DIM = 64
MAX_VERTEX_DIM = 10
MAX_ENUMERATION_DIM = 3
# Psi below this fraction of its trivial upper bound sum|G| * ||x'||_1 counts as unobserved
UNOBSERVED_TOL = 1e-10


def matrix_exponential(A: np.ndarray, t_: float) -> np.ndarray:
	"""exp(-t A) by scaling and squaring with Pade approximants."""
	A = np.atleast_2d(np.asarray(A, dtype=float))
	if A.shape[0] != A.shape[1]:
		raise DomainError(f"generator must be square, got {A.shape}")
	if A.shape[0] > MAX_EXPM_DIM:
		raise DomainError(f"generator dimension {A.shape[0]} exceeds {MAX_EXPM_DIM}")
	return expm(-t_ * A)


@dataclass(frozen=True, eq=False)
class ControlSystem:
	A: np.ndarray
	B: np.ndarray
	T: float = 1.0
	n_steps: int = 64
	propagators: np.ndarray = field(init=False, repr=False)

	def __post_init__(self) -> None:
		A = np.atleast_2d(np.asarray(self.A, dtype=float))
		B = np.asarray(self.B, dtype=float)
		if B.ndim == 1:
			B = B.reshape(-1, 1)
		if A.shape[0] != A.shape[1]:
			raise DomainError(f"A must be square, got {A.shape}")
		if B.shape[0] != A.shape[0]:
			raise DomainError(f"B has {B.shape[0]} rows, A is {A.shape[0]}x{A.shape[0]}")
		if not self.T > 0:
			raise DomainError(f"horizon must be positive, got {self.T}")
		if self.n_steps < 1:
			raise DomainError(f"time grid needs at least one step, got {self.n_steps}")
		object.__setattr__(self, "A", A)
		object.__setattr__(self, "B", B)
		dt = self.T / self.n_steps
		stack = np.stack([matrix_exponential(A, i * dt) for i in range(self.n_steps + 1)])
		stack.setflags(write=False)
		object.__setattr__(self, "propagators", stack)

	@property
	def n(self) -> int:
		return self.A.shape[0]

	@property
	def m(self) -> int:
		return self.B.shape[1]

	@property
	def dt(self) -> float:
		return self.T / self.n_steps

	@property
	def times(self) -> np.ndarray:
		return self.dt * np.arange(self.n_steps)

	@property
	def final_propagator(self) -> np.ndarray:
		return self.propagators[-1]

	def scaled(self, alpha: float) -> "ControlSystem":
		"""Same dynamics with the input map multiplied by ``alpha``."""
		return ControlSystem(self.A, alpha * self.B, self.T, self.n_steps)


@dataclass(frozen=True, eq=False)
class ControlSignal:
	values: np.ndarray

	def __post_init__(self) -> None:
		values = np.atleast_2d(np.asarray(self.values, dtype=float))
		if not np.all(np.isfinite(values)):
			raise DomainError("control values must be finite")
		object.__setattr__(self, "values", values)

	@classmethod
	def zeros(cls, sys: ControlSystem) -> "ControlSignal":
		return cls(np.zeros((sys.n_steps, sys.m)))

	@property
	def norm(self) -> float:
		return float(np.max(np.abs(self.values))) if self.values.size else 0.0


@dataclass(frozen=True, eq=False)
class ControlResult:
	signal: ControlSignal
	cost: float
	duals: np.ndarray
	dual_vector: np.ndarray


@dataclass(frozen=True, eq=False)
class ObservabilityResult:
	constant: float
	witness: np.ndarray


@dataclass
class DualityReport:
	c_control: float
	c_obs: float
	gap: float
	passed: bool
	observable: bool
	costs: list[float]
	eps_costs: dict[str, float]
	witness: list[float]
	weak_duality_violations: int = 0

	def to_json(self) -> dict[str, t.Any]:
		return {
			"c_control": self.c_control,
			"c_obs": self.c_obs,
			"gap": self.gap,
			"passed": self.passed,
			"observable": self.observable,
			"costs": self.costs,
			"eps_costs": self.eps_costs,
			"witness": self.witness,
			"weak_duality_violations": self.weak_duality_violations,
		}


def random_system(n: int, m: int, seed: int, T: float = 1.0, n_steps: int = 64) -> ControlSystem:
	"""A = V diag(mu) V^-1 with well separated mu in [0.5, 3] and a random B."""
	if n < 1 or m < 1:
		raise DomainError(f"system dimensions must be positive, got n={n}, m={m}")
	rng = np.random.default_rng(seed)
	base = np.linspace(0.5, 3.0, n) if n > 1 else np.array([1.0])
	jitter = 0.25 * (2.5 / max(n - 1, 1))
	mu = np.clip(base + rng.uniform(-jitter, jitter, n), 0.5, 3.0)
	for _ in range(100):
		V = rng.standard_normal((n, n)) + np.eye(n)
		if np.linalg.cond(V) < 50.0:
			break
	else:
		V = np.eye(n)
	A = V @ np.diag(mu) @ np.linalg.inv(V)
	B = rng.standard_normal((n, m))
	return ControlSystem(A, B, T, n_steps)


def control_matrix(sys: ControlSystem) -> np.ndarray:
	"""G with G @ u.ravel() = dt * sum_i S_{T - t_i} B u_i, shape n x (N*m)."""
	blocks = [sys.propagators[sys.n_steps - i] @ sys.B for i in range(sys.n_steps)]
	return sys.dt * np.hstack(blocks)


def _check_state(sys: ControlSystem, x: np.ndarray, name: str) -> np.ndarray:
	x = np.asarray(x, dtype=float).ravel()
	if x.shape != (sys.n,):
		raise DomainError(f"{name} has {x.size} entries, system state dimension is {sys.n}")
	return x


def duhamel(sys: ControlSystem, x0: np.ndarray, u: ControlSignal) -> np.ndarray:
	"""x(T) = S_T x0 + dt * sum_i S_{T - t_i} B u_i (left endpoint rule)."""
	x0 = _check_state(sys, x0, "x0")
	if u.values.shape != (sys.n_steps, sys.m):
		raise DomainError(f"control has shape {u.values.shape}, expected {(sys.n_steps, sys.m)}")
	return sys.final_propagator @ x0 + control_matrix(sys) @ u.values.ravel()


def control_lp(sys: ControlSystem, x0: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
	"""(c, A_ub, b_ub) of the minimal sup-norm control LP in (w, c).

	u = w - c with 0 <= w <= 2c:
	  minimise c
	  w - 2c <= 0
	  +-(G w - (G 1) c) <= eps -+ S_T x0
	"""
	x0 = _check_state(sys, x0, "x0")
	if not eps > 0:
		raise DomainError(f"target radius must be positive, got {eps}")
	G = control_matrix(sys)
	k = G.shape[1]
	g1 = G @ np.ones(k)
	free = sys.final_propagator @ x0
	n = sys.n
	A_ub = np.zeros((k + 2 * n, k + 1))
	A_ub[:k, :k] = np.eye(k)
	A_ub[:k, k] = -2.0
	A_ub[k:k + n, :k] = G
	A_ub[k:k + n, k] = -g1
	A_ub[k + n:, :k] = -G
	A_ub[k + n:, k] = g1
	b_ub = np.concatenate([np.zeros(k), eps - free, eps + free])
	c = np.zeros(k + 1)
	c[k] = 1.0
	return c, A_ub, b_ub


def min_norm_control(sys: ControlSystem, x0: np.ndarray, eps: float) -> ControlResult:
	"""Minimal sup-norm control steering x0 into the eps max-norm ball."""
	c, A_ub, b_ub = control_lp(sys, x0, eps)
	k = c.size - 1
	n = sys.n
	result = linprog_dense(c, A_ub, b_ub)
	if result.status == "infeasible":
		raise InfeasibleControlError(f"eps={eps}")
	if result.status != "optimal":
		raise SolverError(f"control LP ended with status {result.status}")
	cost = float(result.x[k])
	u = (result.x[:k] - cost).reshape(sys.n_steps, sys.m)
	terminal = result.duals[k:]
	dual_vector = terminal[:n] - terminal[n:]
	return ControlResult(signal=ControlSignal(u), cost=cost, duals=result.duals, dual_vector=dual_vector)


def sign_vertices(n: int) -> np.ndarray:
	"""Vertices of the max-norm unit ball up to sign (first entry +1)."""
	if n > MAX_VERTEX_DIM:
		raise DomainError(f"vertex enumeration limited to n <= {MAX_VERTEX_DIM}, got {n}")
	tails = list(itertools.product((1.0, -1.0), repeat=n - 1))
	return np.array([(1.0,) + tail for tail in tails])


def initial_states(sys: ControlSystem, sample_count: int, seed: int) -> np.ndarray:
	"""Sign vertices followed by seeded random unit max-norm vectors."""
	rng = np.random.default_rng(seed)
	random = rng.uniform(-1.0, 1.0, size=(sample_count, sys.n))
	random /= np.max(np.abs(random), axis=1, keepdims=True)
	parts = [random]
	if sys.n <= MAX_VERTEX_DIM:
		parts.insert(0, sign_vertices(sys.n))
	return np.vstack(parts)


def control_costs(
	sys: ControlSystem,
	eps: float,
	sample_count: int,
	seed: int,
	workers: int = 1,
) -> list[float]:
	states = initial_states(sys, sample_count, seed)
	return parallel_map(lambda x0: min_norm_control(sys, x0, eps).cost, list(states), workers)


def control_cost_constant(sys: ControlSystem, eps: float, sample_count: int, seed: int, workers: int = 1) -> float:
	return max(control_costs(sys, eps, sample_count, seed, workers))


def semivariation_norm(density: np.ndarray, dt: float) -> float:
	"""dt * sum_i ||g(t_i)||_1 for a density sampled on the time grid."""
	density = np.atleast_2d(np.asarray(density, dtype=float))
	return float(dt * np.sum(np.abs(density)))


def observability_density(sys: ControlSystem, x_dual: np.ndarray) -> np.ndarray:
	"""Rows B^T S_{T - t_i}^T x', i = 0..N-1."""
	x_dual = _check_state(sys, x_dual, "dual vector")
	return np.stack([sys.B.T @ (sys.propagators[sys.n_steps - i].T @ x_dual) for i in range(sys.n_steps)])


def observability_ratio(sys: ControlSystem, x_dual: np.ndarray) -> float:
	"""||S_T^T x'||_1 / Psi(x'); +inf when the observation vanishes."""
	numerator = float(np.sum(np.abs(sys.final_propagator.T @ x_dual)))
	denominator = semivariation_norm(observability_density(sys, x_dual), sys.dt)
	if denominator <= 1e-300:
		return math.inf if numerator > 0 else 0.0
	return numerator / denominator


def _arrangement_vertices(G: np.ndarray, v: np.ndarray) -> np.ndarray:
	"""Points of <v, x> = 1 where n-1 independent columns of G are orthogonal to x."""
	n = v.size
	combos = np.array(list(itertools.combinations(range(G.shape[1]), n - 1)), dtype=np.int64)
	if combos.size == 0:
		return np.empty((0, n))
	systems = np.empty((len(combos), n, n))
	systems[:, : n - 1, :] = np.transpose(G[:, combos], (1, 2, 0))
	systems[:, n - 1, :] = v
	scale = np.max(np.abs(G)) ** (n - 1) * np.max(np.abs(v))
	regular = np.abs(np.linalg.det(systems)) > 1e-12 * max(scale, 1e-300)
	if not regular.any():
		return np.empty((0, n))
	rhs = np.zeros((int(regular.sum()), n, 1))
	rhs[:, n - 1, 0] = 1.0
	return np.linalg.solve(systems[regular], rhs)[:, :, 0]


def _min_psi_on_hyperplane(G: np.ndarray, v: np.ndarray, starts: np.ndarray) -> tuple[float, np.ndarray]:
	"""min ||G^T x'||_1 over <v, x'> = 1.

	Vertex enumeration of the hyperplane arrangement for n <= 3, then
	Nelder-Mead and Powell refinement in the null space of v.
	"""
	particular = v / float(v @ v)
	basis = null_space(v.reshape(1, -1))
	psi = lambda x: float(np.sum(np.abs(G.T @ x)))
	if basis.shape[1] == 0:
		return psi(particular), particular
	objective = lambda z: psi(particular + basis @ z)
	best_z = np.zeros(basis.shape[1])
	best_value = objective(best_z)
	seeds = [basis.T @ start for start in starts]
	if v.size <= MAX_ENUMERATION_DIM:
		vertices = _arrangement_vertices(G, v)
		if len(vertices):
			values = np.sum(np.abs(vertices @ G), axis=1)
			k = int(np.argmin(values))
			seeds.insert(0, basis.T @ (vertices[k] - particular))
	for z0 in seeds:
		value = objective(z0)
		if value < best_value:
			best_value, best_z = value, z0
		coarse = minimize(objective, z0, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
		fine = minimize(objective, coarse.x, method="Powell", options={"xtol": 1e-12, "ftol": 1e-14, "maxiter": 4000})
		for z, value in ((coarse.x, coarse.fun), (fine.x, fine.fun)):
			if value < best_value:
				best_value, best_z = float(value), z
	return best_value, particular + basis @ best_z


def observability_constant(sys: ControlSystem, sample_count: int, seed: int) -> ObservabilityResult:
	"""Largest ||S_T^T x'||_1 / Psi(x') found over sampled and refined dual vectors.

	For each sign vertex sigma the best x' maximises <S_T sigma, x'> / Psi(x'),
	i.e. minimises Psi on the hyperplane <S_T sigma, x'> = 1. Seeded random
	directions are added as raw ratios. The result is a lower bound of the
	true constant and +inf when some sampled x' is unobserved.
	"""
	G = control_matrix(sys)
	rng = np.random.default_rng(seed)
	directions = rng.standard_normal((sample_count, sys.n))
	best = 0.0
	witness = np.zeros(sys.n)
	for x in directions:
		ratio = observability_ratio(sys, x)
		if ratio > best:
			best, witness = ratio, x / np.sum(np.abs(x))
	if math.isinf(best):
		return ObservabilityResult(math.inf, witness)
	if sys.n <= MAX_VERTEX_DIM:
		starts = np.vstack([np.zeros((1, sys.n)), directions[: min(sample_count, 4)]])
		for sigma in sign_vertices(sys.n):
			v = sys.final_propagator @ sigma
			if not np.any(v):
				continue
			value, x = _min_psi_on_hyperplane(G, v, starts)
			if value <= UNOBSERVED_TOL * np.sum(np.abs(G)) * np.sum(np.abs(x)):
				return ObservabilityResult(math.inf, x)
			ratio = observability_ratio(sys, x)
			if ratio > best:
				best, witness = ratio, x / np.sum(np.abs(x))
	return ObservabilityResult(best, witness)


def weak_duality_gap(
	sys: ControlSystem,
	x_dual: np.ndarray,
	x0: np.ndarray,
	u: ControlSignal,
	eps: float,
) -> float:
	"""Psi(x')||u|| + ||x'||_1 eps - |<x', S_T x0>|, nonnegative whenever ||x(T)|| <= eps."""
	x_dual = _check_state(sys, x_dual, "dual vector")
	x0 = _check_state(sys, x0, "x0")
	psi = semivariation_norm(observability_density(sys, x_dual), sys.dt)
	pairing = abs(float(x_dual @ (sys.final_propagator @ x0)))
	return psi * u.norm + float(np.sum(np.abs(x_dual))) * eps - pairing


def extrapolate_to_zero(eps_values: t.Sequence[float], costs: t.Sequence[float]) -> float:
	"""Linear extrapolation to eps = 0 from the two smallest radii."""
	pairs = sorted(zip(eps_values, costs))
	if len(pairs) == 1:
		return float(pairs[0][1])
	(e1, c1), (e2, c2) = pairs[0], pairs[1]
	return float(c1 - e1 * (c2 - c1) / (e2 - e1))


def check_duality(
	sys: ControlSystem,
	eps_sequence: t.Sequence[float],
	tol: float,
	*,
	sample_count: int = 8,
	seed: int = 0,
	workers: int = 1,
) -> DualityReport:
	"""Compare the extrapolated control cost constant with the observability constant."""
	eps_sequence = sorted(float(e) for e in eps_sequence)
	if not eps_sequence or eps_sequence[0] <= 0:
		raise DomainError("eps_sequence must hold positive radii")
	obs = observability_constant(sys, sample_count, seed)
	if math.isinf(obs.constant):
		logger.warning("system is not observable: some dual vector has zero observation")
		return DualityReport(
			c_control=math.inf,
			c_obs=math.inf,
			gap=math.inf,
			passed=False,
			observable=False,
			costs=[],
			eps_costs={},
			witness=[float(v) for v in obs.witness],
		)

	states = initial_states(sys, sample_count, seed)
	results_by_eps = {}
	for eps in eps_sequence:
		results_by_eps[eps] = parallel_map(lambda x0: min_norm_control(sys, x0, eps), list(states), workers)
	constants = [max(r.cost for r in results_by_eps[eps]) for eps in eps_sequence]
	c_control = max(extrapolate_to_zero(eps_sequence, constants), 0.0)

	smallest = eps_sequence[0]
	violations = 0
	for x0, result in zip(states, results_by_eps[smallest]):
		if weak_duality_gap(sys, obs.witness, x0, result.signal, smallest) < -1e-8:
			violations += 1

	gap = abs(c_control - obs.constant) / obs.constant if obs.constant > 0 else math.inf
	logger.info(f"duality: c_control={c_control:.6f} c_obs={obs.constant:.6f} gap={gap:.4%}")
	return DualityReport(
		c_control=c_control,
		c_obs=obs.constant,
		gap=gap,
		passed=bool(gap <= tol and violations == 0),
		observable=True,
		costs=[r.cost for r in results_by_eps[smallest]],
		eps_costs={repr(eps): c for eps, c in zip(eps_sequence, constants)},
		witness=[float(v) for v in obs.witness],
		weak_duality_violations=violations,
	)
