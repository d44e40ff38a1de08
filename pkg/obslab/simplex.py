"""Dense two-phase tableau simplex with Bland's anti-cycling rule.

Solves   minimise c.x   subject to   A_ub x <= b_ub,  x >= 0.

The returned multipliers y >= 0 belong to the inequality rows and satisfy,
at an optimum, c + A_ub^T y >= 0 with complementary slackness
y_i (b - A x)_i = 0 and x_j (c + A^T y)_j = 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SolverError

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9
MAX_ITERATIONS = 50_000


@dataclass(frozen=True, eq=False)
class LPResult:
	status: str  # "optimal", "infeasible" or "unbounded"
	x: np.ndarray
	objective: float
	duals: np.ndarray
	slack: np.ndarray
	iterations: int

	@property
	def success(self) -> bool:
		return self.status == "optimal"


class _Tableau:
	def __init__(self, matrix: np.ndarray, rhs: np.ndarray, basis: list[int]):
		self.matrix = matrix
		self.rhs = rhs
		self.basis = basis
		self.iterations = 0

	def pivot(self, row: int, col: int) -> None:
		piv = self.matrix[row, col]
		self.matrix[row] /= piv
		self.rhs[row] /= piv
		factors = self.matrix[:, col].copy()
		factors[row] = 0.0
		self.matrix -= np.outer(factors, self.matrix[row])
		self.rhs -= factors * self.rhs[row]
		self.basis[row] = col
		self.iterations += 1

	def reduced_costs(self, cost: np.ndarray) -> np.ndarray:
		return cost - cost[self.basis] @ self.matrix

	def run(self, cost: np.ndarray, allowed: np.ndarray) -> str:
		"""Bland's rule: lowest-index entering column, lowest-index leaving basic variable."""
		while True:
			if self.iterations >= MAX_ITERATIONS:
				raise SolverError(f"simplex exceeded {MAX_ITERATIONS} pivots")
			reduced = self.reduced_costs(cost)
			candidates = np.flatnonzero((reduced < -FEAS_TOL) & allowed)
			if candidates.size == 0:
				return "optimal"
			col = int(candidates[0])
			column = self.matrix[:, col]
			rows = np.flatnonzero(column > PIVOT_TOL)
			if rows.size == 0:
				return "unbounded"
			ratios = self.rhs[rows] / column[rows]
			best = ratios.min()
			ties = rows[ratios <= best + FEAS_TOL * max(1.0, abs(best))]
			row = int(min(ties, key=lambda r: self.basis[r]))
			self.pivot(row, col)


def linprog_dense(c: np.ndarray, A_ub: np.ndarray, b_ub: np.ndarray) -> LPResult:
	c = np.asarray(c, dtype=float)
	A = np.atleast_2d(np.asarray(A_ub, dtype=float))
	b = np.asarray(b_ub, dtype=float)
	m, n = A.shape
	if c.shape != (n,) or b.shape != (m,):
		raise DomainError(f"LP shapes disagree: c {c.shape}, A {A.shape}, b {b.shape}")

	# rows with negative right-hand side are negated and get an artificial
	flip = b < 0
	sign = np.where(flip, -1.0, 1.0)
	artificial_rows = np.flatnonzero(flip)
	k = artificial_rows.size
	matrix = np.zeros((m, n + m + k))
	matrix[:, :n] = sign[:, None] * A
	matrix[np.arange(m), n + np.arange(m)] = sign
	matrix[artificial_rows, n + m + np.arange(k)] = 1.0
	rhs = sign * b
	basis = [n + i for i in range(m)]
	for j, i in enumerate(artificial_rows):
		basis[i] = n + m + j
	tab = _Tableau(matrix, rhs, basis)
	n_real = n + m

	if k:
		phase1 = np.zeros(n + m + k)
		phase1[n_real:] = 1.0
		tab.run(phase1, np.ones(n + m + k, dtype=bool))
		infeasibility = float(phase1[tab.basis] @ tab.rhs)
		if infeasibility > FEAS_TOL * max(1.0, float(np.abs(b).max())):
			logger.debug(f"phase 1 ended with infeasibility {infeasibility:.3e}")
			return _result("infeasible", tab, c, A, b, n)
		for row, var in enumerate(list(tab.basis)):
			if var >= n_real:
				nonzero = np.flatnonzero(np.abs(tab.matrix[row, :n_real]) > PIVOT_TOL)
				if nonzero.size:
					tab.pivot(row, int(nonzero[0]))

	cost = np.zeros(n + m + k)
	cost[:n] = c
	allowed = np.zeros(n + m + k, dtype=bool)
	allowed[:n_real] = True
	status = tab.run(cost, allowed)
	return _result(status, tab, c, A, b, n)


def _result(status: str, tab: _Tableau, c: np.ndarray, A: np.ndarray, b: np.ndarray, n: int) -> LPResult:
	m = A.shape[0]
	values = np.zeros(tab.matrix.shape[1])
	values[tab.basis] = tab.rhs
	x = np.maximum(values[:n], 0.0)
	duals = np.full(m, np.nan)
	if status == "optimal":
		duals = _duals(tab, c, A, n)
	return LPResult(
		status=status,
		x=x,
		objective=float(c @ x),
		duals=duals,
		slack=b - A @ x,
		iterations=tab.iterations,
	)


def _duals(tab: _Tableau, c: np.ndarray, A: np.ndarray, n: int) -> np.ndarray:
	"""Solve B^T w = c_B over the columns of [A I]; the row multipliers are y = -w."""
	m = A.shape[0]
	full = np.hstack([A, np.eye(m)])
	cost = np.concatenate([c, np.zeros(m)])
	basic = [v for v in tab.basis if v < n + m]
	w, *_ = np.linalg.lstsq(full[:, basic].T, cost[basic], rcond=None)
	return np.maximum(-w, 0.0)
