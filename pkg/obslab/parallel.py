"""Order-preserving thread pool map with optional progress display."""

from __future__ import annotations

import os
import typing as t
from concurrent.futures import ThreadPoolExecutor

from tqdm import tqdm

from .errors import ConfigError

T = t.TypeVar("T")
R = t.TypeVar("R")

THREADS_ENV = "OBSLAB_THREADS"


def thread_count(default: int = 1) -> int:
	"""Worker cap from OBSLAB_THREADS (positive int)."""
	raw = os.getenv(THREADS_ENV)
	if raw is None or raw.strip() == "":
		return default
	try:
		value = int(raw)
	except ValueError:
		raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
	if value < 1:
		raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {value}")
	return value


def parallel_map(
	fn: t.Callable[[T], R],
	items: t.Iterable[T],
	workers: int = 1,
	desc: str | None = None,
	progress: bool = False,
) -> list[R]:
	"""Map ``fn`` over ``items``; results come back in input order."""
	items = list(items)
	bar = tqdm(total=len(items), desc=desc, disable=not progress, leave=False)
	try:
		if workers <= 1 or len(items) <= 1:
			results = []
			for item in items:
				results.append(fn(item))
				bar.update(1)
			return results
		with ThreadPoolExecutor(max_workers=workers) as pool:
			results = []
			for result in pool.map(fn, items):
				results.append(result)
				bar.update(1)
			return results
	finally:
		bar.close()
