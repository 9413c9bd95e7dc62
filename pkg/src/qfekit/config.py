"""Central numeric tolerances and resource limits."""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    algebraic: float = 1e-9
    eigen: float = 1e-8


@dataclass(frozen=True)
class Config:
    tol: Tolerances = Tolerances()
    max_qubits: int = 12
    # length of the all-zero prefix checked by the unclonable-FE program
    prefix_len: int = 4

    def with_tol(self, value: float) -> "Config":
        return replace(self, tol=Tolerances(algebraic=value, eigen=max(value, 10 * value)))


_current = Config()


def get_config() -> Config:
    return _current


def set_config(cfg: Config) -> None:
    global _current
    _current = cfg


@contextlib.contextmanager
def using(cfg: Config):
    """Temporarily install ``cfg`` as the active configuration."""
    global _current
    prev = _current
    _current = cfg
    try:
        yield cfg
    finally:
        _current = prev
