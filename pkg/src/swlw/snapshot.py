"""Gridded physical fields in either coordinate frame."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

FRAMES = ("lagrangian", "eulerian")

# fixed order used by the serializers; vector fields are (2, N), psi is complex
FIELD_ORDER = ("rho", "u", "w", "h", "theta", "psi")


@dataclass
class FieldSnapshot:
    frame: str
    t: float
    coord: np.ndarray
    rho: np.ndarray
    u: np.ndarray
    w: np.ndarray
    h: np.ndarray
    theta: np.ndarray
    psi: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise ValidationError(f"frame must be one of {FRAMES}, got {self.frame!r}")
        n = np.asarray(self.coord).shape[0]
        for name in FIELD_ORDER:
            arr = np.asarray(getattr(self, name))
            if arr.shape[-1] != n:
                raise ValidationError(f"field {name} has {arr.shape[-1]} points, coord has {n}")

    @property
    def v(self) -> np.ndarray:
        return 1.0 / self.rho

    def equals(self, other: "FieldSnapshot") -> bool:
        if self.frame != other.frame or self.t != other.t or self.meta != other.meta:
            return False
        names = ("coord",) + FIELD_ORDER
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in names)
