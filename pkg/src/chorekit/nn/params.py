"""Named parameter tensors with deterministic seeded initialization."""

from __future__ import annotations

import numpy as np

from ..bundle import TensorBundle
from ..errors import ShapeError, ValidationError
from ..rng import SeededRng


class ParamStore:
    """f32 parameters keyed by unique names.

    Initialization draws from a per-name substream of the store seed, so
    adding or reordering parameters never shifts other parameters' values.
    Default init is uniform in +-sqrt(1/fan_in); pass scale to override the
    half-width, or fan_in=None with scale for a plain uniform.
    """

    def __init__(self, seed: int):
        self._rng = SeededRng(seed)
        self.values: dict[str, np.ndarray] = {}

    def create(
        self,
        name: str,
        shape: tuple[int, ...],
        fan_in: int | None = None,
        scale: float | None = None,
    ) -> np.ndarray:
        if name in self.values:
            raise ValidationError(f"parameter {name!r} already exists")
        if scale is None:
            if fan_in is None or fan_in < 1:
                raise ValidationError(f"parameter {name!r} needs fan_in or an explicit scale")
            scale = float(np.sqrt(1.0 / fan_in))
        rng = self._rng.spawn("param", name)
        value = rng.uniform(shape, -scale, scale).astype(np.float32)
        self.values[name] = value
        return value

    def create_zeros(self, name: str, shape: tuple[int, ...]) -> np.ndarray:
        if name in self.values:
            raise ValidationError(f"parameter {name!r} already exists")
        self.values[name] = np.zeros(shape, dtype=np.float32)
        return self.values[name]

    def get(self, name: str) -> np.ndarray:
        try:
            return self.values[name]
        except KeyError:
            raise KeyError(f"no parameter {name!r}; known: {sorted(self.values)}")

    def set(self, name: str, value: np.ndarray) -> None:
        current = self.get(name)
        value = np.asarray(value, dtype=np.float32)
        if value.shape != current.shape:
            raise ShapeError(
                f"parameter {name!r} has shape {current.shape}, got {value.shape}"
            )
        self.values[name] = value

    def names(self) -> list[str]:
        return list(self.values)

    def to_bundle(self) -> TensorBundle:
        bundle = TensorBundle()
        for name, value in self.values.items():
            bundle.add(name, value)
        return bundle

    @staticmethod
    def from_bundle(bundle: TensorBundle, seed: int = 0) -> "ParamStore":
        store = ParamStore(seed)
        for name in bundle:
            store.values[name] = np.asarray(bundle[name], dtype=np.float32)
        return store
