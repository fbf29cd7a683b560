"""Site containers, pairwise distances, and rescaling onto the unit square."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd


class DegenerateGeometryError(ValueError):
    """A coordinate dimension carries no spread, or sites coincide."""


@dataclass(frozen=True)
class AffineRecord:
    """Per-dimension affine map x -> (x + shift) * scale."""

    shift: np.ndarray  # (2,)
    scale: np.ndarray  # (2,), strictly positive

    def apply(self, coords: np.ndarray) -> np.ndarray:
        return (np.asarray(coords, dtype=float) + self.shift) * self.scale

    def invert(self, coords: np.ndarray) -> np.ndarray:
        return np.asarray(coords, dtype=float) / self.scale - self.shift

    @staticmethod
    def identity() -> "AffineRecord":
        return AffineRecord(shift=np.zeros(2), scale=np.ones(2))


@dataclass(frozen=True)
class LocationSet:
    """Ordered 2-D sites plus the last affine rescale applied to them."""

    coords: np.ndarray  # (D, 2)
    labels: tuple[str, ...] | None = None
    rescale_record: AffineRecord = field(default_factory=AffineRecord.identity)

    def __post_init__(self):
        coords = np.atleast_2d(np.asarray(self.coords, dtype=float))
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError(f"coords must be (D, 2), got {coords.shape}")
        if coords.shape[0] < 2:
            raise ValueError("a LocationSet needs at least two sites")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coordinates must be finite")
        if self.labels is not None and len(self.labels) != coords.shape[0]:
            raise ValueError("labels length must match the number of sites")
        object.__setattr__(self, "coords", coords)

    @property
    def n_sites(self) -> int:
        return self.coords.shape[0]

    def with_coords(self, coords: np.ndarray, record: AffineRecord | None = None) -> "LocationSet":
        return LocationSet(
            coords=coords,
            labels=self.labels,
            rescale_record=record if record is not None else self.rescale_record,
        )

    @staticmethod
    def from_csv(path) -> "LocationSet":
        """Read sites from a CSV with header ``id,x,y``."""
        df = pd.read_csv(path)
        for col in ("id", "x", "y"):
            if col not in df.columns:
                raise ValueError(f"sites CSV must have columns id,x,y (missing {col!r})")
        return LocationSet(
            coords=df[["x", "y"]].to_numpy(float),
            labels=tuple(str(v) for v in df["id"]),
        )

    def to_csv(self, path, warped: np.ndarray | None = None) -> None:
        """Write ``id,x,y`` plus ``wx,wy`` columns when warped coordinates are given."""
        ids = self.labels if self.labels is not None else [str(i) for i in range(self.n_sites)]
        out = {"id": list(ids), "x": self.coords[:, 0], "y": self.coords[:, 1]}
        if warped is not None:
            warped = np.asarray(warped, dtype=float)
            out["wx"] = warped[:, 0]
            out["wy"] = warped[:, 1]
        pd.DataFrame(out).to_csv(path, index=False)


def rescale_unit_square(sites: LocationSet) -> tuple[LocationSet, AffineRecord]:
    """Min-max rescale each dimension onto [-0.5, 0.5].

    The returned record reproduces the map exactly, so holdout sites are
    mapped with training-set parameters (and may land outside the square).
    """
    coords = sites.coords
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    span = hi - lo
    for k, axis in enumerate("xy"):
        if span[k] <= 0.0:
            raise DegenerateGeometryError(
                f"dimension {axis!r} is degenerate: all coordinates equal {lo[k]!r}"
            )
    record = AffineRecord(shift=-(lo + hi) / 2.0, scale=1.0 / span)
    return sites.with_coords(record.apply(coords), record), record


def pairwise_distances(sites: LocationSet | np.ndarray) -> np.ndarray:
    """Symmetric D x D Euclidean distance matrix."""
    coords = sites.coords if isinstance(sites, LocationSet) else np.asarray(sites, dtype=float)
    diff = coords[:, None, :] - coords[None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    np.fill_diagonal(d, 0.0)
    return d
