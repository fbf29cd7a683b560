"""Risk functionals r(.) over the observation sites, with gradients.

All four kinds are nonnegative and 1-homogeneous. The max functional is
represented by its smooth p-power surrogate wherever a derivative is
needed; thresholding uses the exact maximum (see ``threshold_value``).
"""

from __future__ import annotations

from dataclasses import dataclass

import jax.numpy as jnp
import numpy as np

_KINDS = ("site", "max", "sum", "sum_beta")


@dataclass(frozen=True)
class RiskSpec:
    """Which functional defines a spatially extreme event.

    kind      one of site, max, sum, sum_beta
    site_index  conditioning site for kind="site"
    p         smooth-max exponent (kind="max")
    beta      power for the modified sum functional
    """

    kind: str = "sum"
    site_index: int = 0
    p: float = 20.0
    beta: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown risk kind {self.kind!r}; expected one of {_KINDS}")
        if self.kind == "max" and self.p < 1:
            raise ValueError("smooth-max exponent p must be >= 1")
        if self.kind == "sum_beta" and self.beta <= 0:
            raise ValueError("sum_beta requires beta > 0")
        if self.site_index < 0:
            raise ValueError("site_index must be nonnegative")

    # -- serialization used by fit/sim config JSON ---------------------------

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "site":
            out["site_index"] = self.site_index
        if self.kind == "max":
            out["p"] = self.p
        if self.kind == "sum_beta":
            out["beta"] = self.beta
        return out

    @staticmethod
    def from_json(obj: dict) -> "RiskSpec":
        if not isinstance(obj, dict) or "kind" not in obj:
            raise ValueError("risk spec must be an object with a 'kind' field")
        return RiskSpec(
            kind=obj["kind"],
            site_index=int(obj.get("site_index", 0)),
            p=float(obj.get("p", 20.0)),
            beta=float(obj.get("beta", 1.0)),
        )

    # -- evaluation -----------------------------------------------------------

    def evaluate(self, x) -> float:
        """r(x) for a positive vector x; max uses the smooth surrogate."""
        x = self._checked(x)
        return float(_evaluate(self, jnp.asarray(x)))

    def gradient(self, x) -> np.ndarray:
        """dr/dx_i; constant for site/sum, smooth-surrogate power law otherwise."""
        x = self._checked(x)
        return np.asarray(_gradient(self, jnp.asarray(x)))

    def threshold_value(self, x) -> float:
        """Exact functional used for exceedance selection (true max, not p-power)."""
        x = self._checked(x)
        if self.kind == "max":
            return float(np.max(x))
        return self.evaluate(x)

    def threshold_values(self, X: np.ndarray) -> np.ndarray:
        """Exact risks of each row of an N x D matrix."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ValueError("expected an N x D matrix")
        if not (np.all(np.isfinite(X)) and np.all(X > 0)):
            raise ValueError("risk functionals require finite, strictly positive data")
        if self.kind == "site":
            self._check_index(X.shape[1])
            return X[:, self.site_index].copy()
        if self.kind == "max":
            return X.max(axis=1)
        if self.kind == "sum":
            return X.sum(axis=1)
        m = X.max(axis=1, keepdims=True)
        return (m[:, 0]) * np.sum((X / m) ** self.beta, axis=1) ** (1.0 / self.beta)

    def _checked(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise ValueError("risk functionals take a 1-D site vector")
        if not (np.all(np.isfinite(x)) and np.all(x > 0)):
            raise ValueError("risk functionals require finite, strictly positive values")
        if self.kind == "site":
            self._check_index(x.shape[0])
        return x

    def _check_index(self, d: int) -> None:
        if self.site_index >= d:
            raise ValueError(f"site_index {self.site_index} out of range for D={d}")


# -- jnp implementations, shared by the eager API and the loss graph ---------


def _evaluate(spec: RiskSpec, x):
    if spec.kind == "site":
        return x[spec.site_index]
    if spec.kind == "sum":
        return jnp.sum(x)
    p = spec.p if spec.kind == "max" else spec.beta
    # factor out the max component before powering for stability
    m = jnp.max(x)
    return m * jnp.sum((x / m) ** p) ** (1.0 / p)


def _gradient(spec: RiskSpec, x):
    if spec.kind == "site":
        return jnp.zeros_like(x).at[spec.site_index].set(1.0)
    if spec.kind == "sum":
        return jnp.ones_like(x)
    p = spec.p if spec.kind == "max" else spec.beta
    r = _evaluate(spec, x)
    return (x / r) ** (p - 1.0)
