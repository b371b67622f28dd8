"""Network parameters: per-component background rates and interaction kernels."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .kernels import ZERO_MASS_TOL, HistogramKernel, KernelError, SplineKernel


class ParamsError(ValueError):
    pass


@dataclass(frozen=True)
class ComponentParams:
    """Parameter f_k = (nu_k, {h_{lk} : l in S(k)}) of one target dimension.

    Kernels are keyed by the 0-based source index l; entries off the active
    set are implicitly zero. Kernels with numerically zero mass are pruned at
    construction so the adjacency is well defined.
    """

    nu: float
    kernels: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.nu > 0) or not np.isfinite(self.nu):
            raise ParamsError(f"background rate must be positive, got {self.nu}")
        pruned = {
            int(l): k for l, k in self.kernels.items() if k.mass > ZERO_MASS_TOL
        }
        if any(l < 0 for l in pruned):
            raise ParamsError("source indices must be nonnegative")
        object.__setattr__(self, "kernels", pruned)

    @property
    def active_set(self) -> frozenset:
        return frozenset(self.kernels)

    def horizon(self):
        horizons = {k.horizon for k in self.kernels.values()}
        if len(horizons) > 1:
            raise ParamsError(f"mixed kernel horizons {horizons}")
        return horizons.pop() if horizons else None


@dataclass(frozen=True)
class NetworkParams:
    """Full parameter f = (f_1, ..., f_K) with a shared kernel horizon."""

    dimension: int
    components: tuple
    horizon: float

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        if self.dimension < 1 or len(comps) != self.dimension:
            raise ParamsError(
                f"need exactly {self.dimension} components, got {len(comps)}"
            )
        if self.horizon <= 0:
            raise ParamsError("horizon must be positive")
        for k, comp in enumerate(comps):
            a = comp.horizon()
            if a is not None and a != self.horizon:
                raise ParamsError(
                    f"component {k} kernel horizon {a} != network horizon {self.horizon}"
                )
            bad = [l for l in comp.active_set if l >= self.dimension]
            if bad:
                raise ParamsError(
                    f"component {k} references out-of-range sources {bad}"
                )

    @property
    def nus(self) -> np.ndarray:
        return np.array([c.nu for c in self.components])


def _kernel_to_dict(kernel) -> dict:
    if isinstance(kernel, HistogramKernel):
        return {
            "type": "histogram",
            "bin_count": kernel.bin_count,
            "heights": [float(h) for h in kernel.heights],
        }
    if isinstance(kernel, SplineKernel):
        return {
            "type": "spline",
            "order": kernel.order,
            "coefficients": [float(c) for c in kernel.coefficients],
        }
    raise ParamsError(f"unknown kernel type {type(kernel)!r}")


def _kernel_from_dict(d: dict, horizon: float):
    kind = d.get("type")
    if kind == "histogram":
        return HistogramKernel(horizon, np.asarray(d["heights"], dtype=float))
    if kind == "spline":
        return SplineKernel(horizon, int(d["order"]), np.asarray(d["coefficients"]))
    raise ParamsError(f"unknown kernel type {kind!r}")


def params_to_json(params: NetworkParams) -> str:
    """Serialize to the documented JSON text format.

    Floats are written with full precision (shortest exact repr), so histogram
    heights round-trip exactly.
    """
    doc = {
        "dimension": params.dimension,
        "horizon": float(params.horizon),
        "components": [
            {
                "nu": float(c.nu),
                "kernels": {
                    str(l): _kernel_to_dict(c.kernels[l])
                    for l in sorted(c.kernels)
                },
            }
            for c in params.components
        ],
    }
    return json.dumps(doc, indent=2)


def params_from_json(text: str) -> NetworkParams:
    doc = json.loads(text)
    horizon = float(doc["horizon"])
    comps = tuple(
        ComponentParams(
            nu=float(c["nu"]),
            kernels={
                int(l): _kernel_from_dict(kd, horizon)
                for l, kd in c.get("kernels", {}).items()
            },
        )
        for c in doc["components"]
    )
    return NetworkParams(int(doc["dimension"]), comps, horizon)


def save_params(params: NetworkParams, path) -> None:
    with open(path, "w") as fh:
        fh.write(params_to_json(params))
        fh.write("\n")


def load_params(path) -> NetworkParams:
    with open(path) as fh:
        return params_from_json(fh.read())
