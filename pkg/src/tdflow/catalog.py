"""Named functionals selectable from run configurations."""

from __future__ import annotations

from . import euclidean, wasserstein1d
from .errors import PreconditionError


def build_functional(space: str, cfg: dict, resolution: int, horizon: float = 10.0):
    """Euclidean catalog entry of dimension ``resolution`` or a composite quantile energy with N = ``resolution``."""
    if space == "euclidean":
        return euclidean.from_config({**cfg, "dim": resolution})
    if space == "wasserstein1d":
        return wasserstein1d.functional_from_config(cfg, resolution, horizon)
    raise PreconditionError(f"unknown space {space!r}")


def space_name(F) -> str:
    if isinstance(F, euclidean.EuclideanFunctional):
        return "euclidean"
    if isinstance(F, wasserstein1d.WassersteinFunctional):
        return "wasserstein1d"
    return type(F).__name__


def resolution(F) -> int:
    if isinstance(F, euclidean.EuclideanFunctional):
        return F.dim
    return F.N
