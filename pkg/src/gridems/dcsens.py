"""Linearized DC network model and PTDF / LODF / OTDF sensitivities."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .netmodel import Case, connected_components, islands


class IslandedNetworkError(ValueError):
    def __init__(self, message, islands=None):
        super().__init__(message)
        self.islands = islands or []


class StampMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class DcModel:
    bus_ids: tuple[int, ...]
    branch_ids: tuple[int, ...]
    reference: int
    incidence: np.ndarray      # branch x bus, +1 at from, -1 at to
    susceptance: np.ndarray    # 1/x per branch
    alpha: np.ndarray          # phase shift per branch (rad)
    b_reduced: np.ndarray      # nodal susceptance with the reference removed
    base_mva: float

    @property
    def stamp(self) -> tuple:
        return (self.bus_ids, self.branch_ids, self.reference)

    @property
    def nonref(self) -> np.ndarray:
        r = self.bus_ids.index(self.reference)
        return np.array([i for i in range(len(self.bus_ids)) if i != r], dtype=int)

    def bus_pos(self, bus: int) -> int:
        return self.bus_ids.index(bus)

    def branch_pos(self, k: int) -> int:
        return self.branch_ids.index(k)

    @property
    def shift_injection(self) -> np.ndarray:
        """Equivalent nodal injection (MW) of the phase shifters."""
        return -(self.incidence.T @ (self.susceptance * self.alpha)) * self.base_mva


def build_dc_model(case: Case, reference: int | None = None) -> DcModel:
    isl = islands(case)
    if len(isl) > 1:
        raise IslandedNetworkError(f"network has {len(isl)} islands: {isl}", isl)
    br = case.in_service_branches
    bus_ids = tuple(b.id for b in case.buses)
    pos = {b: i for i, b in enumerate(bus_ids)}
    A = np.zeros((len(br), len(bus_ids)))
    for row, k in enumerate(br):
        A[row, pos[k.from_bus]] = 1.0
        A[row, pos[k.to_bus]] = -1.0
    bk = np.array([1.0 / k.x for k in br])
    ref = case.reference_bus if reference is None else reference
    keep = [i for i, b in enumerate(bus_ids) if b != ref]
    Ar = A[:, keep]
    Bred = Ar.T @ (bk[:, None] * Ar)
    return DcModel(bus_ids, tuple(k.id for k in br), ref, A, bk,
                   np.array([k.alpha for k in br]), Bred, case.base_mva)


@dataclass(frozen=True)
class Ptdf:
    matrix: np.ndarray  # bus x branch
    stamp: tuple
    bus_ids: tuple[int, ...]
    branch_ids: tuple[int, ...]

    def __call__(self, bus: int, branch: int) -> float:
        return float(self.matrix[self.bus_ids.index(bus), self.branch_ids.index(branch)])


@dataclass(frozen=True)
class Lodf:
    outage: int
    column: np.ndarray  # per monitored branch, LODF[k, outage]
    stamp: tuple
    branch_ids: tuple[int, ...]

    def __call__(self, branch: int) -> float:
        return float(self.column[self.branch_ids.index(branch)])


def _isf(model: DcModel) -> np.ndarray:
    """Branch x bus injection shift factors, zero column at the reference."""
    nb = len(model.bus_ids)
    nr = model.nonref
    Ar = model.incidence[:, nr]
    X = np.linalg.solve(model.b_reduced, (model.susceptance[:, None] * Ar).T)
    isf = np.zeros((len(model.branch_ids), nb))
    isf[:, nr] = X.T
    return isf


def compute_ptdf(model: DcModel, buses: Sequence[int] | None = None,
                 branches: Sequence[int] | None = None) -> Ptdf:
    """Flow change on each branch per MW injected at a bus and withdrawn at the reference."""
    mat = _isf(model).T
    bus_ids, branch_ids = model.bus_ids, model.branch_ids
    if buses is not None:
        mat = mat[[model.bus_pos(b) for b in buses], :]
        bus_ids = tuple(buses)
    if branches is not None:
        mat = mat[:, [model.branch_pos(k) for k in branches]]
        branch_ids = tuple(branches)
    return Ptdf(mat, model.stamp, bus_ids, branch_ids)


def outage_islands(model: DcModel, outage: int) -> bool:
    c = model.branch_pos(outage)
    edges = [tuple(np.flatnonzero(model.incidence[r])) for r in range(len(model.branch_ids))
             if r != c]
    return len(connected_components(range(len(model.bus_ids)), edges)) > 1


def compute_lodf(model: DcModel, outage: int, ptdf: Ptdf | None = None) -> Lodf:
    """Post-outage flow on k equals P_k0 + LODF[k] * P_c0 (LODF[c] = -1)."""
    if outage_islands(model, outage):
        raise IslandedNetworkError(f"outage of branch {outage} islands the network")
    if ptdf is not None and ptdf.stamp != model.stamp:
        raise StampMismatchError("PTDF was computed on a different topology")
    full = ptdf if (ptdf is not None and ptdf.bus_ids == model.bus_ids
                    and ptdf.branch_ids == model.branch_ids) else compute_ptdf(model)
    c = model.branch_pos(outage)
    f = int(np.flatnonzero(model.incidence[c] > 0)[0])
    t = int(np.flatnonzero(model.incidence[c] < 0)[0])
    phi = full.matrix[f, :] - full.matrix[t, :]
    denom = 1.0 - phi[c]
    col = phi / denom
    col[c] = -1.0
    return Lodf(outage, col, model.stamp, model.branch_ids)


def compute_otdf(ptdf: Ptdf, lodf: Lodf) -> np.ndarray:
    """OTDF[n, k] = PTDF[n, k] + LODF[k, c] * PTDF[n, c] for outage c."""
    if ptdf.stamp != lodf.stamp:
        raise StampMismatchError("PTDF and LODF come from different models")
    if ptdf.branch_ids != lodf.branch_ids:
        raise StampMismatchError("PTDF and LODF cover different branches")
    c = ptdf.branch_ids.index(lodf.outage)
    return ptdf.matrix + np.outer(ptdf.matrix[:, c], lodf.column)


def dc_flow(model: DcModel, injections: Mapping[int, float]) -> dict[int, float]:
    """Branch MW flows of the B-theta solve; the reference absorbs any residual."""
    P = np.zeros(len(model.bus_ids))
    for bus, mw in injections.items():
        P[model.bus_pos(bus)] += mw
    P = (P + model.shift_injection) / model.base_mva
    nr = model.nonref
    theta = np.zeros(len(model.bus_ids))
    theta[nr] = np.linalg.solve(model.b_reduced, P[nr])
    flows = model.susceptance * (model.incidence @ theta + model.alpha) * model.base_mva
    return dict(zip(model.branch_ids, flows.tolist()))


@dataclass
class SensitivitySet:
    """PTDF over the full topology plus LODF columns per outaged branch."""

    model: DcModel
    ptdf: Ptdf
    lodf: dict[int, Lodf]

    def otdf(self, outage: int) -> np.ndarray:
        return compute_otdf(self.ptdf, self.lodf[outage])

    def ptdf_col(self, k: int) -> np.ndarray:
        return self.ptdf.matrix[:, self.model.branch_pos(k)]

    def otdf_col(self, k: int, outage: int) -> np.ndarray:
        lo = self.lodf[outage]
        ck = self.model.branch_pos(k)
        return self.ptdf_col(k) + lo.column[ck] * self.ptdf_col(outage)


def compute_sensitivities(model: DcModel, outages: Sequence[int] = ()) -> SensitivitySet:
    ptdf = compute_ptdf(model)
    lodf = {}
    for c in outages:
        if not outage_islands(model, c):
            lodf[c] = compute_lodf(model, c, ptdf)
    return SensitivitySet(model, ptdf, lodf)


def injections_of(case: Case, gen_p: Mapping[int, float] | None = None,
                  load_p: Mapping[int, float] | None = None) -> dict[int, float]:
    """Net MW injection per bus from unit outputs and loads (defaults: case values)."""
    inj = {b.id: 0.0 for b in case.buses}
    for g in case.generators:
        inj[g.bus] += gen_p[g.id] if gen_p is not None else g.p0
    for d in case.loads:
        inj[d.bus] -= load_p[d.id] if load_p is not None else d.p
    return inj
