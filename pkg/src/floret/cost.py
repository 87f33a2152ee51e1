"""Interposer network area and relative fabrication cost.

Relative cost of a design with network area ``A`` and ``L`` chiplets per
wafer, against a reference design (area ``A_ref``, ``L_ref`` chiplets)::

    C = (L_ref / L) * exp(-D0 * (A_ref - A))

With equal ``L`` the ratio of two designs depends only on their area
difference.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping, Optional

from .noi_model import Topology

A_REF = 864.0  # mm^2
L_REF = 64


@dataclass(frozen=True)
class CostParams:
    D0: float = 0.01  # defects per mm^2
    A_ref: float = A_REF
    L_ref: int = L_REF
    router_area_coeff: float = 0.5 / 16  # router_area(p) = coeff * p**2, so 4 ports -> 0.5 mm^2
    link_area_per_hoplen: float = 0.25  # mm^2 per unit hop length

    def __post_init__(self):
        if self.D0 <= 0 or self.A_ref <= 0 or self.L_ref <= 0:
            raise ValueError("D0, A_ref and L_ref must be positive")
        if self.router_area_coeff <= 0 or self.link_area_per_hoplen <= 0:
            raise ValueError("area coefficients must be positive")

    def router_area(self, ports: int) -> float:
        return self.router_area_coeff * ports * ports

    @classmethod
    def from_dict(cls, d: Mapping) -> "CostParams":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown cost parameter(s): {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def noi_area(topo: Topology, params: CostParams = CostParams()) -> float:
    routers = sum(params.router_area(topo.degree(i)) for i in range(topo.n))
    links = sum(ln.hop_length for ln in topo.links) * params.link_area_per_hoplen
    return routers + links


def fab_cost_from_area(area: float, params: CostParams = CostParams(), L: Optional[float] = None) -> float:
    L = params.L_ref if L is None else L
    if L <= 0:
        raise ValueError("chiplets per wafer must be positive")
    return (params.L_ref / L) * math.exp(-params.D0 * (params.A_ref - area))


def fab_cost(topo: Topology, params: CostParams = CostParams(), L: Optional[float] = None) -> float:
    return fab_cost_from_area(noi_area(topo, params), params, L)


def cost_ratio(a: Topology, b: Topology, params: CostParams = CostParams()) -> float:
    """fab_cost(a) / fab_cost(b) at equal chiplets per wafer."""
    return math.exp(-params.D0 * (noi_area(b, params) - noi_area(a, params)))


def cost_table(topos: Mapping[str, Topology], params: CostParams = CostParams(), baseline: str = "floret") -> list[dict]:
    base = noi_area(topos[baseline], params) if baseline in topos else None
    rows = []
    for name, t in topos.items():
        area = noi_area(t, params)
        row = {"topology": name, "routers": t.n, "links": len(t.links),
               "total_hop_length": sum(ln.hop_length for ln in t.links),
               "noi_area_mm2": area, "fab_cost": fab_cost_from_area(area, params)}
        if base is not None:
            row["cost_vs_" + baseline] = math.exp(-params.D0 * (base - area))
        rows.append(row)
    return rows
