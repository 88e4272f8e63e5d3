"""Bus-branch grid model, case-file I/O, loss conversion and offer linearization.

Case files are UTF-8 text split into ``[section]`` blocks with one
whitespace-separated record per line.  ``#`` starts a comment.  Column order
per section::

    [meta]      key value                      (base_mva, name)
    [bus]       id base_kv is_ref v_set
    [branch]    id from to x alpha rate_a rate_c in_service r b
    [gen]       id bus p_min p_max p0 energy_ramp spin_ramp reserve_price dispatchable
    [gencost]   gen kind econ_min no_load_price (breadth price)...
    [load]      id bus p p0 kind q
    [interface] id limit_base members [ctg=limit ...]

Reactance, resistance and charging are per unit on ``base_mva``; rates and
powers are MW / MVA / MVAr; angles are radians; ramps are MW/min.
Interface members are comma separated signed branch ids (``+3,-5``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Iterable, Mapping, Sequence


class CaseFormatError(ValueError):
    """Malformed or inconsistent case document."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonConvexOfferError(ValueError):
    pass


class LoadKind(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    VIRTUAL = "virtual"


class CurveKind(str, Enum):
    BLOCK = "block"
    SLOPE = "slope"


@dataclass(frozen=True)
class Bus:
    id: int
    base_kv: float
    is_reference: bool = False
    v_set: float = 1.0


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    x: float
    alpha: float = 0.0
    rate_a: float = 9999.0
    rate_c: float = 9999.0
    in_service: bool = True
    r: float = 0.0
    b: float = 0.0


@dataclass(frozen=True)
class CostSegment:
    breadth: float
    price: float


@dataclass(frozen=True)
class CostCurve:
    """Incremental offer.

    The first (flat) segment covers ``[0, econ_min]`` at ``no_load_price``.
    For block curves each further segment is priced flat; for slope curves a
    segment's price is the marginal cost at its right end, and the marginal
    cost rises linearly from the previous segment's end price.
    """

    kind: CurveKind
    econ_min: float
    no_load_price: float
    segments: tuple[CostSegment, ...]

    def blocks(self) -> list[CostSegment]:
        """Block segments covering ``[0, p_max]`` (block curves only)."""
        if self.kind is not CurveKind.BLOCK:
            raise ValueError("slope curve must be linearized first")
        out = []
        if self.econ_min > 0:
            out.append(CostSegment(self.econ_min, self.no_load_price))
        out.extend(self.segments)
        return out

    def cost(self, p: float) -> float:
        """Exact cost of producing ``p`` MW for one hour under this curve."""
        total = self.no_load_price * min(p, self.econ_min)
        left = self.econ_min
        start_price = self.no_load_price
        for seg in self.segments:
            if p <= left:
                break
            t = min(p - left, seg.breadth)
            if self.kind is CurveKind.BLOCK or seg.breadth == 0:
                total += t * seg.price
            else:
                slope = (seg.price - start_price) / seg.breadth
                total += t * start_price + 0.5 * slope * t * t
            left += seg.breadth
            start_price = seg.price
        return total


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    p_min: float
    p_max: float
    p0: float
    energy_ramp: float
    spin_ramp: float
    reserve_price: float = 0.0
    dispatchable: bool = True
    cost: CostCurve | None = None


@dataclass(frozen=True)
class Load:
    id: int
    bus: int
    p: float
    p0: float
    kind: LoadKind = LoadKind.POSITIVE
    q: float = 0.0


@dataclass(frozen=True)
class Interface:
    id: int
    members: tuple[tuple[int, int], ...]  # (branch id, orientation sign)
    limit_base: float
    limit_ctg: Mapping[str, float] = field(default_factory=dict)

    def limit_for(self, ctg_id: str | None) -> float:
        if ctg_id is None:
            return self.limit_base
        return self.limit_ctg.get(ctg_id, self.limit_base)

    def __hash__(self):
        return hash((self.id, self.members, self.limit_base))


@dataclass(frozen=True)
class Config:
    """Run parameters.  Times in minutes, prices in $/MWh."""

    pct: float = 1.0
    pctc: float = 1.0
    t_ed: float = 5.0
    t_sr: float = 10.0
    shed_penalty: float = 5000.0
    price_increment: float = 1.0
    participation_rule: str = "headroom"
    derate: float = 1.0
    reserve: bool = True
    load_growth: float = 1.0
    virtual_loads_in_payment: bool = True

    def __post_init__(self):
        for name in ("pct", "pctc", "t_ed", "t_sr", "shed_penalty",
                     "price_increment", "derate", "load_growth"):
            if not getattr(self, name) > 0:
                raise ValueError(f"config {name} must be positive")
        if self.participation_rule not in ("headroom", "equal"):
            raise ValueError(f"unknown participation rule {self.participation_rule!r}")


@dataclass(frozen=True)
class Case:
    name: str
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    loads: tuple[Load, ...]
    interfaces: tuple[Interface, ...] = ()

    @cached_property
    def bus_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def branch_map(self) -> dict[int, Branch]:
        return {br.id: br for br in self.branches}

    @cached_property
    def gen_map(self) -> dict[int, Generator]:
        return {g.id: g for g in self.generators}

    @property
    def reference_bus(self) -> int:
        refs = [b.id for b in self.buses if b.is_reference]
        if not refs:
            raise CaseFormatError("case has no reference bus")
        return refs[0]

    @property
    def in_service_branches(self) -> list[Branch]:
        return [br for br in self.branches if br.in_service]

    def without_branch(self, branch_id: int) -> "Case":
        return replace(self, branches=tuple(br for br in self.branches if br.id != branch_id))

    def with_dispatch(self, p0: Mapping[int, float]) -> "Case":
        gens = tuple(replace(g, p0=p0.get(g.id, g.p0)) for g in self.generators)
        return replace(self, generators=gens)

    def total_load(self) -> float:
        return sum(ld.p for ld in self.loads)


# ---------------------------------------------------------------- parsing

_SECTIONS = ("meta", "bus", "branch", "gen", "gencost", "load", "interface")


def _num(tok: str, lineno: int, what: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise CaseFormatError(f"bad {what} value {tok!r}", lineno) from None


def _int(tok: str, lineno: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise CaseFormatError(f"bad {what} id {tok!r}", lineno) from None


def _flag(tok: str, lineno: int) -> bool:
    if tok in ("1", "true", "yes"):
        return True
    if tok in ("0", "false", "no"):
        return False
    raise CaseFormatError(f"bad flag {tok!r}", lineno)


def parse_case(text: str) -> Case:
    """Parse a case document into a validated :class:`Case`."""
    records: dict[str, list[tuple[int, list[str]]]] = {s: [] for s in _SECTIONS}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise CaseFormatError(f"malformed section header {line!r}", lineno)
            section = line[1:-1].strip().lower()
            if section not in records:
                raise CaseFormatError(f"unknown section [{section}]", lineno)
            continue
        if section is None:
            raise CaseFormatError("record outside of any section", lineno)
        records[section].append((lineno, line.split()))

    meta = {"name": "case", "base_mva": "100"}
    for lineno, toks in records["meta"]:
        if len(toks) != 2:
            raise CaseFormatError("meta records are 'key value'", lineno)
        meta[toks[0]] = toks[1]
    base_mva = _num(meta["base_mva"], 0, "base_mva")
    if base_mva <= 0:
        raise CaseFormatError("base_mva must be positive")

    def expect(toks, n, lineno, sect):
        if len(toks) != n:
            raise CaseFormatError(f"[{sect}] record needs {n} columns, got {len(toks)}", lineno)

    buses: list[Bus] = []
    bus_lines: dict[int, int] = {}
    for lineno, toks in records["bus"]:
        expect(toks, 4, lineno, "bus")
        bid = _int(toks[0], lineno, "bus")
        if bid in bus_lines:
            raise CaseFormatError(f"duplicate bus id {bid}", lineno)
        bus_lines[bid] = lineno
        buses.append(Bus(bid, _num(toks[1], lineno, "base_kv"), _flag(toks[2], lineno),
                         _num(toks[3], lineno, "v_set")))
    if not buses:
        raise CaseFormatError("case has no buses")
    if sum(b.is_reference for b in buses) != 1:
        raise CaseFormatError("exactly one reference bus required")

    def known_bus(bid, lineno):
        if bid not in bus_lines:
            raise CaseFormatError(f"unknown bus {bid}", lineno)
        return bid

    branches: list[Branch] = []
    seen: set[int] = set()
    for lineno, toks in records["branch"]:
        expect(toks, 10, lineno, "branch")
        kid = _int(toks[0], lineno, "branch")
        if kid in seen:
            raise CaseFormatError(f"duplicate branch id {kid}", lineno)
        seen.add(kid)
        f = known_bus(_int(toks[1], lineno, "bus"), lineno)
        t = known_bus(_int(toks[2], lineno, "bus"), lineno)
        x, alpha, ra, rc = (_num(v, lineno, "branch") for v in toks[3:7])
        if f == t:
            raise CaseFormatError(f"branch {kid} connects bus {f} to itself", lineno)
        if not x > 0:
            raise CaseFormatError(f"branch {kid} has non-positive reactance", lineno)
        if not (rc >= ra > 0):
            raise CaseFormatError(f"branch {kid} needs rate_c >= rate_a > 0", lineno)
        branches.append(Branch(kid, f, t, x, alpha, ra, rc, _flag(toks[7], lineno),
                               _num(toks[8], lineno, "r"), _num(toks[9], lineno, "b")))

    gens: dict[int, Generator] = {}
    gen_lines: dict[int, int] = {}
    for lineno, toks in records["gen"]:
        expect(toks, 9, lineno, "gen")
        gid = _int(toks[0], lineno, "gen")
        if gid in gens:
            raise CaseFormatError(f"duplicate gen id {gid}", lineno)
        bus = known_bus(_int(toks[1], lineno, "bus"), lineno)
        pmin, pmax, p0, mrr, srr, csr = (_num(v, lineno, "gen") for v in toks[2:8])
        if not pmin <= p0 <= pmax:
            raise CaseFormatError(f"gen {gid} needs p_min <= p0 <= p_max", lineno)
        if mrr < 0 or srr < 0:
            raise CaseFormatError(f"gen {gid} has a negative ramp rate", lineno)
        gens[gid] = Generator(gid, bus, pmin, pmax, p0, mrr, srr, csr, _flag(toks[8], lineno))
        gen_lines[gid] = lineno

    for lineno, toks in records["gencost"]:
        if len(toks) < 4 or (len(toks) - 4) % 2:
            raise CaseFormatError("[gencost] record is 'gen kind econ_min price (breadth price)...'",
                                  lineno)
        gid = _int(toks[0], lineno, "gen")
        if gid not in gens:
            raise CaseFormatError(f"unknown gen {gid}", lineno)
        if gens[gid].cost is not None:
            raise CaseFormatError(f"duplicate cost curve for gen {gid}", lineno)
        try:
            kind = CurveKind(toks[1])
        except ValueError:
            raise CaseFormatError(f"unknown curve kind {toks[1]!r}", lineno) from None
        vals = [_num(v, lineno, "gencost") for v in toks[2:]]
        segs = tuple(CostSegment(vals[i], vals[i + 1]) for i in range(2, len(vals), 2))
        curve = CostCurve(kind, vals[0], vals[1], segs)
        try:
            validate_curve(curve, gens[gid].p_max)
        except (NonConvexOfferError, ValueError) as exc:
            raise CaseFormatError(f"gen {gid}: {exc}", lineno) from None
        gens[gid] = replace(gens[gid], cost=curve)
    for gid, g in gens.items():
        if g.dispatchable and g.cost is None:
            raise CaseFormatError(f"dispatchable gen {gid} has no cost curve", gen_lines[gid])

    loads: list[Load] = []
    seen = set()
    for lineno, toks in records["load"]:
        expect(toks, 6, lineno, "load")
        lid = _int(toks[0], lineno, "load")
        if lid in seen:
            raise CaseFormatError(f"duplicate load id {lid}", lineno)
        seen.add(lid)
        bus = known_bus(_int(toks[1], lineno, "bus"), lineno)
        try:
            kind = LoadKind(toks[4])
        except ValueError:
            raise CaseFormatError(f"unknown load kind {toks[4]!r}", lineno) from None
        if kind is LoadKind.VIRTUAL:
            raise CaseFormatError("virtual loads come from loss conversion only", lineno)
        p, p0 = _num(toks[2], lineno, "load"), _num(toks[3], lineno, "load")
        if kind is LoadKind.NEGATIVE and not p < 0:
            raise CaseFormatError(f"negative load {lid} must have p < 0", lineno)
        if kind is LoadKind.POSITIVE and p < 0:
            raise CaseFormatError(f"positive load {lid} has p < 0", lineno)
        loads.append(Load(lid, bus, p, p0, kind, _num(toks[5], lineno, "q")))

    branch_ids = {br.id for br in branches}
    interfaces: list[Interface] = []
    seen = set()
    for lineno, toks in records["interface"]:
        if len(toks) < 3:
            raise CaseFormatError("[interface] record is 'id limit members [ctg=limit ...]'",
                                  lineno)
        iid = _int(toks[0], lineno, "interface")
        if iid in seen:
            raise CaseFormatError(f"duplicate interface id {iid}", lineno)
        seen.add(iid)
        limit = _num(toks[1], lineno, "interface limit")
        members = []
        for tok in toks[2].split(","):
            sign = -1 if tok.startswith("-") else 1
            kid = _int(tok.lstrip("+-"), lineno, "branch")
            if kid not in branch_ids:
                raise CaseFormatError(f"unknown branch {kid} in interface {iid}", lineno)
            members.append((kid, sign))
        if len({k for k, _ in members}) != len(members):
            raise CaseFormatError(f"interface {iid} repeats a branch", lineno)
        per_ctg = {}
        for tok in toks[3:]:
            key, sep, val = tok.partition("=")
            if not sep:
                raise CaseFormatError(f"bad contingency limit {tok!r}", lineno)
            per_ctg[key] = _num(val, lineno, "interface limit")
        interfaces.append(Interface(iid, tuple(members), limit, per_ctg))

    return Case(meta["name"], base_mva, tuple(buses), tuple(branches),
                tuple(gens.values()), tuple(loads), tuple(interfaces))


def read_case(path) -> Case:
    with open(path, encoding="utf-8") as fh:
        return parse_case(fh.read())


def validate_curve(curve: CostCurve, p_max: float) -> None:
    if curve.econ_min < 0 or any(s.breadth < 0 for s in curve.segments):
        raise ValueError("negative segment breadth")
    total = curve.econ_min + sum(s.breadth for s in curve.segments)
    if abs(total - p_max) > 1e-6 * max(1.0, p_max):
        raise ValueError(f"segments cover {total} MW, expected p_max {p_max}")
    prices = [curve.no_load_price] + [s.price for s in curve.segments]
    if any(b < a for a, b in zip(prices, prices[1:])):
        raise NonConvexOfferError("offer prices decrease (non-convex offer)")


def _fmt(v: float) -> str:
    return repr(float(v))


def serialize_case(case: Case) -> str:
    """Inverse of :func:`parse_case` (floats use their shortest exact repr)."""
    out = ["[meta]", f"name {case.name}", f"base_mva {_fmt(case.base_mva)}", "", "[bus]"]
    out += [f"{b.id} {_fmt(b.base_kv)} {int(b.is_reference)} {_fmt(b.v_set)}" for b in case.buses]
    out += ["", "[branch]"]
    out += [f"{k.id} {k.from_bus} {k.to_bus} {_fmt(k.x)} {_fmt(k.alpha)} {_fmt(k.rate_a)} "
            f"{_fmt(k.rate_c)} {int(k.in_service)} {_fmt(k.r)} {_fmt(k.b)}" for k in case.branches]
    out += ["", "[gen]"]
    out += [f"{g.id} {g.bus} {_fmt(g.p_min)} {_fmt(g.p_max)} {_fmt(g.p0)} {_fmt(g.energy_ramp)} "
            f"{_fmt(g.spin_ramp)} {_fmt(g.reserve_price)} {int(g.dispatchable)}"
            for g in case.generators]
    out += ["", "[gencost]"]
    for g in case.generators:
        if g.cost is None:
            continue
        c = g.cost
        pairs = " ".join(f"{_fmt(s.breadth)} {_fmt(s.price)}" for s in c.segments)
        out.append(f"{g.id} {c.kind.value} {_fmt(c.econ_min)} {_fmt(c.no_load_price)} {pairs}".rstrip())
    out += ["", "[load]"]
    out += [f"{d.id} {d.bus} {_fmt(d.p)} {_fmt(d.p0)} {d.kind.value} {_fmt(d.q)}" for d in case.loads]
    if case.interfaces:
        out += ["", "[interface]"]
        for i in case.interfaces:
            members = ",".join(f"{'+' if s > 0 else '-'}{k}" for k, s in i.members)
            extra = "".join(f" {c}={_fmt(v)}" for c, v in sorted(i.limit_ctg.items()))
            out.append(f"{i.id} {_fmt(i.limit_base)} {members}{extra}")
    return "\n".join(out) + "\n"


# ------------------------------------------------------- loss conversion

def losses_to_virtual_loads(case: Case, ac) -> Case:
    """Split each in-service branch's AC loss evenly onto its terminal buses.

    Virtual loads carry ``p0 == p`` since losses are held fixed over the
    dispatch interval.
    """
    if not getattr(ac, "converged", False):
        raise ValueError("AC solution is not converged")
    next_id = max((d.id for d in case.loads), default=0) + 1
    extra = []
    for br in case.in_service_branches:
        loss = float(ac.branch_loss[br.id])
        if loss == 0.0:
            continue
        for bus in (br.from_bus, br.to_bus):
            extra.append(Load(next_id, bus, loss / 2, loss / 2, LoadKind.VIRTUAL, 0.0))
            next_id += 1
    return replace(case, loads=case.loads + tuple(extra))


def strip_virtual_loads(case: Case) -> Case:
    return replace(case, loads=tuple(d for d in case.loads if d.kind is not LoadKind.VIRTUAL))


# --------------------------------------------------------- linearization

def _nearest_int(x: float) -> int:
    return int(math.floor(x + 0.5))


def linearize_slope_curve(gen: Generator, price_increment: float) -> Generator:
    """Replace each slope segment by equal-breadth blocks at midpoint prices.

    A segment rising from ``c_lo`` to ``c_hi`` over ``width`` MW becomes
    ``nss = max(1, round((c_hi - c_lo) / price_increment))`` blocks of
    ``width / nss`` MW; block ``i`` is priced at the marginal cost at its
    midpoint.
    """
    curve = gen.cost
    if curve is None or curve.kind is not CurveKind.SLOPE:
        raise ValueError(f"gen {gen.id} does not have a slope curve")
    if price_increment <= 0:
        raise ValueError("price increment must be positive")
    validate_curve(curve, gen.p_max)

    blocks = []
    start = curve.no_load_price
    for seg in curve.segments:
        rise = seg.price - start
        nss = max(1, _nearest_int(rise / price_increment))
        ds = seg.breadth / nss
        slope = rise / seg.breadth if seg.breadth > 0 else 0.0
        for i in range(1, nss + 1):
            blocks.append(CostSegment(ds, start + (i - 0.5) * slope * ds))
        start = seg.price
    new_curve = CostCurve(CurveKind.BLOCK, curve.econ_min, curve.no_load_price, tuple(blocks))
    return replace(gen, cost=new_curve)


def block_curve(gen: Generator, price_increment: float) -> list[CostSegment]:
    """Block segments of ``gen`` over ``[0, p_max]``, linearizing if needed."""
    if gen.cost is None:
        return []
    if gen.cost.kind is CurveKind.SLOPE:
        gen = linearize_slope_curve(gen, price_increment)
    return gen.cost.blocks()


def loads_at(case: Case) -> dict[int, list[Load]]:
    out: dict[int, list[Load]] = {b.id: [] for b in case.buses}
    for d in case.loads:
        out[d.bus].append(d)
    return out


def gens_at(case: Case) -> dict[int, list[Generator]]:
    out: dict[int, list[Generator]] = {b.id: [] for b in case.buses}
    for g in case.generators:
        out[g.bus].append(g)
    return out


def connected_components(bus_ids: Iterable[int], edges: Sequence[tuple[int, int]]) -> list[list[int]]:
    """Connected components (sorted lists of bus ids) via union-find."""
    parent = {b: b for b in bus_ids}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for f, t in edges:
        rf, rt = find(f), find(t)
        if rf != rt:
            parent[max(rf, rt)] = min(rf, rt)
    groups: dict[int, list[int]] = {}
    for b in parent:
        groups.setdefault(find(b), []).append(b)
    return sorted(sorted(g) for g in groups.values())


def islands(case: Case, skip: Iterable[int] = ()) -> list[list[int]]:
    skip = set(skip)
    edges = [(br.from_bus, br.to_bus) for br in case.in_service_branches if br.id not in skip]
    return connected_components((b.id for b in case.buses), edges)
