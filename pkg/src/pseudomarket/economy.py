"""Economies of indivisible goods with ordinal bundle preferences.

Goods are indexed ``0..m-1`` and a bundle is a tuple of 0/1 entries, one per
good. Agent ids are 1-based (as in the JSON format); ``arrival[k]`` is the id
of the agent arriving in position ``k + 1``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from itertools import combinations, permutations
from typing import Iterable, Sequence

import jsonschema
import numpy as np

Bundle = tuple[int, ...]


def empty_bundle(m: int) -> Bundle:
    return (0,) * m


def bundle_from_goods(goods: Iterable[int], m: int) -> Bundle:
    chosen = set(goods)
    for j in chosen:
        if not 0 <= j < m:
            raise IndexError(f"good index {j} out of range for m={m}")
    return tuple(1 if j in chosen else 0 for j in range(m))


def bundle_goods(x: Bundle) -> tuple[int, ...]:
    return tuple(j for j, v in enumerate(x) if v)


def bundle_size(x: Bundle) -> int:
    return sum(x)


def bundle_minus(x: Bundle, j: int) -> Bundle:
    """Return ``(x - e^j)^+``: the bundle with good ``j`` removed (if held)."""
    if not 0 <= j < len(x):
        raise IndexError(f"good index {j} out of range for a bundle over {len(x)} goods")
    return x[:j] + (0,) + x[j + 1:]


def bundle_cost(prices: Sequence[Fraction], x: Bundle) -> Fraction:
    return sum((p for p, v in zip(prices, x) if v), Fraction(0))


def bundle_label(x: Bundle) -> str:
    goods = bundle_goods(x)
    return "{" + ",".join(str(j) for j in goods) + "}"


def _bundle_sort_key(x: Bundle) -> tuple:
    return (bundle_size(x), bundle_goods(x))


@dataclass(frozen=True)
class AgentType:
    """A feasible bundle set together with a strict ranking of it (best first)."""

    feasible: frozenset
    order: tuple

    @classmethod
    def from_order(cls, order: Sequence[Bundle]) -> AgentType:
        order = tuple(tuple(int(v) for v in x) for x in order)
        return cls(feasible=frozenset(order), order=order)

    @cached_property
    def _rank(self) -> dict:
        top = len(self.order) - 1
        return {x: top - i for i, x in enumerate(self.order)}

    def rank(self, x: Bundle) -> int | None:
        """Bottom-up rank (0 for the worst bundle), ``None`` if infeasible."""
        return self._rank.get(tuple(x))

    def weakly_prefers(self, x: Bundle, y: Bundle) -> bool:
        """``x ⪰ y``; an infeasible ``y`` is worse than every feasible bundle.

        An infeasible ``x`` is only weakly preferred to an infeasible ``y``
        when they are the same bundle.
        """
        rx, ry = self.rank(x), self.rank(y)
        if ry is None:
            return rx is not None or tuple(x) == tuple(y)
        if rx is None:
            return False
        return rx >= ry

    @property
    def top(self) -> Bundle:
        return self.order[0]

    @property
    def sigma(self) -> int:
        return max((bundle_size(x) for x in self.feasible), default=0)


@dataclass(frozen=True)
class TypeTable:
    types: tuple
    assignment: tuple  # agent id - 1 -> index into ``types``

    @classmethod
    def from_agent_types(cls, agent_types: Sequence[AgentType]) -> TypeTable:
        index: dict[AgentType, int] = {}
        types: list[AgentType] = []
        assignment = []
        for t in agent_types:
            if t not in index:
                index[t] = len(types)
                types.append(t)
            assignment.append(index[t])
        return cls(tuple(types), tuple(assignment))

    @property
    def tau(self) -> int:
        return len(self.types)


@dataclass(frozen=True)
class Economy:
    n: int
    m: int
    capacities: tuple
    arrival: tuple
    types: TypeTable

    @classmethod
    def build(
        cls,
        agent_types: Sequence[AgentType],
        capacities: Sequence[int],
        arrival: Sequence[int] | None = None,
    ) -> Economy:
        """Build an economy from per-agent types (indexed by agent id - 1)."""
        n = len(agent_types)
        m = len(capacities)
        if arrival is None:
            arrival = range(1, n + 1)
        return cls(
            n=n,
            m=m,
            capacities=tuple(int(c) for c in capacities),
            arrival=tuple(int(a) for a in arrival),
            types=TypeTable.from_agent_types(agent_types),
        )

    def agent_type(self, agent_id: int) -> AgentType:
        return self.types.types[self.types.assignment[agent_id - 1]]

    def type_at(self, position: int) -> AgentType:
        """Type of the agent arriving at 1-based ``position``."""
        return self.agent_type(self.arrival[position - 1])

    def arriving_types(self) -> list[AgentType]:
        return [self.agent_type(a) for a in self.arrival]

    def type_counts(self) -> list[int]:
        counts = [0] * self.types.tau
        for t in self.types.assignment:
            counts[t] += 1
        return counts

    @property
    def sigma(self) -> int:
        return max((t.sigma for t in self.types.types), default=0)

    def in_arrival_order(self) -> Economy:
        """Same economy with agents relabelled so that ids follow arrival."""
        return Economy.build(self.arriving_types(), self.capacities)

    def with_arrival(self, arrival: Sequence[int]) -> Economy:
        return Economy(self.n, self.m, self.capacities, tuple(int(a) for a in arrival), self.types)

    def with_capacities(self, capacities: Sequence[int]) -> Economy:
        return Economy(self.n, self.m, tuple(int(c) for c in capacities), self.arrival, self.types)

    def is_feasible(self, bundles: Sequence[Bundle], capacities: Sequence[int] | None = None) -> bool:
        caps = self.capacities if capacities is None else capacities
        totals = [sum(x[j] for x in bundles) for j in range(self.m)]
        return all(t <= c for t, c in zip(totals, caps))


def validate_economy(e: Economy) -> list[str]:
    """List every violated invariant; an empty list means the economy is well formed."""
    problems: list[str] = []
    if len(e.capacities) != e.m:
        problems.append(f"capacities: expected {e.m} entries, got {len(e.capacities)}")
    for j, c in enumerate(e.capacities, start=1):
        if not isinstance(c, int) or isinstance(c, bool):
            problems.append(f"good {j}: capacity is not an integer")
        elif c < 1:
            problems.append(f"good {j}: capacity < 1")
    if sorted(e.arrival) != list(range(1, e.n + 1)):
        problems.append("arrival: not a permutation of 1..n")
    if len(e.types.assignment) != e.n:
        problems.append(f"assignment: expected {e.n} entries, got {len(e.types.assignment)}")
    if len(set(e.types.types)) != len(e.types.types):
        problems.append("types: duplicate type entries")

    type_problems: list[list[str]] = []
    for t in e.types.types:
        found = []
        zero = empty_bundle(e.m)
        if any(len(x) != e.m for x in t.feasible) or any(len(x) != e.m for x in t.order):
            found.append(f"bundle length differs from m={e.m}")
        if any(v not in (0, 1) for x in t.feasible for v in x):
            found.append("bundle entries must be 0/1")
        if zero not in t.feasible:
            found.append("empty bundle missing")
        elif t.order and t.order[-1] != zero:
            found.append("empty bundle not ranked last")
        if len(t.order) != len(set(t.order)) or set(t.order) != set(t.feasible):
            found.append("order does not rank each feasible bundle exactly once")
        type_problems.append(found)

    for agent, ti in enumerate(e.types.assignment, start=1):
        if not 0 <= ti < len(e.types.types):
            problems.append(f"agent {agent}: type index {ti} out of range")
            continue
        problems.extend(f"agent {agent}: {msg}" for msg in type_problems[ti])
    return problems


# --------------------------------------------------------------------------
# Instance generation

PRESETS = {
    "uniform": {},
    "fewtypes": {},
    # Families demand a location plus at most one extra service.
    "refugee": {"sigma_max": 2, "types_per_good": 1, "cap_scale": 1.0},
    # Centres combined with weekday blocks: pairs, several family profiles.
    "daycare": {"sigma_max": 2, "types_per_good": 2, "cap_scale": 0.8},
    # Take-off/landing slot pairs, strongly complementary, few airlines.
    "airport": {"sigma_max": 2, "types_per_good": 1, "cap_scale": 0.5, "pairs_only": True},
}


@dataclass(frozen=True)
class GeneratorConfig:
    n: int
    m: int
    cap_min: int = 1
    cap_max: int = 3
    sigma_max: int = 2
    n_types: int | None = None
    preset: str = "uniform"
    max_feasible: int = 6

    @classmethod
    def from_dict(cls, d: dict) -> GeneratorConfig:
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "n": self.n, "m": self.m, "cap_min": self.cap_min, "cap_max": self.cap_max,
            "sigma_max": self.sigma_max, "n_types": self.n_types, "preset": self.preset,
            "max_feasible": self.max_feasible,
        }


class GeneratorError(ValueError):
    pass


def _candidate_bundles(m: int, sigma_max: int, pairs_only: bool = False) -> list[Bundle]:
    pairs_only = pairs_only and m >= 2 and sigma_max >= 2
    sizes = [2] if pairs_only else range(1, min(sigma_max, m) + 1)
    out = []
    for size in sizes:
        for goods in combinations(range(m), size):
            out.append(bundle_from_goods(goods, m))
    if pairs_only:
        out += [bundle_from_goods([j], m) for j in range(m)]
    return out


def count_types(n_bundles: int, max_nonempty: int) -> int:
    """Number of distinct types over ``n_bundles`` nonempty candidates."""
    top = min(n_bundles, max_nonempty)
    return sum(math.comb(n_bundles, k) * math.factorial(k) for k in range(1, top + 1))


def _random_type(rng: np.random.Generator, candidates: list[Bundle], max_nonempty: int, m: int) -> AgentType:
    top = min(len(candidates), max_nonempty)
    k = int(rng.integers(1, top + 1))
    picked = rng.choice(len(candidates), size=k, replace=False)
    order = [candidates[i] for i in rng.permutation(picked)]
    return AgentType.from_order(order + [empty_bundle(m)])


def _all_types(candidates: list[Bundle], max_nonempty: int, m: int) -> list[AgentType]:
    out = []
    for k in range(1, min(len(candidates), max_nonempty) + 1):
        for perm in permutations(candidates, k):
            out.append(AgentType.from_order(list(perm) + [empty_bundle(m)]))
    return out


def generate_economy(cfg: GeneratorConfig, seed: int) -> Economy:
    """Draw a random economy; the result is a pure function of ``(cfg, seed)``."""
    if cfg.preset not in PRESETS:
        raise GeneratorError(f"unknown preset {cfg.preset!r}; choose from {sorted(PRESETS)}")
    if cfg.n < 1 or cfg.m < 1:
        raise GeneratorError("n and m must be positive")
    preset = PRESETS[cfg.preset]
    sigma_max = min(cfg.sigma_max, preset.get("sigma_max", cfg.sigma_max))
    if sigma_max < 1:
        raise GeneratorError("no nonempty feasible bundles (sigma_max < 1)")
    if cfg.max_feasible < 2:
        raise GeneratorError("no nonempty feasible bundles (max_feasible < 2)")
    if not 1 <= cfg.cap_min <= cfg.cap_max:
        raise GeneratorError("capacity range must satisfy 1 <= cap_min <= cap_max")

    n_types = cfg.n_types
    if n_types is None and "types_per_good" in preset:
        n_types = min(cfg.n, max(2, preset["types_per_good"] * cfg.m))
    if n_types is None and cfg.preset == "fewtypes":
        n_types = min(cfg.n, 3)

    candidates = _candidate_bundles(cfg.m, sigma_max, preset.get("pairs_only", False))
    max_nonempty = cfg.max_feasible - 1
    possible = count_types(len(candidates), max_nonempty)
    if n_types is not None:
        if n_types < 1:
            raise GeneratorError("type count target must be positive")
        if n_types > possible:
            raise GeneratorError(
                f"type count target {n_types} exceeds the {possible} possible types "
                f"(m={cfg.m}, sigma_max={sigma_max}, max_feasible={cfg.max_feasible})"
            )
        if n_types > cfg.n:
            raise GeneratorError(f"type count target {n_types} exceeds the number of agents {cfg.n}")

    rng = np.random.default_rng([seed, 0x0EC0])
    if n_types is None:
        agent_types = [_random_type(rng, candidates, max_nonempty, cfg.m) for _ in range(cfg.n)]
    else:
        if possible <= 20000:
            pool = _all_types(candidates, max_nonempty, cfg.m)
            distinct = [pool[i] for i in rng.choice(len(pool), size=n_types, replace=False)]
        else:
            seen: dict[AgentType, None] = {}
            while len(seen) < n_types:
                seen.setdefault(_random_type(rng, candidates, max_nonempty, cfg.m), None)
            distinct = list(seen)
        # every type appears at least once; the rest are drawn uniformly
        labels = list(range(n_types)) + [int(v) for v in rng.integers(0, n_types, size=cfg.n - n_types)]
        labels = [labels[i] for i in rng.permutation(cfg.n)]
        agent_types = [distinct[i] for i in labels]

    scale = preset.get("cap_scale", 1.0)
    caps = rng.integers(cfg.cap_min, cfg.cap_max + 1, size=cfg.m)
    caps = [max(1, int(round(c * scale))) for c in caps]
    arrival = [int(a) + 1 for a in rng.permutation(cfg.n)]
    return Economy.build(agent_types, caps, arrival)


# --------------------------------------------------------------------------
# JSON serialization

class EconomyFormatError(ValueError):
    """Malformed economy document; ``path`` is a JSON pointer to the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '/'}: {message}")
        self.path = path


_INT = {"type": "integer"}
ECONOMY_SCHEMA = {
    "type": "object",
    "required": ["n", "m", "capacities", "arrival", "types", "assignment"],
    "properties": {
        "n": {"type": "integer", "minimum": 0},
        "m": {"type": "integer", "minimum": 0},
        "capacities": {"type": "array", "items": _INT},
        "arrival": {"type": "array", "items": _INT},
        "types": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["feasible", "order"],
                "properties": {
                    "feasible": {"type": "array", "items": {"type": "array", "items": _INT}},
                    "order": {"type": "array", "items": _INT},
                },
            },
        },
        "assignment": {"type": "array", "items": _INT},
    },
}


def _pointer(parts: Iterable) -> str:
    return "".join(f"/{p}" for p in parts)


def economy_to_dict(e: Economy) -> dict:
    types = []
    for t in e.types.types:
        feasible = sorted(t.feasible, key=_bundle_sort_key)
        index = {x: i for i, x in enumerate(feasible)}
        types.append({
            "feasible": [list(bundle_goods(x)) for x in feasible],
            "order": [index[x] for x in t.order],
        })
    return {
        "n": e.n,
        "m": e.m,
        "capacities": list(e.capacities),
        "arrival": list(e.arrival),
        "types": types,
        "assignment": list(e.types.assignment),
    }


def economy_from_dict(doc) -> Economy:
    errors = sorted(jsonschema.Draft7Validator(ECONOMY_SCHEMA).iter_errors(doc), key=lambda er: list(er.absolute_path))
    if errors:
        err = errors[0]
        parts = list(err.absolute_path)
        if err.validator == "required":
            missing = err.message.split("'")[1]
            parts.append(missing)
        raise EconomyFormatError(_pointer(parts), err.message)

    m = doc["m"]
    types = []
    for ti, tdoc in enumerate(doc["types"]):
        feasible = []
        for bi, goods in enumerate(tdoc["feasible"]):
            try:
                feasible.append(bundle_from_goods(goods, m))
            except IndexError as exc:
                raise EconomyFormatError(_pointer(["types", ti, "feasible", bi]), str(exc)) from None
        order = []
        for oi, idx in enumerate(tdoc["order"]):
            if not 0 <= idx < len(feasible):
                raise EconomyFormatError(_pointer(["types", ti, "order", oi]), f"bundle index {idx} out of range")
            order.append(feasible[idx])
        types.append(AgentType(feasible=frozenset(feasible), order=tuple(order)))
    return Economy(
        n=doc["n"],
        m=m,
        capacities=tuple(doc["capacities"]),
        arrival=tuple(doc["arrival"]),
        types=TypeTable(tuple(types), tuple(doc["assignment"])),
    )


def save_economy(e: Economy) -> bytes:
    return json.dumps(economy_to_dict(e), separators=(",", ":")).encode()


def load_economy(data: bytes | str) -> Economy:
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise EconomyFormatError("", f"invalid JSON: {exc}") from None
    return economy_from_dict(doc)


# --------------------------------------------------------------------------
# rationals at the serialization boundary

def as_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, float):
        return Fraction(v)
    return Fraction(v)


def fmt_fraction(q: Fraction) -> str:
    q = Fraction(q)
    return f"{q.numerator}/{q.denominator}"
