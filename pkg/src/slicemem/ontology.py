"""Ontology schema, entity keys, statements and the validation predicate.

The schema is flat: every predicate maps to one value domain, and rules are
expressed with three constraint kinds (domain membership, required
co-predicate, forbidden value pair). Validation is a pure function of the
ontology, a slice and the statements being checked.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Iterable, Mapping, NamedTuple, Sequence, Union

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

KEY_SEPARATOR = "@"


class EntityKey(NamedTuple):
    """Root entity of a statement, rendered as ``predicate@subject``."""

    predicate: str
    subject: str

    def render(self) -> str:
        return f"{self.predicate}{KEY_SEPARATOR}{self.subject}"

    @classmethod
    def parse(cls, text: str) -> "EntityKey":
        predicate, sep, subject = text.partition(KEY_SEPARATOR)
        if not sep or not predicate or not subject:
            raise ValueError(f"not an entity key: {text!r}")
        return cls(predicate, subject)

    def __str__(self) -> str:
        return self.render()


@lru_cache(maxsize=1 << 16)
def render_key(key: EntityKey) -> str:
    """Cached :meth:`EntityKey.render`; keys recur constantly in traces."""
    return key.render()


def to_json_value(value: Any) -> Any:
    if isinstance(value, tuple):
        return [to_json_value(v) for v in value]
    return value


def from_json_value(value: Any) -> Any:
    """Inverse of :func:`to_json_value`; coordinate pairs come back as tuples."""
    if isinstance(value, list):
        return tuple(from_json_value(v) for v in value)
    return value


@dataclass(frozen=True, slots=True)
class Statement:
    key: EntityKey
    value: Any
    author: str = ""
    proposal_id: str = ""


@dataclass(frozen=True)
class UpdateProposal:
    author: str
    proposal_id: str
    statements: tuple[Statement, ...]
    probabilistic: bool = False
    adversarial: bool = False

    @classmethod
    def of(
        cls,
        author: str,
        proposal_id: str,
        pairs: Iterable[tuple[EntityKey, Any]],
        **flags: bool,
    ) -> "UpdateProposal":
        statements = tuple(Statement(k, v, author, proposal_id) for k, v in pairs)
        return cls(author, proposal_id, statements, **flags)

    @property
    def keys(self) -> frozenset[EntityKey]:
        return frozenset(s.key for s in self.statements)


# ---------------------------------------------------------------------------
# Value domains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnumDomain:
    values: frozenset[str]

    def contains(self, value: Any) -> bool:
        return isinstance(value, str) and value in self.values

    def to_dict(self) -> dict:
        return {"domain": "enum", "values": sorted(self.values)}


@dataclass(frozen=True)
class IntRange:
    low: int
    high: int

    def contains(self, value: Any) -> bool:
        return (
            isinstance(value, int)
            and not isinstance(value, bool)
            and self.low <= value <= self.high
        )

    def to_dict(self) -> dict:
        return {"domain": "int", "low": self.low, "high": self.high}


@dataclass(frozen=True)
class GridDomain:
    """Coordinate pairs ``(x, y)`` with ``0 <= x < width`` and ``0 <= y < height``."""

    width: int
    height: int

    def contains(self, value: Any) -> bool:
        if not isinstance(value, tuple) or len(value) != 2:
            return False
        x, y = value
        if not all(isinstance(c, int) and not isinstance(c, bool) for c in value):
            return False
        return 0 <= x < self.width and 0 <= y < self.height

    def to_dict(self) -> dict:
        return {"domain": "grid", "width": self.width, "height": self.height}


Domain = Union[EnumDomain, IntRange, GridDomain]


def domain_from_dict(spec: Mapping[str, Any]) -> Domain:
    kind = spec.get("domain")
    if kind == "enum":
        return EnumDomain(frozenset(spec["values"]))
    if kind == "int":
        return IntRange(int(spec["low"]), int(spec["high"]))
    if kind == "grid":
        return GridDomain(int(spec["width"]), int(spec["height"]))
    raise ValueError(f"unknown domain kind {kind!r}")


# ---------------------------------------------------------------------------
# Constraints
# ---------------------------------------------------------------------------

ANY = None  # wildcard trigger value


def _same_subject(context: Sequence[Statement], predicate: str, subject: str):
    for other in context:
        if other.key.predicate == predicate and other.key.subject == subject:
            yield other


@dataclass(frozen=True)
class DomainMembership:
    """Values of ``predicate`` must lie in ``allowed`` (narrower than the declared domain)."""

    id: str
    predicate: str
    allowed: Domain
    kind = "DomainMembership"

    @property
    def predicates(self) -> frozenset[str]:
        return frozenset({self.predicate})

    def holds(self, s: Statement, context: Sequence[Statement]) -> bool:
        return s.key.predicate != self.predicate or self.allowed.contains(s.value)

    def to_dict(self) -> dict:
        return {"id": self.id, "kind": self.kind, **self.allowed.to_dict()}


@dataclass(frozen=True)
class RequiredCoPredicate:
    """``predicate = value`` must come with a ``co_predicate`` statement on the same subject."""

    id: str
    predicate: str
    co_predicate: str
    value: Any = ANY
    kind = "RequiredCoPredicate"

    @property
    def predicates(self) -> frozenset[str]:
        return frozenset({self.predicate, self.co_predicate})

    def holds(self, s: Statement, context: Sequence[Statement]) -> bool:
        if s.key.predicate != self.predicate:
            return True
        if self.value is not ANY and s.value != self.value:
            return True
        return any(True for _ in _same_subject(context, self.co_predicate, s.key.subject))

    def to_dict(self) -> dict:
        d = {"id": self.id, "kind": self.kind, "co_predicate": self.co_predicate}
        if self.value is not ANY:
            d["value"] = to_json_value(self.value)
        return d


@dataclass(frozen=True)
class ForbiddenValuePair:
    """``predicate = value`` and ``other = other_value`` may not share a subject in one proposal."""

    id: str
    predicate: str
    value: Any
    other: str
    other_value: Any
    kind = "ForbiddenValuePair"

    @property
    def predicates(self) -> frozenset[str]:
        return frozenset({self.predicate, self.other})

    def holds(self, s: Statement, context: Sequence[Statement]) -> bool:
        if s.key.predicate == self.predicate and s.value == self.value:
            partner, partner_value = self.other, self.other_value
        elif s.key.predicate == self.other and s.value == self.other_value:
            partner, partner_value = self.predicate, self.value
        else:
            return True
        return not any(
            o.value == partner_value for o in _same_subject(context, partner, s.key.subject)
        )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "value": to_json_value(self.value),
            "other": self.other,
            "other_value": to_json_value(self.other_value),
        }


Constraint = Union[DomainMembership, RequiredCoPredicate, ForbiddenValuePair]


def constraint_from_dict(predicate: str, spec: Mapping[str, Any]) -> Constraint:
    kind = spec.get("kind")
    cid = spec["id"]
    if kind == "DomainMembership":
        return DomainMembership(cid, predicate, domain_from_dict(spec))
    if kind == "RequiredCoPredicate":
        return RequiredCoPredicate(
            cid, predicate, spec["co_predicate"], from_json_value(spec.get("value", ANY))
        )
    if kind == "ForbiddenValuePair":
        return ForbiddenValuePair(
            cid,
            predicate,
            from_json_value(spec["value"]),
            spec["other"],
            from_json_value(spec["other_value"]),
        )
    raise ValueError(f"unknown constraint kind {kind!r}")


# ---------------------------------------------------------------------------
# Validation results
# ---------------------------------------------------------------------------

UNDECLARED = "UndeclaredPredicate"
DOMAIN = "DomainViolation"
CONSTRAINT = "ConstraintViolation"
SLICE = "SliceViolation"


@dataclass(frozen=True)
class ValidationError:
    kind: str
    key: EntityKey
    rule: str | None = None

    def describe(self) -> str:
        rule = f"({self.rule})" if self.rule else ""
        return f"{self.kind}{rule} at {self.key.render()}"


@dataclass(frozen=True)
class ValidationResult:
    errors: tuple[ValidationError, ...] = ()

    @property
    def accepted(self) -> bool:
        return not self.errors

    def __bool__(self) -> bool:
        return self.accepted

    def kinds(self) -> set[str]:
        return {e.kind for e in self.errors}


ACCEPT = ValidationResult()


# ---------------------------------------------------------------------------
# Ontology and slices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SliceSpec:
    """An agent's ontology slice: which predicates it may read and write."""

    agent: str
    readable: frozenset[str]
    writable: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "readable", frozenset(self.readable))
        object.__setattr__(self, "writable", frozenset(self.writable))
        if not self.writable <= self.readable:
            extra = sorted(self.writable - self.readable)
            raise ValueError(f"slice {self.agent}: writable not readable: {extra}")

    def to_dict(self) -> dict:
        return {"readable": sorted(self.readable), "writable": sorted(self.writable)}

    @classmethod
    def from_dict(cls, agent: str, d: Mapping[str, Any]) -> "SliceSpec":
        return cls(agent, frozenset(d["readable"]), frozenset(d.get("writable", ())))


@dataclass(frozen=True)
class Ontology:
    predicates: Mapping[str, Domain]
    constraints: tuple[Constraint, ...] = ()
    _by_predicate: Mapping[str, tuple[Constraint, ...]] = field(
        init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        object.__setattr__(self, "predicates", dict(self.predicates))
        ids = [c.id for c in self.constraints]
        if len(ids) != len(set(ids)):
            raise ValueError("constraint ids must be unique")
        index: dict[str, list[Constraint]] = {p: [] for p in self.predicates}
        for c in self.constraints:
            unknown = c.predicates - self.predicates.keys()
            if unknown:
                raise ValueError(f"constraint {c.id} references undeclared {sorted(unknown)}")
            for p in c.predicates:
                index[p].append(c)
        object.__setattr__(
            self, "_by_predicate", {p: tuple(cs) for p, cs in index.items()}
        )

    def constraints_for(self, predicate: str) -> tuple[Constraint, ...]:
        return self._by_predicate.get(predicate, ())

    def check_slice(self, s: SliceSpec) -> None:
        unknown = s.readable - self.predicates.keys()
        if unknown:
            raise ValueError(f"slice {s.agent} reads undeclared predicates {sorted(unknown)}")

    def full_slice(self, agent: str) -> SliceSpec:
        names = frozenset(self.predicates)
        return SliceSpec(agent, names, names)

    # -- (de)serialization -------------------------------------------------

    def to_dict(self) -> dict:
        out: dict[str, Any] = {}
        for name in sorted(self.predicates):
            entry = self.predicates[name].to_dict()
            own = [c.to_dict() for c in self.constraints if c.predicate == name]
            if own:
                entry["constraints"] = own
            out[name] = entry
        return {"predicates": out}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Ontology":
        preds = d["predicates"]
        domains = {name: domain_from_dict(spec) for name, spec in preds.items()}
        constraints = [
            constraint_from_dict(name, c)
            for name, spec in preds.items()
            for c in spec.get("constraints", ())
        ]
        return cls(domains, tuple(constraints))

    @classmethod
    def load(cls, path: str | Path) -> "Ontology":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate_statement(
    ont: Ontology, s: Statement, context: Sequence[Statement] | None = None
) -> ValidationResult:
    """Check one statement: declared predicate, in-domain value, all touching constraints.

    ``context`` holds the other statements of the same proposal, which
    co-predicate and value-pair rules look at. A lone statement is its own
    context.
    """
    domain = ont.predicates.get(s.key.predicate)
    if domain is None:
        return ValidationResult((ValidationError(UNDECLARED, s.key),))
    errors: list[ValidationError] = []
    if not domain.contains(s.value):
        errors.append(ValidationError(DOMAIN, s.key, f"domain:{s.key.predicate}"))
    ctx = (s,) if context is None else context
    for c in ont.constraints_for(s.key.predicate):
        if not c.holds(s, ctx):
            kind = DOMAIN if isinstance(c, DomainMembership) else CONSTRAINT
            errors.append(ValidationError(kind, s.key, c.id))
    return ValidationResult(tuple(errors)) if errors else ACCEPT


def validate_proposal(ont: Ontology, slice: SliceSpec, p: UpdateProposal) -> ValidationResult:
    """All-or-nothing: every statement valid and inside the author's writable set."""
    if not p.statements:
        raise ValueError("empty proposal")
    errors: list[ValidationError] = []
    for s in p.statements:
        if s.key.predicate not in slice.writable:
            errors.append(ValidationError(SLICE, s.key))
        errors.extend(validate_statement(ont, s, p.statements).errors)
    return ValidationResult(tuple(errors)) if errors else ACCEPT


def validate_scoped(
    ont: Ontology, slice: SliceSpec, statements: Sequence[Statement]
) -> ValidationResult:
    """Revalidation by a reader: check only the statements inside its readable set."""
    errors: list[ValidationError] = []
    for s in statements:
        if s.key.predicate in slice.readable:
            errors.extend(validate_statement(ont, s, statements).errors)
    return ValidationResult(tuple(errors)) if errors else ACCEPT


def slice_overlaps(slice: SliceSpec, entities: Iterable[EntityKey]) -> bool:
    readable = slice.readable
    return any(k.predicate in readable for k in entities)


@dataclass(frozen=True)
class Approved:
    """Validation token. :func:`slicemem.memory.commit` accepts nothing else.

    ``ground_truth_valid`` is what the deterministic predicate said; it is
    False only when an imperfect validator let an invalid proposal through.
    """

    proposal: UpdateProposal
    ground_truth_valid: bool = True


def approve(ont: Ontology, slice: SliceSpec, p: UpdateProposal) -> Approved | None:
    return Approved(p) if validate_proposal(ont, slice, p).accepted else None
