"""Claims, assertions, autobiography, and snapshots.

A claim is an ordered list of name-value pairs produced by one source about
one car. An assertion is a signed set of claims: internal (car-signed, any
mix of in-car sources) or external (signed by the single outside source that
produced the claims). The autobiography is the car's full union of
assertions; a snapshot is a selectively disclosed subset whose entries are
re-signed over exactly the claims they reveal.

All types are immutable values; operations are pure given their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from . import crypto
from .canonical import canonical_json_bytes
from .crypto import SealedKeyStore
from .errors import (
    EmptyAssertionError,
    EncodingError,
    IntegrityError,
    PartialExternalError,
    PolicyTypeError,
    SelectionError,
    SourceMixError,
    UnknownSignerError,
    ValidationError,
)

INTERNAL = "internal"
EXTERNAL_VEHICLE = "external-vehicle"
EXTERNAL_INFRASTRUCTURE = "external-infrastructure"
EXTERNAL_ORGANIZATION = "external-organization"

SOURCE_KINDS = (
    INTERNAL,
    EXTERNAL_VEHICLE,
    EXTERNAL_INFRASTRUCTURE,
    EXTERNAL_ORGANIZATION,
)

# in-car component categories
COMPONENTS = (
    "powertrain",
    "chassis",
    "body",
    "infotainment",
    "communications",
    "diagnostics",
)

AGGREGATION_OPS = ("sum", "max", "count", "drop")

Scalar = str | int | float | bool


@dataclass(frozen=True)
class SourceId:
    kind: str
    entity_id: str
    component: str | None = None

    def validate(self) -> None:
        if self.kind not in SOURCE_KINDS:
            raise ValidationError(f"unknown source kind {self.kind!r}")
        if not self.entity_id:
            raise ValidationError("source entity_id must be non-empty")
        if self.kind == INTERNAL:
            if self.component not in COMPONENTS:
                raise ValidationError(
                    f"internal source needs a component from {COMPONENTS}"
                )
        elif self.component is not None:
            raise ValidationError("external sources carry no component")

    @property
    def is_internal(self) -> bool:
        return self.kind == INTERNAL

    def to_dict(self) -> dict:
        doc = {"kind": self.kind, "entity_id": self.entity_id}
        if self.component is not None:
            doc["component"] = self.component
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "SourceId":
        return cls(
            kind=doc["kind"],
            entity_id=doc["entity_id"],
            component=doc.get("component"),
        )


@dataclass(frozen=True)
class Claim:
    claim_id: str
    source: SourceId
    pairs: tuple[tuple[str, Scalar], ...]
    timestamp: int  # UTC milliseconds
    subject_car: str

    def validate(self) -> None:
        if not self.claim_id:
            raise ValidationError("claim_id must be non-empty")
        self.source.validate()
        if not self.pairs:
            raise ValidationError(f"claim {self.claim_id} has no pairs")
        names = [n for n, _ in self.pairs]
        if len(set(names)) != len(names):
            raise ValidationError(f"claim {self.claim_id} has duplicate pair names")
        for name, value in self.pairs:
            if not name:
                raise ValidationError(f"claim {self.claim_id} has an empty pair name")
            if not isinstance(value, (str, int, float, bool)):
                raise ValidationError(
                    f"claim {self.claim_id} pair {name!r} has unsupported value type"
                )
        if not isinstance(self.timestamp, int) or self.timestamp <= 0:
            raise ValidationError(f"claim {self.claim_id} timestamp must be > 0")
        if not self.subject_car:
            raise ValidationError(f"claim {self.claim_id} lacks a subject car")

    def value_of(self, name: str) -> Scalar | None:
        for pair_name, value in self.pairs:
            if pair_name == name:
                return value
        return None

    def to_dict(self) -> dict:
        return {
            "type": "claim",
            "claim_id": self.claim_id,
            "source": self.source.to_dict(),
            "pairs": [[name, value] for name, value in self.pairs],
            "timestamp": self.timestamp,
            "subject_car": self.subject_car,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Claim":
        return cls(
            claim_id=doc["claim_id"],
            source=SourceId.from_dict(doc["source"]),
            pairs=tuple((name, value) for name, value in doc["pairs"]),
            timestamp=doc["timestamp"],
            subject_car=doc["subject_car"],
        )


@dataclass(frozen=True)
class Assertion:
    assertion_id: str
    kind: str  # "internal" | "external"
    claims: tuple[Claim, ...]
    signer_id: str
    signature: bytes
    created_at: int

    def claim_ids(self) -> tuple[str, ...]:
        return tuple(c.claim_id for c in self.claims)

    def get_claim(self, claim_id: str) -> Claim | None:
        for claim in self.claims:
            if claim.claim_id == claim_id:
                return claim
        return None

    @property
    def subject_car(self) -> str:
        return self.claims[0].subject_car if self.claims else ""

    def to_dict(self) -> dict:
        return {
            "type": "assertion",
            "assertion_id": self.assertion_id,
            "kind": self.kind,
            "claims": [c.to_dict() for c in self.claims],
            "signer_id": self.signer_id,
            "signature": self.signature.hex(),
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Assertion":
        return cls(
            assertion_id=doc["assertion_id"],
            kind=doc["kind"],
            claims=tuple(Claim.from_dict(c) for c in doc["claims"]),
            signer_id=doc["signer_id"],
            signature=bytes.fromhex(doc["signature"]),
            created_at=doc["created_at"],
        )


@dataclass(frozen=True)
class Autobiography:
    car_id: str
    internal_assertions: tuple[Assertion, ...]
    external_assertions: tuple[Assertion, ...]
    version: int

    def all_assertions(self) -> tuple[Assertion, ...]:
        return self.internal_assertions + self.external_assertions

    def find(self, assertion_id: str) -> Assertion | None:
        for assertion in self.all_assertions():
            if assertion.assertion_id == assertion_id:
                return assertion
        return None

    def claim_pairs(self) -> set[tuple[str, str]]:
        """Set of (assertion_id, claim_id) pairs, used by the subset law."""
        return {
            (a.assertion_id, c.claim_id)
            for a in self.all_assertions()
            for c in a.claims
        }

    def to_dict(self) -> dict:
        return {
            "type": "autobiography",
            "car_id": self.car_id,
            "version": self.version,
            "internal_assertions": [a.to_dict() for a in self.internal_assertions],
            "external_assertions": [a.to_dict() for a in self.external_assertions],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Autobiography":
        return cls(
            car_id=doc["car_id"],
            internal_assertions=tuple(
                Assertion.from_dict(a) for a in doc["internal_assertions"]
            ),
            external_assertions=tuple(
                Assertion.from_dict(a) for a in doc["external_assertions"]
            ),
            version=doc["version"],
        )


@dataclass(frozen=True)
class SelectedAssertion:
    """One snapshot entry: a claim subset re-signed over exactly that subset."""

    assertion_id: str
    kind: str
    signer_id: str
    claims: tuple[Claim, ...]
    signature: bytes

    def to_dict(self) -> dict:
        return {
            "assertion_id": self.assertion_id,
            "kind": self.kind,
            "signer_id": self.signer_id,
            "claims": [c.to_dict() for c in self.claims],
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SelectedAssertion":
        return cls(
            assertion_id=doc["assertion_id"],
            kind=doc["kind"],
            signer_id=doc["signer_id"],
            claims=tuple(Claim.from_dict(c) for c in doc["claims"]),
            signature=bytes.fromhex(doc["signature"]),
        )


@dataclass(frozen=True)
class Snapshot:
    car_id: str
    selected: tuple[SelectedAssertion, ...]
    purpose: str
    created_at: int
    snapshot_id: str = ""

    def claim_pairs(self) -> set[tuple[str, str]]:
        return {
            (s.assertion_id, c.claim_id) for s in self.selected for c in s.claims
        }

    def to_dict(self) -> dict:
        return {
            "type": "snapshot",
            "snapshot_id": self.snapshot_id,
            "car_id": self.car_id,
            "purpose": self.purpose,
            "created_at": self.created_at,
            "selected": [s.to_dict() for s in self.selected],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Snapshot":
        return cls(
            snapshot_id=doc.get("snapshot_id", ""),
            car_id=doc["car_id"],
            purpose=doc["purpose"],
            created_at=doc["created_at"],
            selected=tuple(SelectedAssertion.from_dict(s) for s in doc["selected"]),
        )


# -- encoding and signing bytes ------------------------------------------------

Encodable = Claim | Assertion | Autobiography | Snapshot


def canonical_encode(item: Encodable) -> bytes:
    """Canonical bytes for hashing/anchoring; rejects invariant violations."""
    try:
        if isinstance(item, Claim):
            item.validate()
        elif isinstance(item, Assertion):
            _validate_assertion_shape(item)
        elif isinstance(item, (Autobiography, Snapshot)):
            pass  # built through constructors that already validated members
        else:
            raise EncodingError(f"cannot encode {type(item).__name__}")
    except ValidationError as exc:
        raise EncodingError(str(exc)) from exc
    return canonical_json_bytes(item.to_dict())


def claims_signing_bytes(claims: Iterable[Claim]) -> bytes:
    """The byte string assertion signatures commit to: the sorted claim set."""
    ordered = sorted(claims, key=lambda c: c.claim_id)
    for claim in ordered:
        claim.validate()
    return canonical_json_bytes([c.to_dict() for c in ordered])


def _dedupe_claims(claims: Iterable[Claim]) -> tuple[Claim, ...]:
    by_id: dict[str, Claim] = {}
    for claim in claims:
        seen = by_id.get(claim.claim_id)
        if seen is None:
            by_id[claim.claim_id] = claim
        elif seen != claim:
            raise ValidationError(
                f"conflicting claims share claim_id {claim.claim_id!r}"
            )
    return tuple(sorted(by_id.values(), key=lambda c: c.claim_id))


def _validate_assertion_shape(assertion: Assertion) -> None:
    if assertion.kind not in ("internal", "external"):
        raise ValidationError(f"unknown assertion kind {assertion.kind!r}")
    if not assertion.claims:
        raise ValidationError(f"assertion {assertion.assertion_id} has no claims")
    for claim in assertion.claims:
        claim.validate()


def _assertion_id(signer_id: str, created_at: int, claims_bytes: bytes) -> str:
    body = canonical_json_bytes(
        {
            "signer_id": signer_id,
            "created_at": created_at,
            "claims_digest": crypto.hash_bytes(claims_bytes).hex,
        }
    )
    return "as-" + crypto.hash_bytes(body).hex[:16]


def make_internal_assertion(
    claims: Iterable[Claim],
    car: SealedKeyStore,
    created_at: int,
    assertion_id: str | None = None,
) -> Assertion:
    """Car-signed union of in-car claims (duplicates by claim_id collapse)."""
    deduped = _dedupe_claims(claims)
    if not deduped:
        raise EmptyAssertionError("internal assertion needs at least one claim")
    for claim in deduped:
        claim.validate()
        if not claim.source.is_internal:
            raise SourceMixError(
                f"claim {claim.claim_id} is not from an internal source"
            )
        if claim.subject_car != car.entity_id:
            raise ValidationError(
                f"claim {claim.claim_id} subjects {claim.subject_car!r}, "
                f"not {car.entity_id!r}"
            )
    signed = claims_signing_bytes(deduped)
    return Assertion(
        assertion_id=assertion_id or _assertion_id(car.entity_id, created_at, signed),
        kind="internal",
        claims=deduped,
        signer_id=car.entity_id,
        signature=car.sign(signed),
        created_at=created_at,
    )


def make_external_assertion(
    claims: Iterable[Claim],
    source: SealedKeyStore,
    created_at: int,
    assertion_id: str | None = None,
) -> Assertion:
    """Assertion over claims from exactly one external source, source-signed."""
    deduped = _dedupe_claims(claims)
    if not deduped:
        raise EmptyAssertionError("external assertion needs at least one claim")
    subjects = {c.subject_car for c in deduped}
    if len(subjects) != 1:
        raise ValidationError("external assertion claims subject different cars")
    for claim in deduped:
        claim.validate()
        if claim.source.is_internal:
            raise SourceMixError(
                f"claim {claim.claim_id} is internal; external assertion expected"
            )
        if claim.source.entity_id != source.entity_id:
            raise SourceMixError(
                f"claim {claim.claim_id} comes from {claim.source.entity_id!r}, "
                f"not {source.entity_id!r}"
            )
    signed = claims_signing_bytes(deduped)
    return Assertion(
        assertion_id=assertion_id
        or _assertion_id(source.entity_id, created_at, signed),
        kind="external",
        claims=deduped,
        signer_id=source.entity_id,
        signature=source.sign(signed),
        created_at=created_at,
    )


def verify_assertion(
    assertion: Assertion, directory: Mapping[str, bytes]
) -> bool:
    """Signature plus kind/source rules, against the registered key directory."""
    if assertion.signer_id not in directory:
        raise UnknownSignerError(f"signer {assertion.signer_id!r} not in directory")
    try:
        _validate_assertion_shape(assertion)
    except ValidationError:
        return False
    if assertion.kind == "internal":
        for claim in assertion.claims:
            if not claim.source.is_internal:
                return False
            if claim.subject_car != assertion.signer_id:
                return False
    else:
        sources = {c.source for c in assertion.claims}
        if len(sources) != 1:
            return False
        source = next(iter(sources))
        if source.is_internal or source.entity_id != assertion.signer_id:
            return False
    return crypto.verify(
        claims_signing_bytes(assertion.claims),
        assertion.signature,
        directory[assertion.signer_id],
    )


def build_autobiography(
    internal: Iterable[Assertion],
    external: Iterable[Assertion],
    prev_version: int,
    directory: Mapping[str, bytes],
) -> Autobiography:
    """Union of all assertions to date; every input must verify."""
    internal = list(internal)
    external = list(external)
    for assertion in internal:
        if assertion.kind != "internal":
            raise ValidationError(
                f"{assertion.assertion_id} is not an internal assertion"
            )
    for assertion in external:
        if assertion.kind != "external":
            raise ValidationError(
                f"{assertion.assertion_id} is not an external assertion"
            )
    offenders = [
        a.assertion_id
        for a in internal + external
        if not verify_assertion(a, directory)
    ]
    if offenders:
        raise IntegrityError(
            f"assertions failed verification: {', '.join(sorted(offenders))}",
            offenders=sorted(offenders),
        )
    cars = {a.subject_car for a in internal + external}
    if len(cars) > 1:
        raise ValidationError(f"assertions subject multiple cars: {sorted(cars)}")

    def dedupe_sort(items: list[Assertion]) -> tuple[Assertion, ...]:
        by_id = {a.assertion_id: a for a in items}
        return tuple(
            sorted(by_id.values(), key=lambda a: (a.created_at, a.assertion_id))
        )

    car_id = next(iter(cars)) if cars else ""
    return Autobiography(
        car_id=car_id,
        internal_assertions=dedupe_sort(internal),
        external_assertions=dedupe_sort(external),
        version=prev_version + 1,
    )


def build_snapshot(
    bio: Autobiography,
    selection: Mapping[str, Iterable[str]],
    signers: Mapping[str, SealedKeyStore],
    purpose: str,
    created_at: int,
    snapshot_id: str = "",
) -> Snapshot:
    """Selective disclosure: keep only the selected claims of each assertion.

    A proper subset needs a fresh signature from the original signer (the car
    for its own assertions). External assertions whose signer key is not
    available must be included whole, reusing the original signature.
    """
    selected: list[SelectedAssertion] = []
    for assertion_id in sorted(selection):
        assertion = bio.find(assertion_id)
        if assertion is None:
            raise SelectionError(f"unknown assertion {assertion_id!r}")
        wanted = set(selection[assertion_id])
        known = set(assertion.claim_ids())
        missing = wanted - known
        if missing:
            raise SelectionError(
                f"assertion {assertion_id} has no claims {sorted(missing)}"
            )
        if not wanted:
            raise SelectionError(f"empty selection for assertion {assertion_id}")
        subset = tuple(
            sorted(
                (c for c in assertion.claims if c.claim_id in wanted),
                key=lambda c: c.claim_id,
            )
        )
        if wanted == known:
            signature = assertion.signature  # whole set: original signature holds
        else:
            signer = signers.get(assertion.signer_id)
            if signer is None:
                if assertion.kind == "external":
                    raise PartialExternalError(
                        f"cannot subset external assertion {assertion_id} "
                        f"without signer {assertion.signer_id!r}"
                    )
                raise UnknownSignerError(
                    f"no key store for signer {assertion.signer_id!r}"
                )
            signature = signer.sign(claims_signing_bytes(subset))
        selected.append(
            SelectedAssertion(
                assertion_id=assertion_id,
                kind=assertion.kind,
                signer_id=assertion.signer_id,
                claims=subset,
                signature=signature,
            )
        )
    return Snapshot(
        snapshot_id=snapshot_id,
        car_id=bio.car_id,
        selected=tuple(selected),
        purpose=purpose,
        created_at=created_at,
    )


def verify_snapshot(snapshot: Snapshot, directory: Mapping[str, bytes]) -> bool:
    """Every selected entry's signature verifies over exactly its claim set."""
    for entry in snapshot.selected:
        if entry.signer_id not in directory:
            return False
        if not entry.claims:
            return False
        for claim in entry.claims:
            if claim.subject_car != snapshot.car_id:
                return False
        if not crypto.verify(
            claims_signing_bytes(entry.claims),
            entry.signature,
            directory[entry.signer_id],
        ):
            return False
    return True


def aggregate_claims(
    claims: Iterable[Claim],
    policy: Mapping[str, str],
    car_id: str,
    timestamp: int,
    claim_id: str = "aggregate",
) -> Claim:
    """Collapse per-trip claims into one privacy-preserving summary claim.

    Policy maps field names to sum/max/count/drop; anything unmapped is
    dropped. The result always carries a claim_count pair, is attributed to
    the car itself, and never contains a dropped field name.
    """
    claims = list(claims)
    for op in policy.values():
        if op not in AGGREGATION_OPS:
            raise ValidationError(f"unknown aggregation op {op!r}")
    for claim in claims:
        if claim.subject_car != car_id:
            raise ValidationError(
                f"claim {claim.claim_id} subjects {claim.subject_car!r}, "
                f"not {car_id!r}"
            )

    pairs: list[tuple[str, Scalar]] = [("claim_count", len(claims))]
    for name in sorted(policy):
        op = policy[name]
        if op == "drop":
            continue
        values = [
            value
            for claim in claims
            for pair_name, value in claim.pairs
            if pair_name == name
        ]
        if op == "count":
            pairs.append((f"{name}_count", len(values)))
            continue
        if not values:
            continue  # nothing to sum or max over
        for value in values:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise PolicyTypeError(
                    f"field {name!r} has non-numeric value {value!r} under {op}"
                )
        if op == "sum":
            pairs.append((f"total_{name}", sum(values)))
        else:
            pairs.append((f"max_{name}", max(values)))

    return Claim(
        claim_id=claim_id,
        source=SourceId(kind=INTERNAL, entity_id=car_id, component="diagnostics"),
        pairs=tuple(pairs),
        timestamp=timestamp,
        subject_car=car_id,
    )
