"""Contract state machines executed on committed transactions.

The Repository is the on-chain directory (identity -> public key + contract
address). Each car has a CarContract with a consent-gated inbox for external
assertions; organizations, owners, agencies and vendors get EntityContracts
that receive snapshots. Ownership transfer swaps the car contract for a fresh
one under the new owner, imports the stored assertions plus a privacy-
preserving aggregate, and tombstones the old contract.

The engine is a deterministic state machine over committed transactions: it
never raises on adversarial input, it records an effect (ok or a named error)
per transaction, so replaying a chain always reproduces identical state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import crypto, model
from .canonical import canonical_json_bytes
from .errors import (
    AlreadyDecided,
    AuthorizationError,
    CarbioError,
    ContractDestroyed,
    DuplicateAddress,
    DuplicateIdentity,
    IntegrityError,
    TransferRejected,
    UnknownEntity,
    UnknownSender,
    ValidationError,
)
from .ledger import (
    AnchorHash,
    Block,
    ContractMessage,
    Ledger,
    OwnershipTransfer,
    Register,
    Transaction,
)

ERROR_CLASSES: dict[str, type[CarbioError]] = {
    "DuplicateIdentity": DuplicateIdentity,
    "DuplicateAddress": DuplicateAddress,
    "UnknownSender": UnknownSender,
    "UnknownEntity": UnknownEntity,
    "ContractDestroyed": ContractDestroyed,
    "AuthorizationError": AuthorizationError,
    "AlreadyDecided": AlreadyDecided,
    "TransferRejected": TransferRejected,
    "IntegrityError": IntegrityError,
    "ValidationError": ValidationError,
}


@dataclass(frozen=True)
class RepositoryEntry:
    identity: str
    public_key: bytes
    contract_address: str

    def to_dict(self) -> dict:
        return {
            "identity": self.identity,
            "public_key": self.public_key.hex(),
            "contract_address": self.contract_address,
        }


class RepositoryState:
    """One-stop directory: identity -> (public key, contract address)."""

    def __init__(self, maintainer_id: str):
        self.maintainer_id = maintainer_id
        self.entries: dict[str, RepositoryEntry] = {}

    def register(
        self, identity: str, public_key: bytes, contract_address: str
    ) -> RepositoryEntry:
        if identity in self.entries:
            raise DuplicateIdentity(f"{identity!r} already registered")
        if any(
            e.contract_address == contract_address for e in self.entries.values()
        ):
            raise DuplicateAddress(f"{contract_address!r} already in use")
        entry = RepositoryEntry(identity, public_key, contract_address)
        self.entries[identity] = entry
        return entry

    def lookup(self, identity: str) -> RepositoryEntry | None:
        return self.entries.get(identity)

    def remap_address(self, identity: str, contract_address: str) -> None:
        old = self.entries[identity]
        self.entries[identity] = RepositoryEntry(
            old.identity, old.public_key, contract_address
        )

    def directory_view(self) -> dict[str, bytes]:
        return {i: e.public_key for i, e in self.entries.items()}

    def to_dict(self) -> dict:
        return {
            "maintainer_id": self.maintainer_id,
            "entries": {i: e.to_dict() for i, e in sorted(self.entries.items())},
        }


@dataclass
class PendingAssertion:
    pending_id: str
    sender_id: str
    assertion: dict | str | None  # dict, or hex ciphertext when encrypted
    encrypted: bool
    status: str  # pending | approved | rejected
    received_at_height: int

    def to_dict(self) -> dict:
        return {
            "pending_id": self.pending_id,
            "sender_id": self.sender_id,
            "assertion": self.assertion,
            "encrypted": self.encrypted,
            "status": self.status,
            "received_at_height": self.received_at_height,
        }


@dataclass
class AuditStub:
    """What remains of a rejected inbox entry: ids and the decision only."""

    pending_id: str
    sender_id: str
    decision: str
    height: int
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "pending_id": self.pending_id,
            "sender_id": self.sender_id,
            "decision": self.decision,
            "height": self.height,
            "reason": self.reason,
        }


@dataclass
class CarContract:
    address: str
    car_id: str
    owner_id: str
    anchors: dict[str, list[dict]] = field(default_factory=dict)
    inbox: list[PendingAssertion] = field(default_factory=list)
    stored_assertions: list[dict] = field(default_factory=list)
    aggregate_assertion: dict | None = None
    notifications: list[dict] = field(default_factory=list)
    audit: list[AuditStub] = field(default_factory=list)
    destroyed: bool = False
    tombstone: dict | None = None
    inbox_seq: int = 0

    def _guard(self) -> None:
        if self.destroyed:
            raise ContractDestroyed(f"contract {self.address} is destroyed")

    def next_pending_id(self) -> str:
        self.inbox_seq += 1
        return f"{self.address}-p{self.inbox_seq}"

    def find_pending(self, pending_id: str) -> PendingAssertion | None:
        for entry in self.inbox:
            if entry.pending_id == pending_id:
                return entry
        return None

    # reads fail once the contract is tombstoned
    def read_inbox(self) -> list[PendingAssertion]:
        self._guard()
        return list(self.inbox)

    def read_stored_assertions(self) -> list[dict]:
        self._guard()
        return list(self.stored_assertions)

    def read_anchors(self) -> dict[str, list[dict]]:
        self._guard()
        return dict(self.anchors)

    def read_notifications(self) -> list[dict]:
        self._guard()
        return list(self.notifications)

    def read_owner(self) -> str:
        self._guard()
        return self.owner_id

    def to_dict(self) -> dict:
        if self.destroyed:
            return {
                "type": "car_contract",
                "address": self.address,
                "destroyed": True,
                "tombstone": self.tombstone,
            }
        return {
            "type": "car_contract",
            "address": self.address,
            "car_id": self.car_id,
            "owner_id": self.owner_id,
            "anchors": self.anchors,
            "inbox": [e.to_dict() for e in self.inbox],
            "stored_assertions": self.stored_assertions,
            "aggregate_assertion": self.aggregate_assertion,
            "notifications": self.notifications,
            "audit": [a.to_dict() for a in self.audit],
            "destroyed": False,
        }


@dataclass
class SnapshotRecord:
    snapshot: dict | str  # dict, or hex ciphertext when encrypted
    sender_car_id: str
    encrypted: bool
    verified: bool | None  # None while an encrypted snapshot awaits the ack
    failure: str = ""
    height: int = 0

    def to_dict(self) -> dict:
        return {
            "snapshot": self.snapshot,
            "sender_car_id": self.sender_car_id,
            "encrypted": self.encrypted,
            "verified": self.verified,
            "failure": self.failure,
            "height": self.height,
        }


@dataclass
class EntityContract:
    address: str
    entity_id: str
    received_snapshots: list[SnapshotRecord] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "type": "entity_contract",
            "address": self.address,
            "entity_id": self.entity_id,
            "received_snapshots": [s.to_dict() for s in self.received_snapshots],
        }


@dataclass(frozen=True)
class OwnershipTransferRecord:
    car_id: str
    old_owner_id: str
    new_owner_id: str
    aggregate_assertion_id: str
    old_contract_address: str
    new_contract_address: str
    gov_verifier_id: str
    status: str
    signature: bytes  # the government verifier's approval signature

    def to_dict(self) -> dict:
        return {
            "type": "ownership_transfer_record",
            "car_id": self.car_id,
            "old_owner_id": self.old_owner_id,
            "new_owner_id": self.new_owner_id,
            "aggregate_assertion_id": self.aggregate_assertion_id,
            "old_contract_address": self.old_contract_address,
            "new_contract_address": self.new_contract_address,
            "gov_verifier_id": self.gov_verifier_id,
            "status": self.status,
            "signature": self.signature.hex(),
        }


@dataclass(frozen=True)
class EffectRecord:
    tx_id: str
    ok: bool
    error: str = ""
    detail: str = ""


class ContractEngine:
    """Applies committed transactions, in order, to the contract state."""

    def __init__(self, maintainer_id: str, ledger: Ledger):
        self.repository = RepositoryState(maintainer_id)
        self.ledger = ledger
        self.contracts: dict[str, CarContract | EntityContract] = {}
        self.roles: dict[str, str] = {}
        self.transfers: list[OwnershipTransferRecord] = []
        self.events: list[dict] = []
        self.effects: dict[str, EffectRecord] = {}

    # -- helpers ---------------------------------------------------------------

    def _emit(self, height: int, tx_id: str, event: str, **data) -> None:
        self.events.append(
            {"seq": len(self.events) + 1, "height": height, "tx_id": tx_id,
             "event": event, **data}
        )

    def _ok(self, tx: Transaction) -> None:
        self.effects[tx.tx_id] = EffectRecord(tx.tx_id, True)

    def _error(self, tx: Transaction, height: int, error: str, detail: str) -> None:
        self.effects[tx.tx_id] = EffectRecord(tx.tx_id, False, error, detail)
        self._emit(height, tx.tx_id, "effect_error",
                   sender_id=tx.sender_id, error=error, detail=detail)

    def car_contract_of(self, car_id: str) -> CarContract | None:
        entry = self.repository.lookup(car_id)
        if entry is None:
            return None
        contract = self.contracts.get(entry.contract_address)
        return contract if isinstance(contract, CarContract) else None

    def entity_contract_of(self, entity_id: str) -> EntityContract | None:
        entry = self.repository.lookup(entity_id)
        if entry is None:
            return None
        contract = self.contracts.get(entry.contract_address)
        return contract if isinstance(contract, EntityContract) else None

    def export_state(self) -> dict:
        return {
            "type": "contract_state",
            "repository": self.repository.to_dict(),
            "roles": dict(sorted(self.roles.items())),
            "contracts": {
                addr: c.to_dict() for addr, c in sorted(self.contracts.items())
            },
            "transfers": [t.to_dict() for t in self.transfers],
        }

    def export_bytes(self) -> bytes:
        return canonical_json_bytes(self.export_state())

    # -- application --------------------------------------------------------------

    def apply_block(self, block: Block) -> None:
        for tx in block.transactions:
            self.apply_transaction(tx, block.height)

    def apply_transaction(self, tx: Transaction, height: int) -> None:
        payload = tx.payload
        if isinstance(payload, Register):
            self._handle_register(tx, payload, height)
        elif isinstance(payload, AnchorHash):
            self._handle_anchor(tx, payload, height)
        elif isinstance(payload, OwnershipTransfer):
            self._handle_transfer(tx, payload, height)
        elif isinstance(payload, ContractMessage):
            handler = {
                "deliver_assertion": self._handle_deliver,
                "owner_decide": self._handle_decide,
                "send_snapshot": self._handle_snapshot,
                "record_snapshot_verification": self._handle_snapshot_ack,
            }.get(payload.action)
            if handler is None:
                self._error(tx, height, "ValidationError",
                            f"unknown action {payload.action!r}")
            else:
                handler(tx, payload, height)
        else:
            self._error(tx, height, "ValidationError", "unknown payload")

    # -- registration ---------------------------------------------------------------

    def _handle_register(self, tx: Transaction, reg: Register, height: int) -> None:
        maintainer = self.repository.maintainer_id
        if tx.sender_id not in (maintainer, reg.identity):
            self._error(tx, height, "AuthorizationError",
                        "registration must come from the maintainer or the subject")
            return
        if reg.identity in self.repository.entries:
            self._error(tx, height, "DuplicateIdentity", reg.identity)
            return
        if any(e.contract_address == reg.contract_address
               for e in self.repository.entries.values()):
            self._error(tx, height, "DuplicateAddress", reg.contract_address)
            return
        if not reg.identity or not reg.contract_address:
            self._error(tx, height, "ValidationError", "empty identity or address")
            return

        if reg.role == "car":
            owner_id = reg.extra.get("owner_id", "")
            if owner_id not in self.repository.entries:
                self._error(tx, height, "UnknownSender",
                            f"car owner {owner_id!r} not registered")
                return
            if reg.certificate is None:
                self._error(tx, height, "ValidationError",
                            "car registration requires a vendor certificate")
                return
            cert = crypto.Certificate.from_dict(reg.certificate)
            issuer = self.repository.lookup(cert.issuer_id)
            issuer_key = (
                issuer.public_key if issuer is not None else
                self.ledger.bootstrap_directory.get(cert.issuer_id)
            )
            if (
                issuer_key is None
                or cert.subject_id != reg.identity
                or cert.subject_public_key != reg.public_key
                or not crypto.verify_certificate(cert, issuer_key)
            ):
                self._error(tx, height, "IntegrityError",
                            "vendor certificate does not verify")
                return
            contract: CarContract | EntityContract = CarContract(
                address=reg.contract_address, car_id=reg.identity,
                owner_id=owner_id,
            )
        else:
            contract = EntityContract(
                address=reg.contract_address, entity_id=reg.identity
            )

        self.repository.register(reg.identity, reg.public_key, reg.contract_address)
        self.roles[reg.identity] = reg.role
        self.contracts[reg.contract_address] = contract
        self._ok(tx)
        self._emit(height, tx.tx_id, "registered",
                   identity=reg.identity, role=reg.role,
                   address=reg.contract_address)

    # -- anchoring ----------------------------------------------------------------

    def _handle_anchor(self, tx: Transaction, anchor: AnchorHash, height: int) -> None:
        contract = self.car_contract_of(tx.sender_id)
        if contract is not None and not contract.destroyed:
            contract.anchors.setdefault(anchor.target_id, []).append(
                {
                    "target_kind": anchor.target_kind,
                    "digest": anchor.digest,
                    "algorithm_id": anchor.algorithm_id,
                    "height": height,
                    "tx_id": tx.tx_id,
                }
            )
        self._ok(tx)
        self._emit(height, tx.tx_id, "anchored",
                   sender_id=tx.sender_id, target_kind=anchor.target_kind,
                   target_id=anchor.target_id, digest=anchor.digest)

    # -- external assertion delivery --------------------------------------------------

    def _handle_deliver(self, tx: Transaction, msg: ContractMessage,
                        height: int) -> None:
        contract = self.contracts.get(msg.contract_id)
        if contract is None:
            self._error(tx, height, "UnknownEntity", msg.contract_id)
            return
        if not isinstance(contract, CarContract):
            self._error(tx, height, "ValidationError",
                        "assertions are delivered to car contracts")
            return
        if contract.destroyed:
            self._error(tx, height, "ContractDestroyed", contract.address)
            return
        if tx.sender_id not in self.repository.entries:
            self._error(tx, height, "UnknownSender", tx.sender_id)
            return
        encrypted = bool(msg.body.get("encrypted"))
        blob = msg.body.get("assertion")
        if blob is None or (not encrypted and not isinstance(blob, dict)):
            self._error(tx, height, "ValidationError", "missing assertion body")
            return
        entry = PendingAssertion(
            pending_id=contract.next_pending_id(),
            sender_id=tx.sender_id,
            assertion=blob,
            encrypted=encrypted,
            status="pending",
            received_at_height=height,
        )
        contract.inbox.append(entry)
        contract.notifications.append(
            {
                "kind": "incoming_assertion",
                "pending_id": entry.pending_id,
                "sender_id": tx.sender_id,
                "height": height,
            }
        )
        self._ok(tx)
        self._emit(height, tx.tx_id, "assertion_delivered",
                   car_id=contract.car_id, pending_id=entry.pending_id,
                   sender_id=tx.sender_id, encrypted=encrypted)
        self._emit(height, tx.tx_id, "owner_notified",
                   car_id=contract.car_id, owner_id=contract.owner_id,
                   pending_id=entry.pending_id)

    # -- consent decisions ------------------------------------------------------------

    def _handle_decide(self, tx: Transaction, msg: ContractMessage,
                       height: int) -> None:
        contract = self.contracts.get(msg.contract_id)
        if contract is None or not isinstance(contract, CarContract):
            self._error(tx, height, "UnknownEntity", msg.contract_id)
            return
        if contract.destroyed:
            self._error(tx, height, "ContractDestroyed", contract.address)
            return
        if tx.sender_id != contract.owner_id:
            self._error(tx, height, "AuthorizationError",
                        f"{tx.sender_id} is not the owner of {contract.car_id}")
            return
        pending_id = msg.body.get("pending_id", "")
        decision = msg.body.get("decision", "")
        entry = contract.find_pending(pending_id)
        if entry is None:
            self._error(tx, height, "ValidationError",
                        f"no inbox entry {pending_id!r}")
            return
        if entry.status != "pending":
            self._error(tx, height, "AlreadyDecided", pending_id)
            return
        if decision not in ("approve", "reject"):
            self._error(tx, height, "ValidationError",
                        f"unknown decision {decision!r}")
            return

        self._emit(height, tx.tx_id, "owner_decision",
                   car_id=contract.car_id, owner_id=tx.sender_id,
                   pending_id=pending_id, decision=decision)

        if decision == "reject":
            entry.status = "rejected"
            entry.assertion = None  # only the audit stub is retained
            contract.audit.append(
                AuditStub(pending_id, entry.sender_id, "reject", height)
            )
            self._ok(tx)
            return

        assertion_doc = msg.body.get("assertion") if entry.encrypted else entry.assertion
        failure = self._check_incoming_assertion(assertion_doc, entry.sender_id,
                                                 contract.car_id)
        if failure:
            entry.status = "rejected"
            entry.assertion = None
            contract.audit.append(
                AuditStub(pending_id, entry.sender_id, "approve", height,
                          reason=f"IntegrityError: {failure}")
            )
            self._ok(tx)
            self._emit(height, tx.tx_id, "assertion_rejected",
                       car_id=contract.car_id, pending_id=pending_id,
                       reason=failure)
            return

        entry.status = "approved"
        if entry.encrypted:
            entry.assertion = None  # ciphertext no longer needed
        contract.stored_assertions.append(assertion_doc)
        contract.audit.append(
            AuditStub(pending_id, entry.sender_id, "approve", height)
        )
        self._ok(tx)
        self._emit(height, tx.tx_id, "assertion_stored",
                   car_id=contract.car_id, pending_id=pending_id,
                   assertion_id=assertion_doc.get("assertion_id", ""))

    def _check_incoming_assertion(self, doc, sender_id: str, car_id: str) -> str:
        """Verifies an approved assertion; returns a failure reason or ''."""
        if not isinstance(doc, dict):
            return "no decrypted assertion supplied"
        try:
            assertion = model.Assertion.from_dict(doc)
        except (KeyError, TypeError, ValueError):
            return "assertion document malformed"
        if assertion.signer_id != sender_id:
            return f"assertion signed by {assertion.signer_id}, sent by {sender_id}"
        if assertion.subject_car != car_id:
            return f"assertion subjects {assertion.subject_car}, not {car_id}"
        try:
            if not model.verify_assertion(assertion, self.repository.directory_view()):
                return "assertion signature or source rules fail"
        except CarbioError as exc:
            return str(exc)
        return ""

    # -- snapshot sharing -----------------------------------------------------------

    def _handle_snapshot(self, tx: Transaction, msg: ContractMessage,
                         height: int) -> None:
        contract = self.contracts.get(msg.contract_id)
        if contract is None:
            self._error(tx, height, "UnknownEntity", msg.contract_id)
            return
        if not isinstance(contract, EntityContract):
            self._error(tx, height, "ValidationError",
                        "snapshots are delivered to entity contracts")
            return
        car_id = msg.body.get("car_id", "")
        car_contract = self.car_contract_of(car_id)
        if car_contract is None:
            self._error(tx, height, "ValidationError",
                        f"{car_id!r} has no car contract")
            return
        if car_contract.destroyed:
            self._error(tx, height, "ContractDestroyed", car_contract.address)
            return
        if tx.sender_id != car_contract.owner_id:
            # the consent gate: only the current owner shares snapshots
            self._error(tx, height, "AuthorizationError",
                        f"{tx.sender_id} is not the owner of {car_id}")
            return
        encrypted = bool(msg.body.get("encrypted"))
        blob = msg.body.get("snapshot")
        if blob is None or (not encrypted and not isinstance(blob, dict)):
            self._error(tx, height, "ValidationError", "missing snapshot body")
            return

        self._emit(height, tx.tx_id, "share_decision",
                   car_id=car_id, owner_id=tx.sender_id,
                   target_entity_id=contract.entity_id)

        if encrypted:
            record = SnapshotRecord(
                snapshot=blob, sender_car_id=car_id, encrypted=True,
                verified=None, height=height,
            )
        else:
            failure = self.check_snapshot(blob, car_id)
            record = SnapshotRecord(
                snapshot=blob, sender_car_id=car_id, encrypted=False,
                verified=not failure, failure=failure, height=height,
            )
        contract.received_snapshots.append(record)
        self._ok(tx)
        self._emit(height, tx.tx_id, "snapshot_delivered",
                   entity_id=contract.entity_id, car_id=car_id,
                   snapshot_id=(blob.get("snapshot_id", "") if isinstance(blob, dict)
                                else ""),
                   verified=record.verified)

    def check_snapshot(self, doc, car_id: str) -> str:
        """The receiving contract's verification: signatures plus anchors.

        Every selected entry must verify under the repository key of its
        signer, and every disclosed claim must hash to a digest that was
        anchored on the ledger (so a claim absent from the anchored record
        cannot be smuggled into a snapshot).
        """
        if not isinstance(doc, dict):
            return "no snapshot supplied"
        try:
            snapshot = model.Snapshot.from_dict(doc)
        except (KeyError, TypeError, ValueError):
            return "snapshot document malformed"
        if snapshot.car_id != car_id:
            return f"snapshot subjects {snapshot.car_id}, not {car_id}"
        if not model.verify_snapshot(snapshot, self.repository.directory_view()):
            return "snapshot signature verification failed"
        for entry in snapshot.selected:
            if self.ledger.get_anchor("assertion", entry.assertion_id) is None:
                return f"assertion {entry.assertion_id} was never anchored"
            for claim in entry.claims:
                anchor = self.ledger.get_anchor("claim", claim.claim_id)
                if anchor is None:
                    return f"claim {claim.claim_id} was never anchored"
                digest = crypto.hash_bytes(model.canonical_encode(claim)).hex
                if digest != anchor.digest:
                    return f"claim {claim.claim_id} does not match its anchor"
        return ""

    def _handle_snapshot_ack(self, tx: Transaction, msg: ContractMessage,
                             height: int) -> None:
        contract = self.contracts.get(msg.contract_id)
        if contract is None or not isinstance(contract, EntityContract):
            self._error(tx, height, "UnknownEntity", msg.contract_id)
            return
        if tx.sender_id != contract.entity_id:
            self._error(tx, height, "AuthorizationError",
                        "only the entity records its verification results")
            return
        index = msg.body.get("entry_index", -1)
        if not isinstance(index, int) or not 0 <= index < len(
            contract.received_snapshots
        ):
            self._error(tx, height, "ValidationError", f"no entry {index}")
            return
        record = contract.received_snapshots[index]
        if record.verified is not None:
            self._error(tx, height, "AlreadyDecided", f"entry {index}")
            return
        record.verified = bool(msg.body.get("verified"))
        record.failure = msg.body.get("failure", "") or ""
        self._ok(tx)
        self._emit(height, tx.tx_id, "snapshot_verification",
                   entity_id=contract.entity_id, entry_index=index,
                   verified=record.verified)

    # -- ownership transfer ------------------------------------------------------------

    def _handle_transfer(self, tx: Transaction, transfer: OwnershipTransfer,
                         height: int) -> None:
        if tx.sender_id != transfer.new_owner_id:
            self._error(tx, height, "AuthorizationError",
                        "transfer must be initiated by the new owner")
            return
        if transfer.new_owner_id not in self.repository.entries:
            self._error(tx, height, "UnknownSender", transfer.new_owner_id)
            return
        old_contract = self.car_contract_of(transfer.car_id)
        if old_contract is None:
            self._error(tx, height, "UnknownEntity", transfer.car_id)
            return
        if old_contract.destroyed:
            self._error(tx, height, "ContractDestroyed", old_contract.address)
            return

        failure = self._check_transfer(transfer, old_contract)
        if failure:
            # government verification failed: old contract stays intact
            self._error(tx, height, "TransferRejected", failure)
            return
        if any(e.contract_address == transfer.new_contract_address
               for e in self.repository.entries.values()) or (
            transfer.new_contract_address in self.contracts
        ):
            self._error(tx, height, "DuplicateAddress",
                        transfer.new_contract_address)
            return

        new_contract = CarContract(
            address=transfer.new_contract_address,
            car_id=transfer.car_id,
            owner_id=transfer.new_owner_id,
        )
        # import: every stored external assertion, plus exactly one aggregate
        new_contract.stored_assertions = list(old_contract.stored_assertions)
        new_contract.aggregate_assertion = transfer.aggregate_assertion
        self.contracts[transfer.new_contract_address] = new_contract
        self.repository.remap_address(transfer.car_id,
                                      transfer.new_contract_address)

        record = OwnershipTransferRecord(
            car_id=transfer.car_id,
            old_owner_id=transfer.old_owner_id,
            new_owner_id=transfer.new_owner_id,
            aggregate_assertion_id=transfer.aggregate_assertion.get(
                "assertion_id", ""
            ),
            old_contract_address=old_contract.address,
            new_contract_address=transfer.new_contract_address,
            gov_verifier_id=transfer.gov_verifier_id,
            status="complete",
            signature=transfer.gov_signature,
        )
        self.transfers.append(record)

        # tombstone the old contract: data fields are wiped, reads fail
        record_digest = crypto.hash_bytes(
            canonical_json_bytes(record.to_dict())
        ).hex
        old_contract.anchors = {}
        old_contract.inbox = []
        old_contract.stored_assertions = []
        old_contract.aggregate_assertion = None
        old_contract.notifications = []
        old_contract.audit = []
        old_contract.owner_id = ""
        old_contract.destroyed = True
        old_contract.tombstone = {"transfer_record_digest": record_digest}

        self._ok(tx)
        self._emit(height, tx.tx_id, "ownership_transfer",
                   car_id=transfer.car_id,
                   old_owner_id=transfer.old_owner_id,
                   new_owner_id=transfer.new_owner_id,
                   old_contract_address=old_contract.address,
                   new_contract_address=transfer.new_contract_address,
                   gov_verifier_id=transfer.gov_verifier_id)

    def _check_transfer(self, transfer: OwnershipTransfer,
                        old_contract: CarContract) -> str:
        """The government contract's verification; returns failure reason or ''."""
        gov_entry = self.repository.lookup(transfer.gov_verifier_id)
        if gov_entry is None:
            return f"government verifier {transfer.gov_verifier_id!r} unknown"
        if self.roles.get(transfer.gov_verifier_id) != "government":
            return f"{transfer.gov_verifier_id!r} is not a government agency"
        if not crypto.verify(transfer.approval_body(), transfer.gov_signature,
                             gov_entry.public_key):
            return "government approval signature does not verify"
        if old_contract.owner_id != transfer.old_owner_id:
            return (f"current owner is {old_contract.owner_id!r}, "
                    f"not {transfer.old_owner_id!r}")
        if transfer.new_owner_id == transfer.old_owner_id:
            return "new owner equals old owner"
        try:
            aggregate = model.Assertion.from_dict(transfer.aggregate_assertion)
        except (KeyError, TypeError, ValueError):
            return "aggregate assertion malformed"
        if aggregate.kind != "internal" or aggregate.signer_id != transfer.car_id:
            return "aggregate assertion must be car-signed"
        try:
            if not model.verify_assertion(aggregate,
                                          self.repository.directory_view()):
                return "aggregate assertion does not verify"
        except CarbioError as exc:
            return str(exc)
        return ""
