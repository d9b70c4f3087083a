"""Deterministic replicated append-only ledger.

Permissioned rules: only identities whose keys are known to the participant
directory may submit, every transaction is signature-checked and
replay-protected by per-sender nonces, and blocks are proposed round-robin by
the validator set. Consensus is deliberately trivial: a block commits when a
majority of replicas is live, and every live replica appends the identical
block. Offline replicas copy the missing suffix when they rejoin.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

from . import crypto
from .canonical import canonical_json_bytes, from_canonical
from .crypto import SealedKeyStore
from .errors import LedgerStateError, QuorumError

GENESIS_PREV_HASH = "0" * 64
GENESIS_PROPOSER = "genesis"

REJECT_SPOOF = "SpoofError"
REJECT_REPLAY = "ReplayError"
REJECT_UNKNOWN_SENDER = "UnknownSender"


# -- payloads --------------------------------------------------------------

@dataclass(frozen=True)
class AnchorHash:
    target_kind: str  # claim | assertion | autobiography | snapshot
    target_id: str
    digest: str  # hex
    algorithm_id: str = crypto.HASH_ALGORITHM_ID

    def to_dict(self) -> dict:
        return {
            "kind": "anchor",
            "target_kind": self.target_kind,
            "target_id": self.target_id,
            "digest": self.digest,
            "algorithm_id": self.algorithm_id,
        }


@dataclass(frozen=True)
class ContractMessage:
    contract_id: str
    action: str
    body: dict

    def to_dict(self) -> dict:
        return {
            "kind": "contract",
            "contract_id": self.contract_id,
            "action": self.action,
            "body": self.body,
        }


@dataclass(frozen=True)
class Register:
    identity: str
    public_key: bytes
    role: str  # car | owner | organization | vendor | government | validator
    contract_address: str
    certificate: dict | None = None  # vendor-issued, required for cars
    cosignature: bytes = b""  # maintainer co-signature for self-registration
    extra: dict = field(default_factory=dict)  # e.g. car owner binding

    def cosigned_body(self) -> bytes:
        return canonical_json_bytes(
            {
                "type": "registration",
                "identity": self.identity,
                "public_key": self.public_key.hex(),
                "contract_address": self.contract_address,
            }
        )

    def to_dict(self) -> dict:
        doc = {
            "kind": "register",
            "identity": self.identity,
            "public_key": self.public_key.hex(),
            "role": self.role,
            "contract_address": self.contract_address,
            "cosignature": self.cosignature.hex(),
            "extra": self.extra,
        }
        if self.certificate is not None:
            doc["certificate"] = self.certificate
        return doc


@dataclass(frozen=True)
class OwnershipTransfer:
    car_id: str
    old_owner_id: str
    new_owner_id: str
    new_contract_address: str
    aggregate_assertion: dict
    gov_verifier_id: str
    gov_signature: bytes

    def approval_body(self) -> bytes:
        """The byte string the government verifier signs."""
        return canonical_json_bytes(
            {
                "type": "transfer-approval",
                "car_id": self.car_id,
                "old_owner_id": self.old_owner_id,
                "new_owner_id": self.new_owner_id,
                "new_contract_address": self.new_contract_address,
                "aggregate_digest": crypto.hash_bytes(
                    canonical_json_bytes(self.aggregate_assertion)
                ).hex,
            }
        )

    def to_dict(self) -> dict:
        return {
            "kind": "transfer",
            "car_id": self.car_id,
            "old_owner_id": self.old_owner_id,
            "new_owner_id": self.new_owner_id,
            "new_contract_address": self.new_contract_address,
            "aggregate_assertion": self.aggregate_assertion,
            "gov_verifier_id": self.gov_verifier_id,
            "gov_signature": self.gov_signature.hex(),
        }


Payload = AnchorHash | ContractMessage | Register | OwnershipTransfer


def payload_from_dict(doc: dict) -> Payload:
    kind = doc["kind"]
    if kind == "anchor":
        return AnchorHash(
            target_kind=doc["target_kind"],
            target_id=doc["target_id"],
            digest=doc["digest"],
            algorithm_id=doc["algorithm_id"],
        )
    if kind == "contract":
        return ContractMessage(
            contract_id=doc["contract_id"], action=doc["action"], body=doc["body"]
        )
    if kind == "register":
        return Register(
            identity=doc["identity"],
            public_key=bytes.fromhex(doc["public_key"]),
            role=doc["role"],
            contract_address=doc["contract_address"],
            certificate=doc.get("certificate"),
            cosignature=bytes.fromhex(doc["cosignature"]),
            extra=doc.get("extra", {}),
        )
    if kind == "transfer":
        return OwnershipTransfer(
            car_id=doc["car_id"],
            old_owner_id=doc["old_owner_id"],
            new_owner_id=doc["new_owner_id"],
            new_contract_address=doc["new_contract_address"],
            aggregate_assertion=doc["aggregate_assertion"],
            gov_verifier_id=doc["gov_verifier_id"],
            gov_signature=bytes.fromhex(doc["gov_signature"]),
        )
    raise ValueError(f"unknown payload kind {kind!r}")


# -- transactions and blocks -------------------------------------------------

@dataclass(frozen=True)
class Transaction:
    sender_id: str
    nonce: int
    payload: Payload
    signature: bytes
    tx_id: str  # hex digest of the signed body

    def body_dict(self) -> dict:
        return {
            "type": "transaction",
            "sender_id": self.sender_id,
            "nonce": self.nonce,
            "payload": self.payload.to_dict(),
        }

    def body_bytes(self) -> bytes:
        return canonical_json_bytes(self.body_dict())

    def to_dict(self) -> dict:
        doc = self.body_dict()
        doc["signature"] = self.signature.hex()
        doc["tx_id"] = self.tx_id
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Transaction":
        return cls(
            sender_id=doc["sender_id"],
            nonce=doc["nonce"],
            payload=payload_from_dict(doc["payload"]),
            signature=bytes.fromhex(doc["signature"]),
            tx_id=doc["tx_id"],
        )


def make_transaction(
    sender: SealedKeyStore, nonce: int, payload: Payload
) -> Transaction:
    unsigned = Transaction(
        sender_id=sender.entity_id,
        nonce=nonce,
        payload=payload,
        signature=b"",
        tx_id="",
    )
    body = unsigned.body_bytes()
    return replace(
        unsigned, signature=sender.sign(body), tx_id=crypto.hash_bytes(body).hex
    )


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: str
    transactions: tuple[Transaction, ...]
    tx_root: str
    proposer_id: str
    proposer_signature: bytes

    def header_bytes(self) -> bytes:
        return canonical_json_bytes(
            {
                "type": "block_header",
                "height": self.height,
                "prev_hash": self.prev_hash,
                "tx_root": self.tx_root,
                "proposer_id": self.proposer_id,
            }
        )

    def to_dict(self) -> dict:
        return {
            "type": "block",
            "height": self.height,
            "prev_hash": self.prev_hash,
            "transactions": [t.to_dict() for t in self.transactions],
            "tx_root": self.tx_root,
            "proposer_id": self.proposer_id,
            "proposer_signature": self.proposer_signature.hex(),
        }

    def block_hash(self) -> str:
        return crypto.hash_bytes(canonical_json_bytes(self.to_dict())).hex

    @classmethod
    def from_dict(cls, doc: dict) -> "Block":
        return cls(
            height=doc["height"],
            prev_hash=doc["prev_hash"],
            transactions=tuple(
                Transaction.from_dict(t) for t in doc["transactions"]
            ),
            tx_root=doc["tx_root"],
            proposer_id=doc["proposer_id"],
            proposer_signature=bytes.fromhex(doc["proposer_signature"]),
        )


def compute_tx_root(transactions: tuple[Transaction, ...]) -> str:
    return crypto.hash_bytes(
        canonical_json_bytes([t.to_dict() for t in transactions])
    ).hex


def genesis_block() -> Block:
    return Block(
        height=0,
        prev_hash=GENESIS_PREV_HASH,
        transactions=(),
        tx_root=compute_tx_root(()),
        proposer_id=GENESIS_PROPOSER,
        proposer_signature=b"",
    )


@dataclass(frozen=True)
class Receipt:
    accepted: bool
    tx_id: str
    reason: str | None = None


@dataclass(frozen=True)
class AnchorRecord:
    target_kind: str
    target_id: str
    digest: str
    algorithm_id: str
    height: int
    tx_id: str


@dataclass(frozen=True)
class ChainVerification:
    ok: bool
    failed_height: int | None = None
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.ok


@dataclass
class Replica:
    validator_id: str
    chain: list[Block]
    live: bool = True


# signature checks are pure; cache them so mutation sweeps over long chains
# only pay for the bytes that actually changed
@lru_cache(maxsize=65536)
def _verify_cached(message: bytes, signature: bytes, public_key: bytes) -> bool:
    return crypto.verify(message, signature, public_key)


def _check_register_admission(
    tx: Transaction, directory: dict[str, bytes], maintainer_id: str
) -> str | None:
    """Permission rule for Register payloads; returns a rejection reason."""
    reg = tx.payload
    if tx.sender_id == maintainer_id and tx.sender_id in directory:
        if not _verify_cached(
            tx.body_bytes(), tx.signature, directory[tx.sender_id]
        ):
            return REJECT_SPOOF
        return None
    if tx.sender_id == reg.identity:
        # self-registration: maintainer must have co-signed, and the tx must
        # verify under the key being registered
        maintainer_key = directory.get(maintainer_id)
        if maintainer_key is None or not _verify_cached(
            reg.cosigned_body(), reg.cosignature, maintainer_key
        ):
            return REJECT_SPOOF
        if not _verify_cached(tx.body_bytes(), tx.signature, reg.public_key):
            return REJECT_SPOOF
        return None
    return REJECT_UNKNOWN_SENDER if tx.sender_id not in directory else REJECT_SPOOF


def verify_blocks(
    blocks: list[Block],
    bootstrap_directory: dict[str, bytes],
    validator_ids: list[str],
    maintainer_id: str,
) -> ChainVerification:
    """Full structural + cryptographic audit of a chain, from genesis.

    Replays registration so each transaction is checked against the directory
    as it stood at that height.
    """
    if not blocks:
        return ChainVerification(False, 0, "empty chain")
    directory = dict(bootstrap_directory)
    last_nonce: dict[str, int] = {}
    expected_genesis = genesis_block()

    for index, block in enumerate(blocks):
        def fail(reason: str) -> ChainVerification:
            return ChainVerification(False, index, reason)

        if block.height != index:
            return fail(f"height {block.height} at position {index}")
        if index == 0:
            if block.to_dict() != expected_genesis.to_dict():
                return fail("genesis block mismatch")
            continue
        if block.prev_hash != blocks[index - 1].block_hash():
            return fail("prev_hash mismatch")
        if block.tx_root != compute_tx_root(block.transactions):
            return fail("tx_root mismatch")
        expected_proposer = validator_ids[(block.height - 1) % len(validator_ids)]
        if block.proposer_id != expected_proposer:
            return fail(f"unexpected proposer {block.proposer_id}")
        proposer_key = directory.get(block.proposer_id)
        if proposer_key is None or not _verify_cached(
            block.header_bytes(), block.proposer_signature, proposer_key
        ):
            return fail("proposer signature invalid")
        for tx in block.transactions:
            if tx.tx_id != crypto.hash_bytes(tx.body_bytes()).hex:
                return fail(f"tx_id mismatch for {tx.tx_id}")
            if isinstance(tx.payload, Register):
                if _check_register_admission(tx, directory, maintainer_id):
                    return fail(f"registration not admissible in tx {tx.tx_id}")
            else:
                key = directory.get(tx.sender_id)
                if key is None:
                    return fail(f"unknown sender {tx.sender_id}")
                if not _verify_cached(tx.body_bytes(), tx.signature, key):
                    return fail(f"signature invalid for tx {tx.tx_id}")
            if tx.nonce <= last_nonce.get(tx.sender_id, 0):
                return fail(f"nonce replay in tx {tx.tx_id}")
            last_nonce[tx.sender_id] = tx.nonce
            if isinstance(tx.payload, Register):
                directory.setdefault(tx.payload.identity, tx.payload.public_key)
    return ChainVerification(True)


class Ledger:
    """Submission/commit pipeline plus replicated chain copies and queries."""

    def __init__(
        self,
        validators: list[SealedKeyStore],
        bootstrap_directory: dict[str, bytes],
        maintainer_id: str,
    ):
        if not validators:
            raise LedgerStateError("at least one validator required")
        self.validator_keys = {v.entity_id: v for v in validators}
        self.validator_ids = [v.entity_id for v in validators]
        self.maintainer_id = maintainer_id
        # registration keys as seen by the ledger; first key for an identity
        # wins, later registrations never overwrite it
        self.directory: dict[str, bytes] = dict(bootstrap_directory)
        self.bootstrap_directory = dict(bootstrap_directory)
        genesis = genesis_block()
        self.replicas = [
            Replica(validator_id=v, chain=[genesis]) for v in self.validator_ids
        ]
        self.pending: list[Transaction] = []
        self.last_nonce: dict[str, int] = {}
        self.accepted_tx_ids: list[str] = []
        self.anchors: dict[tuple[str, str], list[AnchorRecord]] = {}
        self.committed_tx_heights: dict[str, int] = {}
        self.journal: list[tuple[int, str]] = []  # (height, block hash) at commit

    # -- basic views ---------------------------------------------------------

    @property
    def quorum(self) -> int:
        return len(self.replicas) // 2 + 1

    @property
    def live_replicas(self) -> list[Replica]:
        return [r for r in self.replicas if r.live]

    def chain(self) -> list[Block]:
        """The canonical chain: the longest chain held by any live replica."""
        candidates = self.live_replicas or self.replicas
        return max(candidates, key=lambda r: len(r.chain)).chain

    @property
    def height(self) -> int:
        return self.chain()[-1].height

    def replica(self, validator_id: str) -> Replica:
        for rep in self.replicas:
            if rep.validator_id == validator_id:
                return rep
        raise LedgerStateError(f"no replica {validator_id!r}")

    def public_key_of(self, identity: str) -> bytes | None:
        return self.directory.get(identity)

    # -- submission ------------------------------------------------------------

    def submit(self, tx: Transaction) -> Receipt:
        if tx.tx_id != crypto.hash_bytes(tx.body_bytes()).hex:
            return Receipt(False, tx.tx_id, REJECT_SPOOF)
        if isinstance(tx.payload, Register):
            reason = _check_register_admission(tx, self.directory, self.maintainer_id)
            if reason:
                return Receipt(False, tx.tx_id, reason)
        else:
            key = self.directory.get(tx.sender_id)
            if key is None:
                return Receipt(False, tx.tx_id, REJECT_UNKNOWN_SENDER)
            if not _verify_cached(tx.body_bytes(), tx.signature, key):
                return Receipt(False, tx.tx_id, REJECT_SPOOF)
        if tx.nonce <= self.last_nonce.get(tx.sender_id, 0):
            return Receipt(False, tx.tx_id, REJECT_REPLAY)
        self.last_nonce[tx.sender_id] = tx.nonce
        self.pending.append(tx)
        self.accepted_tx_ids.append(tx.tx_id)
        return Receipt(True, tx.tx_id)

    # -- commit ------------------------------------------------------------------

    def commit_block(self) -> Block:
        if not self.pending:
            raise LedgerStateError("no pending transactions to commit")
        if len(self.live_replicas) < self.quorum:
            raise QuorumError(
                f"{len(self.live_replicas)} live replicas, quorum is {self.quorum}"
            )
        ordered = tuple(
            sorted(self.pending, key=lambda t: (t.sender_id, t.nonce))
        )
        prev = self.chain()[-1]
        height = prev.height + 1
        proposer_id = self.validator_ids[(height - 1) % len(self.validator_ids)]
        draft = Block(
            height=height,
            prev_hash=prev.block_hash(),
            transactions=ordered,
            tx_root=compute_tx_root(ordered),
            proposer_id=proposer_id,
            proposer_signature=b"",
        )
        block = replace(
            draft,
            proposer_signature=self.validator_keys[proposer_id].sign(
                draft.header_bytes()
            ),
        )
        for rep in self.live_replicas:
            rep.chain.append(block)
        self.pending = []
        for tx in block.transactions:
            self.committed_tx_heights[tx.tx_id] = height
            if isinstance(tx.payload, Register):
                self.directory.setdefault(tx.payload.identity, tx.payload.public_key)
            elif isinstance(tx.payload, AnchorHash):
                anchor = tx.payload
                self.anchors.setdefault(
                    (anchor.target_kind, anchor.target_id), []
                ).append(
                    AnchorRecord(
                        target_kind=anchor.target_kind,
                        target_id=anchor.target_id,
                        digest=anchor.digest,
                        algorithm_id=anchor.algorithm_id,
                        height=height,
                        tx_id=tx.tx_id,
                    )
                )
        self.journal.append((height, block.block_hash()))
        return block

    # -- replica liveness ---------------------------------------------------------

    def set_replica_live(self, validator_id: str, live: bool) -> None:
        rep = self.replica(validator_id)
        if live and not rep.live:
            rep.live = True
            canonical = self.chain()
            rep.chain.extend(canonical[len(rep.chain):])  # catch up, byte-equal
        else:
            rep.live = live

    # -- queries -----------------------------------------------------------------

    def get_anchor(self, target_kind: str, target_id: str) -> AnchorRecord | None:
        history = self.anchors.get((target_kind, target_id))
        return history[-1] if history else None

    def anchor_history(self, target_kind: str, target_id: str) -> list[AnchorRecord]:
        return list(self.anchors.get((target_kind, target_id), []))

    def find_transaction(self, tx_id: str) -> tuple[Transaction, int] | None:
        height = self.committed_tx_heights.get(tx_id)
        if height is None:
            return None
        for tx in self.chain()[height].transactions:
            if tx.tx_id == tx_id:
                return tx, height
        return None

    def verify_chain(self, validator_id: str | None = None) -> ChainVerification:
        chain = (
            self.replica(validator_id).chain if validator_id else self.chain()
        )
        return verify_blocks(
            chain, self.bootstrap_directory, self.validator_ids, self.maintainer_id
        )

    # -- dump / load ----------------------------------------------------------------

    def dump_chain(self, path: str | Path) -> None:
        with open(path, "wb") as handle:
            for block in self.chain():
                handle.write(canonical_json_bytes(block.to_dict()) + b"\n")

    @staticmethod
    def load_chain(path: str | Path) -> list[Block]:
        blocks = []
        with open(path, "rb") as handle:
            for line in handle:
                line = line.strip()
                if line:
                    blocks.append(Block.from_dict(from_canonical(line)))
        return blocks
