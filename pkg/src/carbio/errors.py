"""Exception hierarchy shared by all carbio modules."""


class CarbioError(Exception):
    """Base class for every error raised by this package."""


# -- crypto ------------------------------------------------------------------

class SeedError(CarbioError):
    """Key-generation seed has the wrong length."""


class ValidationError(CarbioError):
    """A value violates a structural invariant (empty id, bad field, ...)."""


# -- model -------------------------------------------------------------------

class EncodingError(CarbioError):
    """Item cannot be canonically encoded (invariant violation or bad type)."""


class SourceMixError(CarbioError):
    """Assertion input mixes sources that must be homogeneous."""


class EmptyAssertionError(CarbioError):
    """Assertion requested over an empty claim set."""


class UnknownSignerError(CarbioError):
    """Signer identity is absent from the key directory."""


class IntegrityError(CarbioError):
    """Signature or hash check failed; `offenders` lists the bad item ids."""

    def __init__(self, message: str, offenders: list[str] | None = None):
        super().__init__(message)
        self.offenders = offenders or []


class SelectionError(CarbioError):
    """Snapshot selection references unknown assertion or claim ids."""


class PartialExternalError(CarbioError):
    """Partial selection of an external assertion without its signer's key."""


class PolicyTypeError(CarbioError):
    """Aggregation policy applied to a value of the wrong type."""


# -- ledger ------------------------------------------------------------------

class QuorumError(CarbioError):
    """Not enough live replicas to commit a block."""


class LedgerStateError(CarbioError):
    """Ledger operation violates its precondition (e.g. nothing pending)."""


# -- contracts ---------------------------------------------------------------

class DuplicateIdentity(CarbioError):
    """Identity already registered in the repository."""


class DuplicateAddress(CarbioError):
    """Contract address already bound to another identity."""


class UnknownSender(CarbioError):
    """Sender identity is not registered."""


class UnknownEntity(CarbioError):
    """Target entity is not registered."""


class ContractDestroyed(CarbioError):
    """Operation against a tombstoned contract."""


class AuthorizationError(CarbioError):
    """Caller is not allowed to perform this action."""


class AlreadyDecided(CarbioError):
    """Inbox entry was already approved or rejected."""


class TransferRejected(CarbioError):
    """Government verification of an ownership transfer failed."""


# -- storage -----------------------------------------------------------------

class SubjectMismatch(CarbioError):
    """Item's subject car does not match the store it is written to."""


class VaultError(CarbioError):
    """Vault file is corrupt or the passphrase is wrong."""


# -- harness / cli -----------------------------------------------------------

class ConfigError(CarbioError):
    """Scenario config violates the schema; `path` locates the offender."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(message)
        self.path = path


class InjectionError(CarbioError):
    """Attack injection is malformed or targets a missing object."""


class WorldError(CarbioError):
    """World directory is missing, locked, or fails its load-time checks."""
