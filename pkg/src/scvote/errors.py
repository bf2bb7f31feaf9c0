"""Exception hierarchy shared by all protocol parties."""

# Wire-level rejection codes, in the order they are documented for the gateway API.
REJECTION_CODES = (
    "unknown-id",
    "bad-code",
    "bad-count",
    "duplicate-cast",
    "not-cast",
    "bad-ca",
    "peer-signature-failure",
    "timeout",
)


class ConfigError(ValueError):
    """An election definition, scenario or command line argument is malformed."""


class AbortError(Exception):
    """A party hit a failed assertion and stops processing the current request."""


class Rejection(AbortError):
    """A request refused by a control component or the gateway."""

    def __init__(self, code: str, detail: str = "", source: int | str | None = None):
        if code not in REJECTION_CODES:
            raise ValueError(f"unknown rejection code {code!r}")
        self.code = code
        self.detail = detail
        self.source = source
        super().__init__(f"{code}: {detail}" if detail else code)


class ParseError(ValueError):
    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class PhaseError(AbortError):
    """Operation attempted in the wrong election phase."""


class IntegrityError(AbortError):
    """Agreed data is inconsistent; the election cannot proceed safely."""


class TallyIntegrityError(IntegrityError):
    """A decrypted aggregate is not a sum of valid votes."""


class DecryptionShareError(IntegrityError):
    def __init__(self, index: int, reason: str):
        self.index = index
        super().__init__(f"decryption share of component {index}: {reason}")
