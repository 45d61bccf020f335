"""Exception hierarchy shared by every layer of the package."""

from __future__ import annotations


class MfaError(Exception):
    """Base class for all errors raised by this package."""


# crypto


class InvalidPoint(MfaError):
    """Encoded curve point is malformed, off-curve, or the identity."""


class AuthFailure(MfaError):
    """Authenticated decryption failed (tampering, wrong key, wrong AD)."""


class LengthError(MfaError):
    """Requested length is outside the permitted range."""


class ErasedSecret(MfaError):
    """A session secret was accessed after it had been erased."""


# wire


class EncodeError(MfaError):
    pass


class DecodeError(MfaError):
    def __init__(self, reason: str, detail: str = "") -> None:
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


class ChannelError(MfaError):
    """A message was routed onto a channel it may not travel on."""


# registry


class UnknownUID(MfaError):
    pass


class DuplicateKey(MfaError):
    pass


# protocol


class ProtocolError(MfaError):
    """A protocol handler rejected a message; the session state is untouched."""


class BadSignature(ProtocolError):
    pass


class TidMismatch(ProtocolError):
    pass


class UidMismatch(ProtocolError):
    pass


class PhaseError(ProtocolError):
    """Message arrived in a phase that does not expect it."""


class IndexOutOfRange(MfaError):
    pass


# biometrics / attack lab


class DimensionMismatch(MfaError):
    pass


class DegenerateInput(MfaError):
    """Gradient undefined because the linear feature map is zero at the input."""


class EmptyScores(MfaError):
    pass


# harness


class ScenarioError(MfaError):
    pass
