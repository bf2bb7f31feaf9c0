"""Hashing, signatures and additively shared ElGamal with verifiable decryption.

ElGamal runs in the order-q subgroup of Z_p^* for a 2048-bit prime p and
q = 2^255 - 19. The modulus is derived reproducibly from a public label
(see ``derive_group``), so nothing about it is left to trust.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass
from typing import Iterable, Sequence

import gmpy2
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey

from .errors import DecryptionShareError, TallyIntegrityError

DIGEST_SIZE = 32


def powmod(base: int, e: int, m: int) -> int:
    return int(gmpy2.powmod(base, e, m))

# domain tags for canonical messages
TAG_CAST = 0x01
TAG_CA = 0x02
TAG_PROOF = 0x03
TAG_PARAMS = 0x04
TAG_CIPHERTEXT = 0x05


@dataclass(frozen=True)
class SchnorrGroup:
    name: str
    p: int
    q: int
    g: int

    @property
    def element_size(self) -> int:
        return (self.p.bit_length() + 7) // 8

    @property
    def scalar_size(self) -> int:
        return (self.q.bit_length() + 7) // 8

    def is_element(self, x: int) -> bool:
        return isinstance(x, int) and 0 < x < self.p and powmod(x, self.q, self.p) == 1

    def element_bytes(self, x: int) -> bytes:
        return x.to_bytes(self.element_size, "big")

    def element_from_bytes(self, data: bytes) -> int:
        if len(data) != self.element_size:
            raise ValueError("group element has wrong length")
        x = int.from_bytes(data, "big")
        if not self.is_element(x):
            raise ValueError("not a member of the group")
        return x

    def scalar_bytes(self, x: int) -> bytes:
        return (x % self.q).to_bytes(self.scalar_size, "big")

    def random_scalar(self, rng: random.Random) -> int:
        return rng.randrange(1, self.q)

    def exp(self, base: int, e: int) -> int:
        return powmod(base, e % self.q, self.p)

    def gexp(self, e: int) -> int:
        return powmod(self.g, e % self.q, self.p)

    def inv(self, x: int) -> int:
        return pow(x, -1, self.p)


GROUP_LABEL = b"scvote/schnorr-group/v1"


def derive_group(label: bytes = GROUP_LABEL, bits: int = 2048) -> SchnorrGroup:
    """Rebuild the default group from its label."""
    q = 2**255 - 19
    seed = int.from_bytes(hashlib.shake_256(label).digest(bits // 8), "big")
    start = (seed >> 1) | (1 << (bits - 1))
    k = -(-start // q)
    k += k % 2
    while not gmpy2.is_prime(q * k + 1, 40):
        k += 2
    p = q * k + 1
    h = 2
    while pow(h, (p - 1) // q, p) == 1:
        h += 1
    return SchnorrGroup(f"schnorr-{bits}/q=2^255-19/{label.decode()}", p, q, pow(h, (p - 1) // q, p))


DEFAULT_GROUP = SchnorrGroup(
    name="schnorr-2048/q=2^255-19/scvote/schnorr-group/v1",
    p=int(
        "df52e7f25e6d06fa72ca174fc0dc3fe0cbf620636229dfd24e30aa23955ce5b8"
        "959c1aef6018b0114bd623e802ba8db50de0b387a3eca2db76939d5e1f2d0d6a"
        "9b7e27f07d86b3f70b0d4ce8ff8cb957e2a3c035a748da4d04f45eaea24b28e9"
        "1af610b4b7d1f1612bd1d770823d940b834d5d3c30d3fdd5e51e19ca81a5c1e5"
        "da44ab42157e211768b73c115a2820044effac7cff490506a047ab734d3fa74b"
        "c9d0064cf385bed4e9f8040dded493c6fe25fa2b1b867e6d8cfd36df1f059b8e"
        "dbe74a6e2376ec7e26f03baad4877c92adb6b04df67e01675fc42244c856008a"
        "7de6a15cd857c1807144ec8061533d2f9031fa7cac87544a01fd69be74515a45",
        16,
    ),
    q=2**255 - 19,
    g=int(
        "7ec4d5dce631b5cb9a3f9c7fe728de57298b6b0232699bca23913c6448795bc9"
        "3a539327882b74b49302b02afcf68afb9b3e5e9a8861a129c6517e93fc5744a5"
        "44592dbcb62ac8cecc815c492696381edd8a8f30d1bf0de99fe6b4685c6a9a8d"
        "fd279c251357eb36bc015e6144b7184c05d5c6ec32e70645a10137a9d44a8d12"
        "8e7266996bff48826f3aacdd7e03f38cfbbecac4463ee45f571d6159c92d61dc"
        "353d5dce8e68de1d2be8cfb5d890c395f9dd3989b43c7b65e7abb6b23f825155"
        "d11f1c14de51365337baa761a984d855145ae5f0b69ee9b45648e2c1f1a915e2"
        "358aab6bd4c74aab7a2c125e48a764980d79cb24f1320eeea85a2c3bc7a0c5fc",
        16,
    ),
)


# -- hashing and canonical encoding ------------------------------------------

def digest(message: bytes) -> bytes:
    return hashlib.sha256(message).digest()


def _as_bytes(field) -> bytes:
    if isinstance(field, bytes):
        return field
    if isinstance(field, str):
        return field.encode("utf-8")
    if isinstance(field, int):
        if field < 0:
            raise ValueError("negative integers have no canonical encoding")
        return field.to_bytes(max(1, (field.bit_length() + 7) // 8), "big")
    raise TypeError(f"cannot encode {type(field).__name__}")


def encode_fields(tag: int, *fields) -> bytes:
    """``tag || n || (len_i || field_i)*`` with 4-byte big-endian lengths."""
    if not 0 <= tag < 256 or len(fields) > 255:
        raise ValueError("tag and field count must each fit in one byte")
    out = bytearray([tag, len(fields)])
    for field in fields:
        data = _as_bytes(field)
        out += len(data).to_bytes(4, "big")
        out += data
    return bytes(out)


def hash_to_scalar(group: SchnorrGroup, *fields) -> int:
    return int.from_bytes(digest(encode_fields(TAG_PROOF, *fields)), "big") % group.q


def derive_rng(seed, *labels) -> random.Random:
    """Independent deterministic stream for ``labels``; ``seed=None`` means OS randomness."""
    if seed is None:
        return random.SystemRandom()
    material = encode_fields(0, str(seed), *[str(label) for label in labels])
    return random.Random(int.from_bytes(hashlib.sha256(material).digest(), "big"))


# -- signatures ----------------------------------------------------------------

@dataclass(frozen=True)
class Signature:
    signer: int
    value: bytes


class SigKeyPair:
    """Ed25519 signing key of one component."""

    def __init__(self, secret: bytes):
        self.secret = secret
        self._key = Ed25519PrivateKey.from_private_bytes(secret)
        self.public = self._key.public_key().public_bytes_raw()

    @classmethod
    def generate(cls, rng: random.Random) -> SigKeyPair:
        return cls(rng.getrandbits(256).to_bytes(32, "big"))

    def __repr__(self):
        return f"SigKeyPair(public={self.public.hex()[:16]}...)"


def sign(kp: SigKeyPair, message: bytes, signer: int = 0) -> Signature:
    return Signature(signer, kp._key.sign(message))


def verify(pk: bytes, message: bytes, sig: Signature | bytes) -> bool:
    value = sig.value if isinstance(sig, Signature) else sig
    try:
        Ed25519PublicKey.from_public_bytes(pk).verify(value, message)
    except (InvalidSignature, ValueError, TypeError):
        return False
    return True


# -- ElGamal -------------------------------------------------------------------

@dataclass(frozen=True)
class EgKeyShare:
    index: int
    secret: int
    public: int


def eg_keygen(rng: random.Random, index: int = 1, group: SchnorrGroup = DEFAULT_GROUP) -> EgKeyShare:
    x = group.random_scalar(rng)
    return EgKeyShare(index, x, group.gexp(x))


def eg_aggregate(publics: Iterable[int], group: SchnorrGroup = DEFAULT_GROUP) -> int:
    publics = list(publics)
    if not publics:
        raise ValueError("no key shares to aggregate")
    h = 1
    for pk in publics:
        h = h * pk % group.p
    return h


@dataclass(frozen=True)
class EgCiphertext:
    c1: int
    c2: int

    def mul(self, other: EgCiphertext, group: SchnorrGroup = DEFAULT_GROUP) -> EgCiphertext:
        return EgCiphertext(self.c1 * other.c1 % group.p, self.c2 * other.c2 % group.p)

    def to_bytes(self, group: SchnorrGroup = DEFAULT_GROUP) -> bytes:
        return group.element_bytes(self.c1) + group.element_bytes(self.c2)

    @classmethod
    def from_bytes(cls, data: bytes, group: SchnorrGroup = DEFAULT_GROUP) -> EgCiphertext:
        n = group.element_size
        if len(data) != 2 * n:
            raise ValueError("ciphertext has wrong length")
        return cls(group.element_from_bytes(data[:n]), group.element_from_bytes(data[n:]))

    def hex(self, group: SchnorrGroup = DEFAULT_GROUP) -> str:
        return self.to_bytes(group).hex()

    @classmethod
    def fromhex(cls, text: str, group: SchnorrGroup = DEFAULT_GROUP) -> EgCiphertext:
        return cls.from_bytes(bytes.fromhex(text), group)

    def is_valid(self, group: SchnorrGroup = DEFAULT_GROUP) -> bool:
        return group.is_element(self.c1) and group.is_element(self.c2)


ONE_CIPHERTEXT = EgCiphertext(1, 1)


def eg_encrypt(pk: int, m: int, r: int, group: SchnorrGroup = DEFAULT_GROUP) -> EgCiphertext:
    return EgCiphertext(group.gexp(r), m * group.exp(pk, r) % group.p)


def eg_product(cts: Iterable[EgCiphertext], group: SchnorrGroup = DEFAULT_GROUP) -> EgCiphertext:
    acc = ONE_CIPHERTEXT
    for ct in cts:
        acc = acc.mul(ct, group)
    return acc


@dataclass(frozen=True)
class ChaumPedersenProof:
    """Non-interactive proof that log_g(public) equals log_c1(share)."""

    commit_g: int
    commit_c1: int
    challenge: int
    response: int


@dataclass(frozen=True)
class DecryptionShare:
    index: int
    value: int
    proof: ChaumPedersenProof


def _cp_challenge(group, context, public, ct, value, a, b) -> int:
    return hash_to_scalar(
        group, b"chaum-pedersen/v1", context, group.element_bytes(group.g), group.element_bytes(public),
        ct.to_bytes(group), group.element_bytes(value), group.element_bytes(a), group.element_bytes(b),
    )


def eg_partial_decrypt(share: EgKeyShare, ct: EgCiphertext, rng: random.Random | None = None,
                       context: bytes = b"", group: SchnorrGroup = DEFAULT_GROUP) -> DecryptionShare:
    """``c1^x`` with a proof of correct exponent.

    Without ``rng`` the proof nonce is derived from the secret and the
    statement, so repeated calls give byte-identical shares.
    """
    value = group.exp(ct.c1, share.secret)
    extra = rng.getrandbits(256) if rng is not None else 0
    w = hash_to_scalar(group, b"cp-nonce", group.scalar_bytes(share.secret), context, ct.to_bytes(group), extra)
    w = w or 1
    a, b = group.gexp(w), group.exp(ct.c1, w)
    c = _cp_challenge(group, context, share.public, ct, value, a, b)
    z = (w + c * share.secret) % group.q
    return DecryptionShare(share.index, value, ChaumPedersenProof(a, b, c, z))


def verify_decryption_share(ds: DecryptionShare, ct: EgCiphertext, public: int,
                            context: bytes = b"", group: SchnorrGroup = DEFAULT_GROUP) -> bool:
    pf = ds.proof
    if not all(group.is_element(x) for x in (ds.value, pf.commit_g, pf.commit_c1, public, ct.c1)):
        return False
    if not (0 <= pf.challenge < group.q and 0 <= pf.response < group.q):
        return False
    if pf.challenge != _cp_challenge(group, context, public, ct, ds.value, pf.commit_g, pf.commit_c1):
        return False
    lhs_g = group.gexp(pf.response)
    rhs_g = pf.commit_g * group.exp(public, pf.challenge) % group.p
    lhs_c = group.exp(ct.c1, pf.response)
    rhs_c = pf.commit_c1 * group.exp(ds.value, pf.challenge) % group.p
    return lhs_g == rhs_g and lhs_c == rhs_c


def eg_combine(ct: EgCiphertext, shares: Sequence[DecryptionShare], publics: dict[int, int],
               context: bytes = b"", group: SchnorrGroup = DEFAULT_GROUP) -> int:
    """Recover the plaintext element; every component must contribute a valid share."""
    seen: dict[int, DecryptionShare] = {}
    for ds in shares:
        if ds.index not in publics:
            raise DecryptionShareError(ds.index, "unknown component")
        if ds.index in seen:
            raise DecryptionShareError(ds.index, "duplicate share")
        if not verify_decryption_share(ds, ct, publics[ds.index], context, group):
            raise DecryptionShareError(ds.index, "proof does not verify")
        seen[ds.index] = ds
    for index in sorted(publics):
        if index not in seen:
            raise DecryptionShareError(index, "share missing")
    denom = 1
    for ds in seen.values():
        denom = denom * ds.value % group.p
    return ct.c2 * group.inv(denom) % group.p


# -- counter encoding for the homomorphic tally -----------------------------------

def counter_encode(option_index: int, base: int, group: SchnorrGroup = DEFAULT_GROUP) -> int:
    return group.gexp(base**option_index)


def small_dlog(m: int, bound: int, group: SchnorrGroup = DEFAULT_GROUP) -> int | None:
    """Find e in [0, bound] with g^e = m by baby-step giant-step, else None."""
    step = math.isqrt(bound) + 1
    baby = {}
    x = 1
    for j in range(step):
        baby.setdefault(x, j)
        x = x * group.g % group.p
    giant = group.inv(group.gexp(step))
    y = m
    for i in range(step + 1):
        j = baby.get(y)
        if j is not None:
            e = i * step + j
            return e if e <= bound else None
        y = y * giant % group.p
    return None


def counter_decode(m: int, base: int, num_options: int, max_voters: int,
                   group: SchnorrGroup = DEFAULT_GROUP) -> list[int]:
    """Per-option counts from g^(sum_j count_j * base^j)."""
    if base <= max_voters:
        raise ValueError("base must exceed the number of voters")
    bound = max_voters * sum(base**j for j in range(num_options))
    e = small_dlog(m, bound, group)
    if e is None:
        raise TallyIntegrityError("aggregate does not decrypt to a valid count vector")
    counts = []
    for _ in range(num_options):
        e, digit = divmod(e, base)
        counts.append(digit)
    if e or any(c > max_voters for c in counts):
        raise TallyIntegrityError("aggregate does not decrypt to a valid count vector")
    return counts
