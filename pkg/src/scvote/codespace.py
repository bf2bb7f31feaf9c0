"""Finite code spaces, share arithmetic and permutations of code assignments.

Every short value the voter handles (voting codes, vote verifications, the
confirm authentication and confirm verification) is an element of a residue
ring Z_n. Values are combined with modular addition; plain-to-code tables are
shuffled with permutations written in one-line notation over 1..s.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from functools import reduce
from typing import Hashable, Iterable, Sequence

from .errors import AbortError, ParseError

BASE32_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ234567"
CODE_ALPHABET = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ"
STYLES = ("code", "decimal", "base32")


@dataclass(frozen=True, order=True)
class CodeSpace:
    """Z_size together with the way its elements are printed.

    ``style`` selects the token grammar: ``code`` for short voting codes
    (digits then letters, shifted by ``offset``), ``decimal`` for zero-padded
    verification codes and ``base32`` for hyphen-grouped authentication
    strings.
    """

    size: int
    style: str = "decimal"
    offset: int = 0

    def __post_init__(self):
        if self.size < 2:
            raise ValueError("code space needs at least two elements")
        if self.style not in STYLES:
            raise ValueError(f"unknown style {self.style!r}")
        if self.offset < 0 or (self.offset and self.style != "code"):
            raise ValueError("only voting-code spaces take an offset")

    def __call__(self, value: int) -> CodeElement:
        return CodeElement(self, value)

    def __iter__(self):
        return (CodeElement(self, v) for v in range(self.size))

    @property
    def width(self) -> int:
        if self.style == "decimal":
            return len(str(self.size - 1))
        if self.style == "base32":
            w = 1
            while 32**w < self.size:
                w += 1
            return w
        return len(_to_base(self.size - 1 + self.offset, CODE_ALPHABET))

    def random(self, rng: random.Random) -> CodeElement:
        return CodeElement(self, rng.randrange(self.size))

    def render(self, value: int) -> str:
        if not 0 <= value < self.size:
            raise ValueError(f"{value} outside Z_{self.size}")
        if self.style == "decimal":
            return str(value).zfill(self.width)
        if self.style == "base32":
            raw = _to_base(value, BASE32_ALPHABET).rjust(self.width, "A")
            return "-".join(raw[i:i + 4] for i in range(0, len(raw), 4))
        return _to_base(value + self.offset, CODE_ALPHABET)

    def parse(self, token: str) -> CodeElement:
        if not isinstance(token, str):
            raise ParseError(f"token must be a string, got {type(token).__name__}")
        cleaned = token.replace("-", "").strip().upper()
        if not cleaned:
            raise ParseError("empty token", 0)
        alphabet = {"decimal": "0123456789", "base32": BASE32_ALPHABET, "code": CODE_ALPHABET}[self.style]
        value = 0
        for pos, ch in enumerate(cleaned):
            digit = alphabet.find(ch)
            if digit < 0:
                raise ParseError(f"invalid character {ch!r} in {token!r}", pos)
            value = value * len(alphabet) + digit
        if self.style == "code":
            value -= self.offset
        if not 0 <= value < self.size:
            raise ParseError(f"{token!r} is outside the code range")
        return CodeElement(self, value)


def _to_base(value: int, alphabet: str) -> str:
    if value == 0:
        return alphabet[0]
    out = []
    while value:
        value, digit = divmod(value, len(alphabet))
        out.append(alphabet[digit])
    return "".join(reversed(out))


@dataclass(frozen=True, order=True)
class CodeElement:
    space: CodeSpace
    value: int

    def __post_init__(self):
        if not 0 <= self.value < self.space.size:
            raise ValueError(f"{self.value} outside Z_{self.space.size}")

    def __add__(self, other: CodeElement) -> CodeElement:
        return mod_add(self, other)

    def __sub__(self, other: CodeElement) -> CodeElement:
        _same_space(self, other)
        return CodeElement(self.space, (self.value - other.value) % self.space.size)

    def __neg__(self) -> CodeElement:
        return CodeElement(self.space, -self.value % self.space.size)

    @property
    def token(self) -> str:
        return self.space.render(self.value)

    def __str__(self):
        return self.token


def _same_space(a: CodeElement, b: CodeElement) -> None:
    if a.space != b.space:
        raise ValueError(f"cannot combine elements of {a.space} and {b.space}")


def mod_add(a: CodeElement, b: CodeElement) -> CodeElement:
    _same_space(a, b)
    return CodeElement(a.space, (a.value + b.value) % a.space.size)


def combine_shares(shares: Iterable[CodeElement]) -> CodeElement:
    """Fold shares with modular addition; the result does not depend on order."""
    shares = list(shares)
    if not shares:
        raise ValueError("no shares to combine")
    return reduce(mod_add, shares)


@dataclass(frozen=True)
class Permutation:
    """A bijection on 1..s in one-line notation, e.g. ``(2, 3, 1)``."""

    mapping: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "mapping", tuple(self.mapping))
        if sorted(self.mapping) != list(range(1, len(self.mapping) + 1)):
            raise ValueError(f"{list(self.mapping)} is not a permutation of 1..{len(self.mapping)}")

    @classmethod
    def identity(cls, s: int) -> Permutation:
        return cls(tuple(range(1, s + 1)))

    @property
    def size(self) -> int:
        return len(self.mapping)

    def __len__(self):
        return len(self.mapping)

    def __call__(self, j: int) -> int:
        return self.mapping[j - 1]

    def __mul__(self, other: Permutation) -> Permutation:
        return perm_compose(self, other)

    def inverse(self) -> Permutation:
        inv = [0] * self.size
        for j, target in enumerate(self.mapping, start=1):
            inv[target - 1] = j
        return Permutation(tuple(inv))

    def then(self, other: Permutation) -> Permutation:
        """Function composition: apply ``self`` first, then ``other``."""
        if self.size != other.size:
            raise ValueError("permutation sizes differ")
        return Permutation(tuple(other(self(j)) for j in range(1, self.size + 1)))

    def relocate(self, items: Sequence) -> list:
        """Move the item at position j to position ``self(j)``."""
        if len(items) != self.size:
            raise ValueError(f"expected {self.size} items, got {len(items)}")
        out = [None] * self.size
        for j, item in enumerate(items, start=1):
            out[self(j) - 1] = item
        return out


def perm_compose(p: Permutation, q: Permutation) -> Permutation:
    """``p * q``: the entries of ``p`` relocated by ``q``.

    This is the operator fixed by ``[1,2,3] * [2,3,1] = [3,1,2]``. It has
    ``p * identity == p`` and ``p * p == identity``, but it is not
    associative; products over several permutations are folded left to right.
    """
    if p.size != q.size:
        raise ValueError("permutation sizes differ")
    return Permutation(tuple(q.relocate(p.mapping)))


def perm_product(perms: Sequence[Permutation]) -> Permutation:
    if not perms:
        raise ValueError("empty product")
    return reduce(perm_compose, perms)


def perm_random(s: int, rng: random.Random) -> Permutation:
    if s < 1:
        raise ValueError("permutation size must be positive")
    mapping = list(range(1, s + 1))
    rng.shuffle(mapping)
    return Permutation(tuple(mapping))


@dataclass(frozen=True)
class PlainToCode:
    """Ordered (plain option, voting code) pairs."""

    pairs: tuple[tuple[Hashable, CodeElement], ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((p, c) for p, c in self.pairs))
        plains = [p for p, _ in self.pairs]
        codes = [c for _, c in self.pairs]
        if len(set(plains)) != len(plains):
            raise ValueError("plain options must be distinct")
        if len(set(codes)) != len(codes):
            raise ValueError("codes must be distinct")
        if codes:
            space = codes[0].space
            if any(c.space != space for c in codes) or len(codes) != space.size:
                raise ValueError("codes must cover the full code space exactly once")

    @classmethod
    def base(cls, options: Sequence[Hashable], space: CodeSpace) -> PlainToCode:
        """Option j paired with code value j."""
        if len(options) != space.size:
            raise ValueError("one code per option required")
        return cls(tuple((opt, space(j)) for j, opt in enumerate(options)))

    @property
    def plains(self) -> list:
        return [p for p, _ in self.pairs]

    @property
    def codes(self) -> list[CodeElement]:
        return [c for _, c in self.pairs]

    def __len__(self):
        return len(self.pairs)

    def __mul__(self, p: Permutation) -> PlainToCode:
        return perm_apply_pairs(self, p)


def perm_apply_pairs(d: PlainToCode, p: Permutation) -> PlainToCode:
    """Permute the right-hand values of ``d``; left values keep their order."""
    if len(d) != p.size:
        raise ValueError(f"permutation of size {p.size} applied to {len(d)} pairs")
    return PlainToCode(tuple(zip(d.plains, p.relocate(d.codes))))


def lookup_code(ptc: PlainToCode, plain: Hashable) -> CodeElement:
    matches = [c for p, c in ptc.pairs if p == plain]
    if len(matches) != 1:
        raise AbortError(f"{len(matches)} matches for plain option {plain!r}")
    return matches[0]


def lookup_plain(ptc: PlainToCode, code: CodeElement) -> Hashable:
    matches = [p for p, c in ptc.pairs if c == code]
    if len(matches) != 1:
        raise AbortError(f"{len(matches)} matches for code {code.token!r}")
    return matches[0]
