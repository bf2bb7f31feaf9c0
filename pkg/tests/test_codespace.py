import itertools
import random
from collections import Counter

import pytest

from scvote.codespace import (
    CodeSpace,
    Permutation,
    PlainToCode,
    combine_shares,
    lookup_code,
    lookup_plain,
    mod_add,
    perm_apply_pairs,
    perm_compose,
    perm_product,
    perm_random,
)
from scvote.errors import AbortError, ParseError

Z10 = CodeSpace(10)


def P(*m):
    return Permutation(m)


def all_perms(s):
    return [Permutation(p) for p in itertools.permutations(range(1, s + 1))]


# -- spaces and rendering

@pytest.mark.parametrize("style,size,offset", [
    ("decimal", 10**4, 0), ("decimal", 16, 0), ("base32", 2**40, 0), ("base32", 10**4, 0),
    ("code", 3, 0), ("code", 4, 3), ("code", 40, 2),
])
def test_render_parse_round_trip(style, size, offset):
    space = CodeSpace(size, style, offset)
    values = range(size) if size <= 5000 else random.Random(1).sample(range(size), 3000)
    tokens = set()
    for v in values:
        token = space.render(v)
        tokens.add(token)
        if style != "code":
            assert len(token.replace("-", "")) == space.width
        assert space.parse(token).value == v
    assert len(tokens) == len(values)


def test_token_grammar():
    assert CodeSpace(10**4).render(42) == "0042"
    assert CodeSpace(2**40, "base32").render(0) == "AAAA-AAAA"
    assert CodeSpace(2**40, "base32").render(2**40 - 1) == "7777-7777"
    code = CodeSpace(3, "code", offset=2)
    assert [code.render(v) for v in range(3)] == ["2", "3", "4"]
    assert CodeSpace(36, "code").render(35) == "Z"


def test_parse_is_case_and_hyphen_insensitive():
    space = CodeSpace(2**40, "base32")
    token = space.render(123456789)
    assert space.parse(token.lower()).value == 123456789
    assert space.parse(token.replace("-", "")).value == 123456789


@pytest.mark.parametrize("token", ["", "ABCDE", "10000", "+1", "12a4"])
def test_parse_rejects_out_of_range(token):
    with pytest.raises(ParseError):
        CodeSpace(10**4).parse(token)


def test_code_parse_rejects_other_question_range():
    with pytest.raises(ParseError):
        CodeSpace(3, "code", offset=2).parse("5")
    with pytest.raises(ParseError):
        CodeSpace(3, "code", offset=2).parse("1")


def test_space_needs_two_elements():
    with pytest.raises(ValueError):
        CodeSpace(1)


# -- modular addition and share combination

def test_mod_add_examples():
    assert mod_add(Z10(3), Z10(4)) == Z10(7)
    assert mod_add(Z10(9), Z10(1)) == Z10(0)
    for x in range(10):
        assert mod_add(Z10(0), Z10(x)) == Z10(x)


def test_mod_add_rejects_mixed_spaces():
    with pytest.raises(ValueError):
        mod_add(Z10(1), CodeSpace(11)(1))


def test_combine_shares_examples():
    assert combine_shares([Z10(3), Z10(4), Z10(5)]) == Z10(2)
    assert combine_shares([Z10(6)]) == Z10(6)
    with pytest.raises(ValueError):
        combine_shares([])
    with pytest.raises(ValueError):
        combine_shares([Z10(1), CodeSpace(12)(1)])


def test_combine_shares_order_independent():
    rng = random.Random(7)
    space = CodeSpace(10**4)
    shares = [space.random(rng) for _ in range(4)]
    results = {combine_shares(order) for order in itertools.permutations(shares)}
    assert len(results) == 1


def test_combine_commutative_associative_z7():
    z7 = CodeSpace(7)
    for a, b, c in itertools.product(z7, repeat=3):
        assert a + b == b + a
        assert (a + b) + c == a + (b + c)
        assert combine_shares([a, b, c]) == combine_shares([c, a, b])


@pytest.mark.parametrize("n", [2, 3, 7, 16, 64, 100])
def test_remaining_share_maps_bijectively(n):
    space = CodeSpace(n)
    rng = random.Random(n)
    for fixed in ([space(0)], [space(rng.randrange(n)), space(rng.randrange(n))], list(space)[:3]):
        images = {combine_shares([*fixed, x]) for x in space}
        assert images == set(space)
        # and the other way round, with the free share first
        assert {combine_shares([x, *fixed]) for x in space} == set(space)


# -- permutations

def test_paper_operator_example():
    assert P(1, 2, 3) * P(2, 3, 1) == P(3, 1, 2)
    assert perm_compose(P(1, 2, 3), P(2, 3, 1)).mapping == (3, 1, 2)


def test_paper_pair_example():
    s = CodeSpace(3)
    a, b, c = "a", "b", "c"
    # codes stand in for a, b, c through their values
    codes = {a: s(0), b: s(1), c: s(2)}
    d = PlainToCode(((1, codes[a]), (2, codes[b]), (3, codes[c])))
    out = perm_apply_pairs(d, P(3, 1, 2))
    assert out.pairs == ((1, codes[b]), (2, codes[c]), (3, codes[a]))
    assert d * P(3, 1, 2) == out


def test_identity_and_self_inverse_of_operator():
    for s in range(1, 6):
        e = Permutation.identity(s)
        for p in all_perms(s):
            assert p * e == p
            assert p * p == e


def test_operator_closure_and_bijective_in_each_argument():
    for s in range(1, 6):
        perms = all_perms(s)
        universe = set(perms)
        for q in perms:
            assert {p * q for p in perms} == universe
            assert {q * p for p in perms} == universe


def test_operator_is_inverse_relocation():
    # p * q sends p's entry at j to position q(j), i.e. p composed with q^-1
    for p, q in itertools.product(all_perms(4), repeat=2):
        assert (p * q) == q.inverse().then(p)


def test_size_mismatch():
    with pytest.raises(ValueError):
        P(1, 2) * P(1, 2, 3)
    with pytest.raises(ValueError):
        perm_apply_pairs(PlainToCode.base(["x", "y"], CodeSpace(2)), P(1, 2, 3))
    with pytest.raises(ValueError):
        Permutation((1, 1, 2))


def test_group_laws_on_composition():
    for s in range(1, 6):
        perms = all_perms(s)
        universe = set(perms)
        e = Permutation.identity(s)
        for p in perms:
            assert p.then(e) == p == e.then(p)
            assert p.then(p.inverse()) == e
            assert {p.then(q) for q in perms} == universe
        sample = perms if s <= 4 else perms[::7]
        for p, q, r in itertools.product(sample, repeat=3):
            assert p.then(q).then(r) == p.then(q.then(r))


def test_order_three_cycle():
    a = P(2, 3, 1)
    assert a.then(a).then(a) == Permutation.identity(3)
    assert a.then(a) != Permutation.identity(3)


def test_relocation_is_a_group_action():
    items = list("wxyz")
    for p, q in itertools.product(all_perms(4), repeat=2):
        assert q.relocate(p.relocate(items)) == p.then(q).relocate(items)


def test_apply_pairs_preserves_columns():
    space = CodeSpace(4, "code")
    d = PlainToCode.base(["A", "B", "C", "D"], space)
    for p in all_perms(4):
        out = perm_apply_pairs(d, p)
        assert out.plains == d.plains
        assert sorted(out.codes) == sorted(d.codes)
    assert perm_apply_pairs(d, Permutation.identity(4)) == d


def test_product_folds_left():
    p, q, r = P(2, 3, 1), P(1, 3, 2), P(3, 2, 1)
    assert perm_product([p, q, r]) == (p * q) * r
    assert perm_product([p]) == p
    with pytest.raises(ValueError):
        perm_product([])


def test_product_bijective_in_any_single_factor():
    # merged permutation is uniform as soon as one factor is
    perms = all_perms(4)
    universe = set(perms)
    rng = random.Random(3)
    for position in range(3):
        fixed = [rng.choice(perms) for _ in range(2)]
        images = set()
        for p in perms:
            factors = list(fixed)
            factors.insert(position, p)
            images.add(perm_product(factors))
        assert images == universe


def test_perm_random_small_and_golden():
    assert perm_random(1, random.Random(0)) == P(1)
    assert perm_random(3, random.Random(42)) == P(2, 1, 3)
    assert perm_random(3, random.Random(20261015)) == P(2, 3, 1)
    with pytest.raises(ValueError):
        perm_random(0, random.Random(0))


def test_perm_random_uniform():
    rng = random.Random(99)
    counts = Counter(perm_random(3, rng) for _ in range(6000))
    assert len(counts) == 6
    sigma = (6000 * (1 / 6) * (5 / 6)) ** 0.5
    for n in counts.values():
        assert abs(n - 1000) <= 5 * sigma


# -- plain-to-code lookups

def test_lookup_examples():
    s = CodeSpace(3, "code", offset=10)
    A, B, C = s(0), s(1), s(2)
    assert A.token == "A" and B.token == "B" and C.token == "C"
    ptc = PlainToCode((("Yes", A), ("No", B), ("Abstain", C)))
    assert lookup_code(ptc, "No") == B
    assert lookup_plain(ptc, C) == "Abstain"
    with pytest.raises(AbortError):
        lookup_code(ptc, "Maybe")
    with pytest.raises(AbortError):
        lookup_plain(ptc, CodeSpace(4, "code", offset=10)(3))


def test_lookup_round_trips():
    space = CodeSpace(5, "code")
    ptc = perm_apply_pairs(PlainToCode.base(list("vwxyz"), space), P(5, 3, 1, 2, 4))
    for plain, code in ptc.pairs:
        assert lookup_plain(ptc, lookup_code(ptc, plain)) == plain
        assert lookup_code(ptc, lookup_plain(ptc, code)) == code


def test_plain_to_code_invariants():
    s = CodeSpace(2)
    with pytest.raises(ValueError):
        PlainToCode((("a", s(0)), ("a", s(1))))
    with pytest.raises(ValueError):
        PlainToCode((("a", s(0)), ("b", s(0))))
    with pytest.raises(ValueError):
        PlainToCode((("a", CodeSpace(3)(0)), ("b", CodeSpace(3)(1))))
