import pytest

from scvote.election import ElectionConfig, Question, Voter
from scvote.setup_component import run_setup
from scvote.simulation import ComponentKeys, build_components


def make_election(ncc=2, zv=10**4, audit_padding=0):
    return ElectionConfig(
        "e1",
        [
            Question("q1", "Approve?", ("Yes", "No", "Abstain"), 1),
            Question("q2", "Pick two", ("Ada", "Ben", "Chiara"), 2),
        ],
        [
            Voter("V1AAAAAAAAAA", ("q1", "q2")),
            Voter("V2BBBBBBBBBB", ("q1", "q2")),
            Voter("V3CCCCCCCCCC", ("q1",)),
            Voter("V4DDDDDDDDDD", ("q2",)),
        ],
        ncc=ncc,
        zv=zv,
        audit_padding=audit_padding,
    )


@pytest.fixture(scope="session")
def election():
    return make_election()


@pytest.fixture(scope="session")
def keys():
    return ComponentKeys.generate(2, "fixture-keys")


@pytest.fixture(scope="session")
def setup_out(election, keys):
    return run_setup(election, keys.election_key, seed="fixture-setup")


@pytest.fixture
def components(setup_out, keys):
    return list(build_components(setup_out, keys, seed="fixture-cc").values())


@pytest.fixture(scope="session")
def secret(keys):
    return sum(k.secret for k in keys.eg.values()) % keys.group.q


def trial_election(voters=1000, zv=16):
    """Many single-question voters; each one is an independent cast trial."""
    return ElectionConfig(
        "trials",
        [Question("q", "Pick one", ("red", "green", "blue"), 1)],
        [Voter(f"T{n:05d}", ("q",)) for n in range(voters)],
        ncc=2,
        zv=zv,
    )


@pytest.fixture(scope="session")
def trial_setup(keys):
    return run_setup(trial_election(), keys.election_key, seed="trials")


def vv_outcomes(setup, keys, behavior):
    """Cast once per voter with component 2 misbehaving; count outcomes of the voter's check."""
    from scvote.transport import Gateway
    from scvote.voter import VV_CHECKED, VoterSession

    comps = build_components(setup, keys, {2: behavior}, seed="trials")
    gateway = Gateway(setup.config, list(comps.values()))
    outcomes = {}
    for n, (vid, sheet) in enumerate(setup.sheets.items()):
        session = VoterSession(sheet, setup.config.ncc, gateway)
        session.cast({"q": [("red", "green", "blue")[n % 3]]})
        key = "accepted" if session.state == VV_CHECKED else session.outcome
        outcomes[key] = outcomes.get(key, 0) + 1
    return outcomes
