"""Store-level behavior: access decisions against a hand-enumerated
oracle, and index consistency against full keyspace scans."""

import random

import pytest

from gdprkv.model import READ, AclGrant, Record
from gdprkv.store import SampleSet, Store

NOW = 10_000_000


def rec(key, owner="alice", purposes=("ads",), objections=(), expiry=None):
    return Record(
        key=key, value=b"v", owner=owner,
        purposes=frozenset(purposes), objections=frozenset(objections),
        expiry=expiry, recipients=frozenset(), origin="direct",
        allowed_regions=frozenset(), created_at=1,
    )


# -- check_access truth table -------------------------------------------------


def access_oracle(has_grant, whitelisted, objected, grant_expired):
    """Independent statement of the rules: deny-by-default, expired grant
    behaves as absent, objection overrides whitelist."""
    if not has_grant:
        return "ACCESS_DENIED"
    if grant_expired:
        return "ACCESS_DENIED"
    if not whitelisted:
        return "PURPOSE_DENIED"
    if objected:
        return "PURPOSE_DENIED"
    return None  # allow


@pytest.mark.parametrize("has_grant", [False, True])
@pytest.mark.parametrize("whitelisted", [False, True])
@pytest.mark.parametrize("objected", [False, True])
@pytest.mark.parametrize("grant_expired", [False, True])
def test_check_access_truth_table(has_grant, whitelisted, objected, grant_expired):
    store = Store()
    if has_grant:
        store.set_grant(
            AclGrant(
                "svc", frozenset({READ}), frozenset({"ads"}),
                valid_until=NOW - 1 if grant_expired else None,
            )
        )
    record = rec(
        b"k",
        purposes=("ads",) if whitelisted else ("other",),
        objections=("ads",) if objected else (),
    )
    decision = store.check_access("svc", READ, "ads", record, NOW)
    expected = access_oracle(has_grant, whitelisted, objected, grant_expired)
    if expected is None:
        assert decision.allowed
    else:
        assert not decision.allowed
        assert decision.reason == expected


def test_no_grant_denies_by_default():
    store = Store()
    assert store.check_access("ghost", READ, "ads", rec(b"k"), NOW).reason == "ACCESS_DENIED"


def test_grant_op_kind_not_covered():
    store = Store()
    store.set_grant(AclGrant("svc", frozenset({READ}), frozenset({"ads"})))
    assert not store.check_access("svc", "write", "ads", None, NOW)


def test_purpose_not_in_grant_is_access_denied():
    store = Store()
    store.set_grant(AclGrant("svc", frozenset({READ}), frozenset({"mail"})))
    decision = store.check_access("svc", READ, "ads", rec(b"k"), NOW)
    assert decision.reason == "ACCESS_DENIED"


def test_empty_record_purposes_denies_all_reads():
    store = Store()
    store.set_grant(AclGrant("svc", frozenset({READ}), frozenset({"ads"})))
    decision = store.check_access("svc", READ, "ads", rec(b"k", purposes=()), NOW)
    assert decision.reason == "PURPOSE_DENIED"


# -- index-scan equivalence ---------------------------------------------------


def owner_oracle(store):
    out = {}
    for key, r in store.records.items():
        out.setdefault(r.owner, set()).add(key)
    return out


def purpose_oracle(store):
    out = {}
    for key, r in store.records.items():
        for p in r.purposes:
            out.setdefault(p, set()).add(key)
    return out


def expiry_oracle(store):
    return sorted((r.expiry, key) for key, r in store.records.items() if r.expiry is not None)


def flagged_oracle(store):
    return {key for key, r in store.records.items() if r.expiry is not None}


def assert_indices_match_scan(store):
    assert {o: set(ks) for o, ks in store.by_owner.items() if ks} == owner_oracle(store)
    assert {p: set(ks) for p, ks in store.by_purpose.items() if ks} == purpose_oracle(store)
    assert list(store.by_expiry) == expiry_oracle(store)
    assert set(store.expire_flagged._pos) == flagged_oracle(store)


def random_mutation(store, rng, keyspace, owners, purposes):
    key = b"k%d" % rng.randrange(keyspace)
    roll = rng.random()
    if roll < 0.55:
        store.insert(
            rec(
                key,
                owner=rng.choice(owners),
                purposes=tuple(rng.sample(purposes, rng.randint(0, len(purposes)))),
                expiry=rng.randrange(1, 10**9) if rng.random() < 0.5 else None,
            )
        )
    elif roll < 0.75:
        store.remove(key)
    elif key in store.records:
        if rng.random() < 0.7:
            store.set_expiry(key, rng.randrange(1, 10**9))
        else:
            store.set_expiry(key, None)


def test_indices_equal_full_scan_over_randomized_states():
    rng = random.Random(20240817)
    owners = ["alice", "bob", "carol"]
    purposes = ["ads", "mail", "analytics"]
    for state in range(300):
        store = Store()
        for _ in range(rng.randrange(1, 40)):
            random_mutation(store, rng, 12, owners, purposes)
        assert_indices_match_scan(store)


def test_reinsert_same_key_keeps_owner_index_single():
    store = Store()
    store.insert(rec(b"k1", owner="alice"))
    store.insert(rec(b"k1", owner="alice", purposes=("mail",)))
    assert store.by_owner["alice"] == {b"k1"}
    assert b"k1" not in store.by_purpose.get("ads", set())
    assert store.by_purpose["mail"] == {b"k1"}
    assert_indices_match_scan(store)


def test_owner_change_moves_index():
    store = Store()
    store.insert(rec(b"k1", owner="alice"))
    store.insert(rec(b"k1", owner="bob"))
    assert "alice" not in store.by_owner
    assert store.by_owner["bob"] == {b"k1"}


def test_listings_sorted_and_exclude_expired():
    store = Store()
    store.insert(rec(b"b", owner="alice"))
    store.insert(rec(b"a", owner="alice"))
    store.insert(rec(b"c", owner="alice", expiry=NOW - 5))
    assert store.keys_by_owner("alice", NOW) == [b"a", b"b"]
    assert store.keys_by_purpose("ads", NOW) == [b"a", b"b"]
    assert store.keys_by_owner("nobody", NOW) == []
    # the expired record is still physically present
    assert store.owned_keys_raw("alice") == [b"a", b"b", b"c"]
    assert store.pending_expired(NOW) == 1


def test_region_gate():
    store = Store(server_region="us-east")
    assert store.region_allowed(frozenset())
    assert store.region_allowed(frozenset({"us-east", "eu-west"}))
    assert not store.region_allowed(frozenset({"eu-west"}))


# -- SampleSet ----------------------------------------------------------------


def test_sample_set_add_discard_sample():
    s = SampleSet()
    for i in range(50):
        s.add(b"k%d" % i)
    assert len(s) == 50
    s.add(b"k0")
    assert len(s) == 50
    s.discard(b"k10")
    s.discard(b"k10")
    assert len(s) == 49 and b"k10" not in s
    rng = random.Random(3)
    batch = s.sample(rng, 20)
    assert len(batch) == 20 and len(set(batch)) == 20  # without replacement
    for key in batch:
        assert key in s


def test_sample_set_with_replacement_when_small():
    s = SampleSet()
    s.add(b"a")
    s.add(b"b")
    rng = random.Random(5)
    batch = s.sample(rng, 20)
    assert len(batch) == 20
    assert set(batch) <= {b"a", b"b"}
    assert s.sample(rng, 0) == []
    empty = SampleSet()
    assert empty.sample(rng, 20) == []
