import hashlib
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uavroute.ledger import (GENESIS_HASH, RECORD_SIZE, AuthRecord, Ledger, TamperedLedgerError, append_record,
                             verify_chain)
from uavroute.trust import (DegenerateTopologyError, TrustParams, TrustState, apply_event, neighbor_reliability,
                            rebuild_trust_from_ledger, record_authentication, security_degree, security_degrees,
                            update_credibility, update_reliability)

from .conftest import line_graph


def make_ledger(n, seed=0):
    rng = np.random.default_rng(seed)
    led = Ledger()
    for k in range(n):
        led.append(int(rng.integers(0, 12)), k, int(rng.random() < 0.3), float(k) * 0.25)
    return led


def test_genesis_and_chain_link():
    led = Ledger()
    a = append_record(led, 3, 1, 0, 0.5)
    assert a.prev_hash == GENESIS_HASH and a.seq == 0
    b = append_record(led, 4, 2, 1, 0.7)
    assert b.prev_hash == a.record_hash and b.seq == 1
    assert led.tail_hash == b.record_hash


def test_record_hash_is_sha256_of_fixed_layout():
    led = Ledger()
    rec = led.append(7, 2, 1, 1.5)
    payload = struct.pack(">QQQBd32s", 0, 7, 2, 1, 1.5, GENESIS_HASH)
    assert rec.record_hash == hashlib.sha256(payload).digest()
    assert len(rec.to_bytes()) == RECORD_SIZE


def test_delta_must_be_binary():
    with pytest.raises(ValueError):
        Ledger().append(1, 1, 2, 0.0)


def test_verify_empty_and_large():
    assert Ledger().verify()
    assert make_ledger(1000).verify()


def test_every_byte_flip_detected():
    raw = make_ledger(50).to_bytes()
    for pos in range(len(raw)):
        for mask in (0x01, 0x80, 0xFF):
            bad = bytearray(raw)
            bad[pos] ^= mask
            assert not Ledger.from_bytes(bytes(bad)).verify(), (pos, mask)


@settings(max_examples=200)
@given(st.integers(2, 8), st.data())
def test_reordering_or_dropping_detected(n, data):
    recs = list(make_ledger(n, seed=n))
    perm = data.draw(st.permutations(range(n)))
    if list(perm) != list(range(n)):
        assert not verify_chain([recs[k] for k in perm])
    drop = data.draw(st.integers(0, n - 1))
    if drop != n - 1:
        assert not verify_chain(recs[:drop] + recs[drop + 1:])


@settings(max_examples=200)
@given(st.integers(1, 6), st.integers(0, 5), st.sampled_from(["uav_id", "hop", "delta_data", "timestamp", "seq"]))
def test_field_edit_detected(n, k, name):
    recs = list(make_ledger(n, seed=11))
    k = k % n
    r = recs[k]
    new = {"uav_id": r.uav_id + 1, "hop": r.hop + 1, "delta_data": 1 - r.delta_data,
           "timestamp": r.timestamp + 1e-9, "seq": r.seq + 1}[name]
    recs[k] = AuthRecord(**{**r.__dict__, name: new})
    assert not verify_chain(recs)


def test_bytes_and_csv_round_trip(tmp_path):
    led = make_ledger(30)
    assert Ledger.from_bytes(led.to_bytes()).to_bytes() == led.to_bytes()
    led.write_csv(tmp_path / "l.csv")
    back = Ledger.read_csv(tmp_path / "l.csv")
    assert back.to_bytes() == led.to_bytes() and back.verify()


# -- trust arithmetic ----------------------------------------------------

def state_with(n, successes, failures, reliability=None, params=TrustParams()):
    s = TrustState.initial(n, params)
    s.successes[:] = successes
    s.failures[:] = failures
    if reliability is not None:
        s.reliability[:] = reliability
    return s


def test_credibility_updates():
    s = state_with(1, 0, 0)
    assert update_credibility(s, 0, 0) == 1.0 and s.successes[0] == 1
    s = state_with(1, 9, 1)
    assert update_credibility(s, 0, 0) == pytest.approx(10 / 11)
    s = state_with(1, 9, 1)
    assert update_credibility(s, 0, 1) == pytest.approx(9 / 11)
    assert round(10 / 11, 4) == 0.9091 and round(9 / 11, 4) == 0.8182


def test_reliability_updates():
    s = state_with(1, 1, 0, 0.8)
    assert update_reliability(s, 0, 0) == 0.8
    s = state_with(1, 1, 0, 0.8)
    assert update_reliability(s, 0, 1) == pytest.approx(0.6)
    s = state_with(1, 1, 0, 0.1)
    assert update_reliability(s, 0, 1) == 0.0


def test_neighbor_reliability_and_security_degree():
    g = line_graph([0.0, 100.0, 200.0, 300.0], o_max=150.0)
    s = state_with(4, 1, 0, [0.9, 0.8, 0.7, 1.0])
    assert neighbor_reliability(s, g, 0) == pytest.approx(0.8)
    assert neighbor_reliability(s, g, 1) == pytest.approx((0.9 + 0.7) / 2)
    star = line_graph([0.0, 150.0, 300.0], o_max=400.0)
    s3 = state_with(3, 1, 0, [0.9, 0.8, 0.7])
    assert neighbor_reliability(s3, star, 0) == pytest.approx(0.75)
    ones = state_with(4, 1, 0, 1.0)
    assert neighbor_reliability(ones, g, 2) == 1.0


def test_neighbor_average_three():
    # node 0 sees 1, 2 and 3 within range
    g = line_graph([0.0, 50.0, 100.0, 150.0], o_max=160.0)
    s = state_with(4, 1, 0, [0.5, 0.9, 0.8, 0.7])
    assert neighbor_reliability(s, g, 0) == pytest.approx(0.8)


def test_security_degree_weights():
    g = line_graph([0.0, 100.0])
    s = state_with(2, [9, 1], [1, 0], [0.8, 0.8])
    assert s.credibility(0) == pytest.approx(0.9)
    assert security_degree(s, g, 0) == pytest.approx(0.85)
    s1 = state_with(2, [9, 1], [1, 0], [0.8, 0.8], TrustParams(alpha=1.0))
    assert security_degree(s1, g, 0) == 0.8
    s0 = state_with(2, [9, 1], [1, 0], [0.8, 0.8], TrustParams(alpha=0.0))
    assert security_degree(s0, g, 0) == 0.9
    np.testing.assert_allclose(security_degrees(s, g), [security_degree(s, g, 0), security_degree(s, g, 1)])


def test_isolated_node():
    g = line_graph([0.0, 500.0])
    s = TrustState.initial(2)
    with pytest.raises(DegenerateTopologyError):
        neighbor_reliability(s, g, 0)
    assert np.isnan(security_degrees(s, g)).all()


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 1)), max_size=60))
def test_bounds_hold_under_any_sequence(events):
    g = line_graph([0.0, 100.0, 200.0, 300.0, 400.0, 500.0])
    s = TrustState.initial(6)
    for uav, d in events:
        apply_event(s, uav, d)
    assert np.all((0 <= s.reliability) & (s.reliability <= 1))
    sd = security_degrees(s, g)
    assert np.all((0 <= sd) & (sd <= 1))
    assert np.all((0 <= s.credibilities()) & (s.credibilities() <= 1))


def test_replay_equals_incremental_on_1000_sequences():
    rng = np.random.default_rng(2024)
    params = TrustParams()
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        led = Ledger()
        state = TrustState.initial(n, params)
        for k in range(int(rng.integers(0, 40))):
            record_authentication(led, state, int(rng.integers(0, n)), k, int(rng.random() < 0.4), float(k))
        assert rebuild_trust_from_ledger(led, n, params) == state


def test_empty_ledger_gives_initial_state():
    assert rebuild_trust_from_ledger(Ledger(), 5) == TrustState.initial(5)


def test_tampered_ledger_rejected():
    led = make_ledger(10)
    raw = bytearray(led.to_bytes())
    raw[RECORD_SIZE * 3 + 20] ^= 1
    with pytest.raises(TamperedLedgerError):
        rebuild_trust_from_ledger(Ledger.from_bytes(bytes(raw)), 12)


def test_invalid_trust_params():
    with pytest.raises(ValueError):
        TrustParams(alpha=1.5)
    with pytest.raises(ValueError):
        TrustParams(beta=0.0)
