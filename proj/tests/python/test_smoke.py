import json
import struct

import pytest
from hypothesis import given, settings, strategies as st

import edima


def read_pcap_struct(data):
    """Minimal little/big-endian pcap reader for Ethernet/IPv4 TCP frames."""
    magic = data[:4]
    endian = "<" if magic == b"\xd4\xc3\xb2\xa1" else ">"
    assert struct.unpack(endian + "I", magic)[0] == 0xA1B2C3D4
    out = []
    pos = 24
    while pos + 16 <= len(data):
        sec, usec, incl, _ = struct.unpack(endian + "IIII", data[pos:pos + 16])
        frame = data[pos + 16:pos + 16 + incl]
        pos += 16 + incl
        ip = frame[14:]
        ihl = (ip[0] & 0x0F) * 4
        proto = ip[9]
        src = ".".join(str(b) for b in ip[12:16])
        dst = ".".join(str(b) for b in ip[16:20])
        sport = dport = flags = 0
        if proto in (6, 17):
            sport, dport = struct.unpack(">HH", ip[ihl:ihl + 4])
        if proto == 6:
            flags = ip[ihl + 13]
        out.append((sec * 1_000_000 + usec, src, dst, proto, sport, dport, flags))
    return out


def syn(ts, dst, port, src="192.168.1.10"):
    return edima.PacketRecord(ts, src, dst, 6, 40000, port, edima.TCP_SYN)


def test_pcap_matches_independent_reader():
    recs = edima.synth_session("malicious", "telnet", duration_secs=60, seed=3)
    data = edima.write_pcap(recs)
    ours = [(r.ts_micros, r.src, r.dst, r.ip_proto, r.src_port, r.dst_port, r.tcp_flags)
            for r in recs]
    assert read_pcap_struct(data) == ours
    back, skipped = edima.parse_pcap(data)
    assert skipped == 0 and back == recs


def test_bad_magic_raises_with_code():
    with pytest.raises(edima.EdimaError) as info:
        edima.parse_pcap(b"\xde\xad\xbe\xef" + bytes(20))
    assert info.value.code == "BadMagic"


def test_features_of_small_session():
    recs = [syn(0, "10.0.0.1", 23), syn(1, "10.0.0.1", 23), syn(2, "10.0.0.2", 2323),
            syn(3, "10.0.0.3", 80)]
    (session,) = edima.slice_sessions(recs, "gw")
    fv = edima.extract_features(edima.filter_session(session, "telnet"), "telnet")
    assert (fv.f1, fv.f2, fv.f3, fv.f4) == (2, 2, 1, 1.5)


def test_target_ports():
    assert sorted(edima.target_ports("http-post")) == [80, 20736, 36895, 37215]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 3)), max_size=60))
def test_feature_oracle(packets):
    recs = [syn(i, f"10.0.0.{d}", [23, 2323, 80, 22][p]) for i, (d, p) in enumerate(packets)]
    counts = {}
    for r in recs:
        if r.dst_port in (23, 2323):
            counts[r.dst] = counts.get(r.dst, 0) + 1
    sessions = edima.slice_sessions(recs, "gw")
    if not sessions:
        assert not recs
        return
    fv = edima.extract_features(edima.filter_session(sessions[0], "telnet"), "telnet")
    assert fv.f1 == len(counts)
    assert fv.f2 == max(counts.values(), default=0)
    assert fv.f3 == min(counts.values(), default=0)


def test_train_predict_and_model_round_trip():
    rows = []
    for i in range(20):
        rows.append(edima.FeatureVector(20, 3, 1, 2.0, label="benign"))
        rows.append(edima.FeatureVector(4000 + i, 2, 1, 1.01, label="malicious"))
    for algo in ("gnb", "knn", "rf"):
        model = edima.train(algo, rows, trees=10, seed=1)
        probe = edima.FeatureVector(4500, 2, 1, 1.0)
        assert model.predict(probe)[0] == "malicious"
        back = edima.Model.deserialize(model.serialize())
        assert back.predict(probe) == model.predict(probe)
        assert back.digest() == model.digest()


def test_metrics():
    m = edima.metrics_from_counts(11, 1, 0, 6)
    assert m["recall"] == 1.0
    assert round(edima.f1_score(0.86, 1.0), 2) == 0.92


def test_promotion():
    rows = [edima.FeatureVector(20, 3, 1, 2.0, label="benign"),
            edima.FeatureVector(21, 3, 1, 2.0, label="benign"),
            edima.FeatureVector(4000, 2, 1, 1.0, label="malicious"),
            edima.FeatureVector(4100, 2, 1, 1.0, label="malicious")]
    model = edima.train("knn", rows, k=1)
    reg = edima.Registry("telnet")
    base = edima.metrics_from_counts(9, 1, 0, 0)
    assert reg.compare_and_promote(model, base) == "promoted"
    assert reg.compare_and_promote(model, base) == "kept"
    assert reg.history_length == 2


def test_featuredb_round_trip(tmp_path):
    db = edima.FeatureDb.open(tmp_path / "f.jsonl")
    fv = edima.FeatureVector(1, 1, 1, 1.0, label="benign")
    fv.gateway = "gw"
    assert db.insert([fv]) == 1
    with pytest.raises(edima.EdimaError):
        db.insert([fv])
    db.export_to(tmp_path / "out.jsonl")
    fresh = edima.FeatureDb()
    fresh.import_from(tmp_path / "out.jsonl")
    assert fresh.query() == db.query()


def test_policy():
    rules = [{"category": "telnet", "label": "malicious", "min_score": 0.5,
              "action": "block_gateway_traffic"}]
    action = edima.evaluate_policy(rules, "gw", "telnet", "malicious", 0.9)
    assert action["action"] == "block_gateway_traffic"
    action = edima.evaluate_policy(rules, "gw", "telnet", "benign", 0.1)
    assert action["action"] == "log_only"


def test_corpus_and_pipeline(tmp_path):
    entries = edima.build_corpus(6, 6, "telnet", tmp_path, duration_secs=300, seed=5)
    assert len(entries) == 12
    rows = []
    for e in entries:
        for fv in edima.extract_file_features(tmp_path / e["file"], "telnet", window_secs=300):
            fv.label = e["label"]
            rows.append(fv)
    model, metrics = edima.build("knn", rows, seed=5)
    assert metrics["recall"] == 1.0
    results = edima.run_pipeline([tmp_path / e["file"] for e in entries], model, workers=2)
    assert len(results) == 12
    json.dumps([r["verdict"] for r in results])
