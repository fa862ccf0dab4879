"""Smoke tests for the python bindings: every exposed operation does one
representative round trip against the C++ core."""

import json

import pytest

import iat


SILO_CID = (
    "object-type SmartSilo id=16663 { "
    "resource filling id=0 ops=[read] type=boolean; "
    "resource fill id=2 ops=[execute]; "
    "instance heater id=0 type=16668; "
    "instance inValve id=1 type=16664 } "
    "object-type Heater id=16668 { resource status id=0 ops=[read] type=boolean; } "
    "object-type Valve id=16664 { resource state id=0 ops=[read] type=boolean; }"
)


def test_lower_cid_emits_descriptor_json():
    doc = json.loads(iat.lower_cid(SILO_CID))
    silo = next(o for o in doc["objects"] if o["id"] == 16663)
    assert silo["name"] == "SmartSilo"
    ids = {(r["id"], r["name"]) for r in silo["resourcedefs"]}
    assert ids == {(0, "filling"), (2, "fill")}
    refs = {(r["id"], r["name"], r["objecttypeid"]) for r in silo["instancerefs"]}
    assert refs == {(0, "heater", 16668), (1, "inValve", 16664)}


def test_descriptor_json_roundtrip_is_identity():
    emitted = iat.lower_cid(SILO_CID)
    assert iat.descriptor_json_roundtrip(emitted) == emitted


def test_canonical_cid_roundtrip():
    canonical = iat.canonical_cid(SILO_CID)
    assert iat.canonical_cid(canonical) == canonical


def test_classify_exposure():
    assert iat.classify_exposure(SILO_CID) == "hybrid"


def test_binding_manifest_rows():
    manifest = iat.binding_manifest(SILO_CID)
    assert "SmartSilo.fill kind=executor" in manifest
    assert "SmartSilo.heater kind=instance type=16668 id=0" in manifest


def test_parse_path():
    assert iat.parse_path("16663/0/2") == "/16663/0/2"
    with pytest.raises(Exception):
        iat.parse_path("/1/2/3/4/5")


def test_legality_check():
    instances = [(16663, 0), (16668, 0), (16664, 1)]
    assert iat.legality_check("execute", "/16663/0/2", SILO_CID, instances) is None
    violation = iat.legality_check("execute", "/16663/0", SILO_CID, instances)
    assert violation is not None and "wrong-construct" in violation
    violation = iat.legality_check("write", "/16663/0/0", SILO_CID, instances)
    assert violation is not None and "wrong-declared-ops" in violation


def test_coap_codec_frozen_vector():
    message = {
        "type": "CON",
        "code": (0, 1),
        "message_id": 0x1234,
        "token": b"\xab",
        "uri_path": "/16663/0/0",
    }
    encoded = iat.coap_encode(message)
    assert encoded == bytes(
        [0x41, 0x01, 0x12, 0x34, 0xAB, 0xB5, 0x31, 0x36, 0x36, 0x36, 0x33, 0x01, 0x30, 0x01, 0x30]
    )
    decoded = iat.coap_decode(encoded)
    assert decoded["type"] == "CON"
    assert decoded["code"] == (0, 1)
    assert decoded["message_id"] == 0x1234
    assert decoded["token"] == b"\xab"
    assert [v for _, v in decoded["options"]] == [b"16663", b"0", b"0"]


def test_plant_simulation():
    plant = iat.Plant()
    assert plant.command(1, "fill") == "ok"
    for _ in range(120):
        plant.step(0.1)
    silo = plant.silo(1)
    assert silo["high_sensor"] is True
    assert silo["in_valve"] is False  # auto-closed at the high threshold

    assert plant.command(1, "mixer_on") == "unsupported-device"
    assert plant.command(3, "mixer_on") == "ok"
    assert plant.command(4, "mixer_on") == "denied"

    assert plant.pipe_acquire("B1", 1, 4) == "granted"
    assert plant.pipe_acquire("B2", 2, 3) == "busy"
    plant.pipe_release("B1")

    events = {(component, event) for _, component, event, _ in plant.trace()}
    assert ("silo1", "in_valve") in events


def test_run_batches_end_to_end():
    result = iat.run_batches(
        [
            {"kind": "A", "basic_process_time": 2, "target_temp": 30, "mix_time": 3},
            {"kind": "B", "target_temp": 32, "mix_time": 4},
        ]
    )
    assert result["ok"], result["violations"]
    events = [(batch, event) for _, batch, event in result["trace"]]
    assert ("batchA", "done") in events
    assert ("batchB", "done") in events
    assert iat.check_trace_csv(result["csv"]) == []


def test_check_trace_rejects_forged_overlap():
    forged = (
        "time_s,batch_id,event\n"
        "0,A,pipe_acquired\n"
        "1,B,pipe_acquired\n"
        "2,A,pipe_released\n"
        "3,B,pipe_released\n"
    )
    violations = iat.check_trace_csv(forged)
    assert any("pipe overlap" in v for v in violations)


def test_bench_inproc():
    stats = iat.bench(op="execute", n=40, warmup=4)
    assert len(stats["samples"]) == 40
    assert len(stats["warmup"]) == 4
    assert stats["min_ms"] <= stats["avg_ms"] <= stats["max_ms"]
    assert stats["min_ms"] > 0


def test_plant_cid_parses():
    assert iat.classify_exposure(iat.plant_cid()) == "hybrid"
