#!/usr/bin/env python3
"""Regenerates tests/data/uper_oracle.json with an independent UPER compiler.

Requires `pip install asn1tools`. Values are drawn with a fixed seed so the
corpus is reproducible; the Rust codec must match every encoding byte for byte.
"""
import hashlib
import json
import os
import random

import asn1tools

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "..", "data")
SCHEMA = asn1tools.compile_files(os.path.join(DATA, "v2x_subset.asn"), "uper")

ROLES = ["vehicle", "pedestrian", "motorcycle", "emergency"]
PHASES = [
    "stopAndRemain",
    "permissiveMovementAllowed",
    "protectedMovementAllowed",
    "permissiveClearance",
    "protectedClearance",
    "dark",
]
LANE_TYPES = ["vehicle", "crosswalk"]


def edge(rng, lo, hi):
    r = rng.random()
    if r < 0.1:
        return lo
    if r < 0.2:
        return hi
    return rng.randint(lo, hi)


def bsm(rng):
    return {
        "msgCnt": edge(rng, 0, 127),
        "id": bytes(rng.randrange(256) for _ in range(4)),
        "secMark": edge(rng, 0, 65535),
        "lat": edge(rng, -900000000, 900000001),
        "long": edge(rng, -1799999999, 1800000001),
        "elev": edge(rng, -4096, 61439),
        "speed": edge(rng, 0, 8191),
        "heading": edge(rng, 0, 28800),
        "role": rng.choice(ROLES),
    }


def spat(rng, max_moves=12):
    groups = rng.sample(range(1, 256), rng.randint(1, max_moves))
    return {
        "intersectionId": edge(rng, 0, 65535),
        "revision": edge(rng, 0, 127),
        "movements": [
            {"signalGroup": g, "eventState": rng.choice(PHASES), "minEndTime": edge(rng, 0, 36001)}
            for g in groups
        ],
    }


def map_data(rng, max_lanes=10, max_nodes=8):
    ids = rng.sample(range(0, 256), rng.randint(1, max_lanes))
    return {
        "intersectionId": edge(rng, 0, 65535),
        "refPoint": {
            "lat": edge(rng, -900000000, 900000001),
            "long": edge(rng, -1799999999, 1800000001),
            "elevation": edge(rng, -4096, 61439),
        },
        "laneWidth": edge(rng, 0, 32767),
        "lanes": [
            {
                "laneId": i,
                "laneType": rng.choice(LANE_TYPES),
                "nodes": [
                    {"x": edge(rng, -32768, 32767), "y": edge(rng, -32768, 32767)}
                    for _ in range(rng.randint(2, max_nodes))
                ],
            }
            for i in ids
        ],
    }


def probe(rng):
    v = {"b": rng.randint(0, 65535)}
    if rng.random() < 0.5:
        v["a"] = rng.randint(0, 15)
    if rng.random() < 0.5:
        v["c"] = bytes(rng.randrange(256) for _ in range(2))
    if rng.random() < 0.5:
        v["d"] = rng.choice(["x", "y", "z"])
    return v


def jsonable(v):
    if isinstance(v, bytes):
        return v.hex()
    if isinstance(v, dict):
        return {k: jsonable(x) for k, x in v.items()}
    if isinstance(v, list):
        return [jsonable(x) for x in v]
    return v


def main():
    rng = random.Random(0x2735)
    cases = []

    def add(type_name, value):
        cases.append(
            {"type": type_name, "value": jsonable(value), "uper": SCHEMA.encode(type_name, value).hex()}
        )

    def add_frame(msg_id, inner_type, value):
        inner = SCHEMA.encode(inner_type, value)
        outer = SCHEMA.encode("MessageFrame", {"messageId": msg_id, "value": inner})
        cases.append(
            {"type": "MessageFrame", "messageId": msg_id, "body_type": inner_type,
             "value": jsonable(value), "uper": outer.hex()}
        )

    for _ in range(60):
        add_frame(20, "BSMcoreData", bsm(rng))
    for _ in range(40):
        add_frame(19, "SPAT", spat(rng))
    for _ in range(40):
        add_frame(18, "MapData", map_data(rng))
    for _ in range(20):
        add("BSMcoreData", bsm(rng))
    for _ in range(20):
        add("SPAT", spat(rng))
    for _ in range(20):
        add("MapData", map_data(rng))
    for _ in range(30):
        add("OptionalProbe", probe(rng))
    for n in [0, 1, 127, 128, 16383, 16384, 16385, 32768, 49152, 65535, 65536, 65537, 81920, 150000]:
        # Pattern bytes (i * 31 + 7) mod 256; large encodings are pinned by digest.
        value = bytes((i * 31 + 7) % 256 for i in range(n))
        enc = SCHEMA.encode("OpaqueOctets", value)
        cases.append({"type": "OpaqueOctets", "len": n, "head": enc[:8].hex(),
                      "sha256": hashlib.sha256(enc).hexdigest(), "uper_len": len(enc)})
    # Bodies past 16383 octets force the fragmented length determinant.
    add_frame(18, "MapData", map_data(rng, max_lanes=255, max_nodes=63) | {
        "lanes": [
            {"laneId": i, "laneType": "vehicle",
             "nodes": [{"x": rng.randint(-32768, 32767), "y": rng.randint(-32768, 32767)} for _ in range(63)]}
            for i in range(90)
        ]
    })

    with open(os.path.join(DATA, "uper_oracle.json"), "w") as f:
        json.dump({"generator": "asn1tools " + asn1tools.__version__, "cases": cases}, f, indent=0)
        f.write("\n")
    print(len(cases), "cases")


if __name__ == "__main__":
    main()
