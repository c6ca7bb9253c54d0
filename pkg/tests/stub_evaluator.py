#!/usr/bin/env python3
"""Minimal wire-protocol evaluator used by the host tests.

Modes (--mode):
  ok         well-behaved deterministic evaluator
  malformed  answers every request with invalid JSON
  wrong-id   answers with a different id
  error      answers ok=false with an error message
  slow       sleeps longer than any sane timeout before answering
  exit       exits immediately after the first request
"""

from __future__ import annotations

import argparse
import json
import sys
import time

LAYERS = 3
CALIB = 4
DIM = 5


def emit(obj) -> None:
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--mode", default="ok")
    mode = parser.parse_args().mode

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        req = json.loads(line)
        rid = req.get("id")

        if mode == "malformed":
            sys.stdout.write("not json at all\n")
            sys.stdout.flush()
            continue
        if mode == "wrong-id":
            emit({"id": 999999, "ok": True, "performance": 0.0})
            continue
        if mode == "error":
            emit({"id": rid, "ok": False, "error": "deliberate failure"})
            continue
        if mode == "slow":
            time.sleep(30)
            emit({"id": rid, "ok": True, "performance": 0.0})
            continue
        if mode == "exit":
            sys.exit(3)

        kind = req.get("type")
        if kind == "meta":
            emit(
                {
                    "id": rid,
                    "ok": True,
                    "meta": {
                        "layers": LAYERS,
                        "calib_size": CALIB,
                        "geometry": [
                            {
                                "frozen_params": 64,
                                "adapter_in_dims": [8],
                                "adapter_out_dims": [8],
                            }
                        ]
                        * LAYERS,
                    },
                }
            )
        elif kind == "evaluate":
            config = req.get("config", {})
            bits = config.get("bits", [])
            ranks = config.get("ranks", [])
            if len(bits) != LAYERS or len(ranks) != LAYERS:
                emit({"id": rid, "ok": False, "error": "bad config length"})
                continue
            score = sum(bits) / (8 * LAYERS) + sum(ranks) / (16 * LAYERS)
            score *= min(1.0, req.get("proxy_steps", 0) / 5.0)
            emit({"id": rid, "ok": True, "performance": score})
        elif kind == "distribution":
            idx = req.get("calib_index", 0)
            if not 0 <= idx < CALIB:
                emit({"id": rid, "ok": False, "error": "calib_index out of range"})
                continue
            weights = [1.0 + ((idx + i) % DIM) for i in range(DIM)]
            if req.get("layer") is not None:
                weights[req["layer"] % DIM] += 8.0 / max(req.get("bit", 2), 1)
            total = sum(weights)
            emit({"id": rid, "ok": True, "dist": [w / total for w in weights]})
        else:
            emit({"id": rid, "ok": False, "error": f"unknown type {kind!r}"})


if __name__ == "__main__":
    main()
