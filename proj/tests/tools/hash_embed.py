#!/usr/bin/env python3
"""Line-delimited JSON embedding provider for tests.

Reads {"words": [...]} per line and answers {"vectors": [[...]]}; each
vector is derived from the word's SHA-256 digest and L2-normalized.
"""
import hashlib
import json
import math
import sys

DIM = int(sys.argv[1]) if len(sys.argv) > 1 else 8


def embed(word):
    digest = hashlib.sha256(word.encode()).digest()
    raw = [digest[i % len(digest)] - 127.5 for i in range(DIM)]
    n = math.sqrt(sum(x * x for x in raw)) or 1.0
    return [x / n for x in raw]


for line in sys.stdin:
    req = json.loads(line)
    print(json.dumps({"vectors": [embed(w) for w in req["words"]]}), flush=True)
