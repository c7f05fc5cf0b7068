"""Freeze reference vectors for the offline hashing embedder.

Independent re-implementation: sha256(seed_le8 || instruction || 0x00 || token),
bucket = first 8 bytes LE mod 64, sign from the low bit of byte 8.
"""
import hashlib
import json
import re
import struct
import sys

import numpy as np

DIM = 64
SEED = 42
INSTRUCTIONS = [
    "Represent the keyphrase and definition of a scientific problem for clustering and visualizing scientific problems",
    "Represent the Artificial Intelligence method paragraph for clustering and visualizing Artificial Intelligence methods",
]
BODIES = [
    "Protein Structure Prediction, Predicting the 3D structure of proteins from sequence",
    "Graph Neural Networks, Neural networks operating on graph-structured data",
    "climate modeling climate modeling",
    "a",
    "Galaxy Morphology Classification; Sorting galaxies by shape (Hubble 1926)",
]


def tokenize(text):
    return [t.lower() for t in re.split(r"[^0-9A-Za-z]+", text) if t]


def embed(instruction, body):
    toks = tokenize(body) or [body.strip()]
    acc = np.zeros(DIM, dtype=np.float64)
    for t in toks:
        d = hashlib.sha256(struct.pack("<Q", SEED) + instruction.encode() + b"\x00" + t.encode()).digest()
        idx = struct.unpack("<Q", d[:8])[0] % DIM
        acc[idx] += -1.0 if d[8] & 1 else 1.0
    norm = np.sqrt(np.sum(acc * acc))
    return (acc / norm).astype(np.float32)


def main(out):
    cases = []
    for inst in INSTRUCTIONS:
        for body in BODIES:
            v = embed(inst, body)
            cases.append({"instruction": inst, "body": body, "bits": [int(x) for x in v.view(np.uint32)]})
    with open(out, "w") as f:
        json.dump({"seed": SEED, "dim": DIM, "cases": cases}, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1])
