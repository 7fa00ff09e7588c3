#!/usr/bin/env python3
"""Standalone decoder for .pott container files.

Reads the binary layout directly with struct.unpack, sharing no code with
the writer: magic b"POTT", version u32, record kind u32, then either a bare
tensor (rank u32, dims u32[rank], f64 little-endian payload) or a checkpoint
(tag string, JSON header, tensor count, tensors). Values print one per line
via repr(), which roundtrips f64 exactly.
"""

import struct
import sys


def take(buf, offset, n):
    if offset + n > len(buf):
        raise SystemExit(f"truncated: needed {offset + n - len(buf)} more bytes")
    return buf[offset:offset + n], offset + n


def read_u32(buf, offset):
    raw, offset = take(buf, offset, 4)
    return struct.unpack("<I", raw)[0], offset


def read_tensor(buf, offset):
    rank, offset = read_u32(buf, offset)
    dims = []
    for _ in range(rank):
        d, offset = read_u32(buf, offset)
        dims.append(d)
    count = 1
    for d in dims:
        count *= d
    raw, offset = take(buf, offset, 8 * count)
    values = struct.unpack(f"<{count}d", raw)
    return dims, values, offset


def read_str(buf, offset):
    n, offset = read_u32(buf, offset)
    raw, offset = take(buf, offset, n)
    return raw.decode("utf-8"), offset


def main(path):
    with open(path, "rb") as f:
        buf = f.read()
    magic, offset = take(buf, 0, 4)
    if magic != b"POTT":
        raise SystemExit(f"bad magic {magic!r}")
    version, offset = read_u32(buf, offset)
    if version != 1:
        raise SystemExit(f"unsupported version {version}")
    kind, offset = read_u32(buf, offset)

    if kind == 1:
        dims, values, offset = read_tensor(buf, offset)
        print("kind tensor")
        print("shape", *dims)
        for v in values:
            print(repr(v))
    elif kind == 2:
        tag, offset = read_str(buf, offset)
        meta, offset = read_str(buf, offset)
        count, offset = read_u32(buf, offset)
        print("kind checkpoint")
        print("tag", tag)
        print("meta", meta)
        print("tensors", count)
        for i in range(count):
            dims, values, offset = read_tensor(buf, offset)
            print(f"tensor {i} shape", *dims)
            for v in values:
                print(repr(v))
    else:
        raise SystemExit(f"unknown record kind {kind}")

    if offset != len(buf):
        raise SystemExit(f"{len(buf) - offset} trailing bytes")


if __name__ == "__main__":
    if len(sys.argv) != 2:
        raise SystemExit("usage: decode_pott.py <file.pott>")
    main(sys.argv[1])
