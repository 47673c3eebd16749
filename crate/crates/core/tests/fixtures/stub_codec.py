#!/usr/bin/env python3
"""Toy external codec for driver tests.

    stub_codec.py encode IN.y4m OUT.bin STEP
    stub_codec.py decode IN.bin OUT.y4m

Encoding quantizes every sample to multiples of STEP and deflates the
result; STEP 1 is lossless.
"""
import struct
import sys
import zlib


def encode(src, dst, step):
    step = int(step)
    with open(src, "rb") as f:
        data = f.read()
    header, _, body = data.partition(b"\n")
    out = bytearray()
    for i, chunk in enumerate(body.split(b"FRAME\n")):
        if i == 0:
            continue
        out += bytes(min(255, (v // step) * step + step // 2) for v in chunk)
    payload = zlib.compress(bytes(out), 9)
    with open(dst, "wb") as f:
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(payload)


def decode(src, dst):
    with open(src, "rb") as f:
        data = f.read()
    (n,) = struct.unpack("<I", data[:4])
    header = data[4 : 4 + n]
    samples = zlib.decompress(data[4 + n :])
    fields = {t[0]: t[1:] for t in header.decode().split()[1:]}
    w, h = int(fields["W"]), int(fields["H"])
    size = w * h * 3 // 2
    with open(dst, "wb") as f:
        f.write(header + b"\n")
        for k in range(0, len(samples), size):
            f.write(b"FRAME\n")
            f.write(samples[k : k + size])


if __name__ == "__main__":
    if sys.argv[1] == "encode":
        encode(*sys.argv[2:5])
    elif sys.argv[1] == "decode":
        decode(*sys.argv[2:4])
    else:
        sys.exit(2)
