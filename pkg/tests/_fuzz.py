"""Shared fuzz-case generators for the file readers.

Each generator emits a mix of valid artifacts and corruptions (truncation,
byte flips, raw garbage, structural damage). The runner feeds them to the
readers and records anything that escapes as a non-ParseError exception.
"""

import struct

import numpy as np

from prsb import io as pio


def _rand_bytes(g, max_len=64):
    n = int(g.integers(0, max_len))
    return g.integers(0, 256, size=n, endpoint=False).astype(np.uint8).tobytes()


def idx_blob(g) -> bytes:
    ndim = int(g.integers(1, 4))
    dims = tuple(int(d) for d in g.integers(0, 5, size=ndim))
    count = 1
    for d in dims:
        count *= d
    payload = g.integers(0, 256, size=count).astype(np.uint8).tobytes()
    blob = bytes([0, 0, 0x08, ndim]) + struct.pack(f">{ndim}I", *dims) + payload

    mode = int(g.integers(0, 6))
    if mode == 0:
        return blob
    if mode == 1:  # truncate anywhere, including inside the header
        return blob[: int(g.integers(0, len(blob) + 1))]
    if mode == 2:  # flip a few bytes
        b = bytearray(blob)
        for _ in range(int(g.integers(1, 4))):
            if b:
                b[int(g.integers(0, len(b)))] = int(g.integers(0, 256))
        return bytes(b)
    if mode == 3:  # raw garbage
        return _rand_bytes(g)
    if mode == 4:  # trailing junk
        return blob + _rand_bytes(g, 8)
    # absurd dimension sizes with a tiny payload
    fake = struct.pack(f">{ndim}I", *(int(v) for v in g.integers(0, 2**32, size=ndim)))
    return bytes([0, 0, 0x08, ndim]) + fake + payload


_TOKENS = ["1.5", "0", "-3e2", "nan", "inf", "abc", "", "1..2", '"q"', "7_0", "0x1"]


def delimited_text(g) -> str:
    mode = int(g.integers(0, 5))
    if mode == 0:  # arbitrary text lines
        chars = np.array(list("abc,;\t\n\"'0123456789.-+e "))
        return "".join(g.choice(chars, size=int(g.integers(0, 120))))
    rows = int(g.integers(0, 5))
    cols = int(g.integers(0, 4))
    lines = [",".join(f"c{j}" for j in range(cols))]
    for _ in range(rows):
        width = cols if mode < 3 else int(g.integers(0, 5))  # mode 3+: ragged
        lines.append(",".join(str(t) for t in g.choice(_TOKENS, size=width)))
    text = "\n".join(lines)
    if mode == 2 and text:  # chop mid-line
        text = text[: int(g.integers(0, len(text)))]
    return text + ("\n" if g.random() < 0.5 else "")


def run_reader_fuzz(tmp_dir, n_cases: int, seed: int):
    """Feed generated cases to the readers; returns a list of crash reports."""
    g = np.random.default_rng(seed)
    idx_path = str(tmp_dir / "fuzz.idx")
    csv_path = str(tmp_dir / "fuzz.csv")
    crashes = []
    for i in range(n_cases):
        if g.random() < 0.5:
            path, mode = idx_path, "idx"
            with open(path, "wb") as fh:
                fh.write(idx_blob(g))
        else:
            path, mode = csv_path, "delimited"
            with open(path, "w", encoding="utf-8", errors="surrogateescape") as fh:
                fh.write(delimited_text(g))
        try:
            if mode == "idx":
                pio.read_idx(path)
            else:
                pio.read_delimited(path,
                                   has_header=bool(g.integers(0, 2)),
                                   target_column=int(g.integers(-3, 3)))
        except pio.ParseError as err:
            if not str(err).startswith(path):
                crashes.append(f"case {i} ({mode}): unlocated error {err!r}")
        except Exception as err:  # noqa: BLE001 - the whole point of the fuzz
            crashes.append(f"case {i} ({mode}): {type(err).__name__}: {err!r}")
    return crashes
