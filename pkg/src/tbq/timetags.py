"""Plain-text time-tag files: `# timetag v1 seed=<u64>` then `channel<TAB>timestamp_ps`."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

HEADER = "# timetag v1 seed={seed}"
_HEADER_RE = re.compile(r"^# timetag v1 seed=(\d+)$")


def write_timetags(path, streams: dict[str, np.ndarray], seed: int) -> None:
    """Write all channels merged in time order (ties keep channel order)."""
    if not 0 <= int(seed) < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    names = list(streams)
    t = np.concatenate([np.asarray(streams[c], dtype=np.int64) for c in names]) if names else np.empty(0, np.int64)
    ch = np.concatenate([np.full(len(streams[c]), i) for i, c in enumerate(names)]) if names else np.empty(0, int)
    order = np.lexsort((ch, t))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(HEADER.format(seed=int(seed)) + "\n")
        for i in order:
            fh.write(f"{names[ch[i]]}\t{t[i]}\n")


def read_timetags(path) -> tuple[dict[str, np.ndarray], int]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    m = _HEADER_RE.match(lines[0])
    if not m:
        raise ValueError(f"{path}:1: bad header {lines[0]!r}")
    acc: dict[str, list[int]] = {}
    for n, line in enumerate(lines[1:], start=2):
        if not line or line.startswith("#"):
            continue
        try:
            ch, ts = line.split("\t")
            acc.setdefault(ch, []).append(int(ts))
        except ValueError:
            raise ValueError(f"{path}:{n}: expected 'channel<TAB>timestamp'") from None
    streams = {c: np.array(v, dtype=np.int64) for c, v in acc.items()}
    for c, v in streams.items():
        if v.size > 1 and np.any(np.diff(v) < 0):
            raise ValueError(f"{path}: channel {c} is not monotone")
    return streams, int(m.group(1))
