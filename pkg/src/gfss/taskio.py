"""Binary task interchange format and the structured run report.

Task file layout (normative, little-endian throughout)::

    magic   4 bytes   b"DIAM"
    version u16       currently 1
    header  7 x u32   d, n_base, n_novel, height, width, shots, flags
    sections, each prefixed by a u64 byte length, in this order:
        base classifier   f32  (1 + n_base, d)
        support features  f32  (shots, height * width, d)
        support masks     u8   (shots, height * width)
        query features    f32  (height * width, d)
        query labels      u8   (height * width,)        if flags & 1
        foreground maps   f32  (n_novel, height * width) if flags & 2

Bytes after the declared sections are ignored, so readers tolerate
future additions. Floats are f32 on disk; in-memory math accumulates in
float64.

Run reports are canonical JSON (sorted keys, two-space indent, trailing
newline) so they diff cleanly and round-trip losslessly through
``read_report``.
"""

import json
import struct

import numpy as np

from .core import ClassPartition, FeatureMap
from .errors import CorruptionError, FormatError, TaskError
from .inference import GfssTask

MAGIC = b"DIAM"
VERSION = 1
FLAG_QUERY_LABELS = 1
FLAG_FOREGROUND_MAPS = 2
_HEADER = struct.Struct("<7I")


def write_task(task: GfssTask, classifier, path, foreground_maps=None):
    """Serialize one episode; identical inputs produce identical bytes."""
    part = task.partition
    if part.n_classes > 255:
        raise TaskError("more than 255 classes cannot be stored in u8 masks")
    w = np.ascontiguousarray(classifier, dtype="<f4")
    if w.shape != (1 + part.n_base, task.query.dim):
        raise TaskError(
            f"classifier shape {w.shape} does not match "
            f"({1 + part.n_base}, {task.query.dim})"
        )
    h, wd = task.query.height, task.query.width
    flags = 0
    if task.query_labels is not None:
        flags |= FLAG_QUERY_LABELS
    if foreground_maps is not None:
        flags |= FLAG_FOREGROUND_MAPS

    def section(arr):
        raw = arr.tobytes()
        return struct.pack("<Q", len(raw)) + raw

    support_feats = np.stack([f.pixels for f, _ in task.support]).astype("<f4")
    support_masks = np.stack(
        [np.asarray(m, dtype=np.uint8).ravel() for _, m in task.support]
    )
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<H", VERSION)
    blob += _HEADER.pack(
        task.query.dim, part.n_base, part.n_novel, h, wd, len(task.support), flags
    )
    blob += section(w)
    blob += section(np.ascontiguousarray(support_feats, dtype="<f4"))
    blob += section(np.ascontiguousarray(support_masks))
    blob += section(np.ascontiguousarray(task.query.pixels, dtype="<f4"))
    if flags & FLAG_QUERY_LABELS:
        blob += section(np.asarray(task.query_labels, dtype=np.uint8).ravel())
    if flags & FLAG_FOREGROUND_MAPS:
        maps = np.ascontiguousarray(foreground_maps, dtype="<f4")
        if maps.shape != (part.n_novel, h * wd):
            raise TaskError(
                f"foreground maps shape {maps.shape} != ({part.n_novel}, {h * wd})"
            )
        blob += section(maps)
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


class _Cursor:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise CorruptionError(f"file truncated inside {what}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def section(self, dtype, shape, name):
        (length,) = struct.unpack("<Q", self.take(8, f"{name} length"))
        expected = int(np.prod(shape)) * np.dtype(dtype).itemsize
        if length != expected:
            raise CorruptionError(
                f"section {name}: declared {length} bytes, expected {expected}"
            )
        raw = self.take(length, name)
        return np.frombuffer(raw, dtype=dtype).reshape(shape)


def read_task(path):
    """Load and fully validate a task file.

    Returns ``(task, classifier, foreground_maps)`` where the last entry
    is None when the file carries no foreground-map section.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    cur = _Cursor(data)
    if cur.take(4, "magic") != MAGIC:
        raise FormatError(f"{path}: bad magic, not a task file")
    (version,) = struct.unpack("<H", cur.take(2, "version"))
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    d, n_base, n_novel, h, w, shots, flags = _HEADER.unpack(cur.take(_HEADER.size, "header"))
    if min(d, n_base, n_novel, h, w, shots) < 1:
        raise CorruptionError(f"{path}: non-positive header field")
    if 1 + n_base + n_novel > 255:
        raise CorruptionError(f"{path}: class count exceeds u8 mask range")
    n = h * w

    classifier = cur.section("<f4", (1 + n_base, d), "base classifier").copy()
    support_feats = cur.section("<f4", (shots, n, d), "support features").copy()
    support_masks = cur.section(np.uint8, (shots, n), "support masks").copy()
    query_feats = cur.section("<f4", (n, d), "query features").copy()
    query_labels = None
    if flags & FLAG_QUERY_LABELS:
        query_labels = cur.section(np.uint8, (n,), "query labels").copy()
    fg_maps = None
    if flags & FLAG_FOREGROUND_MAPS:
        fg_maps = cur.section("<f4", (n_novel, n), "foreground maps").copy()
    # anything past the declared sections is a future extension: ignore it

    part = ClassPartition(n_base=n_base, n_novel=n_novel)
    support = tuple(
        (FeatureMap(support_feats[i], h, w), support_masks[i]) for i in range(shots)
    )
    task = GfssTask(
        support=support,
        query=FeatureMap(query_feats, h, w),
        partition=part,
        query_labels=query_labels,
    )
    return task, classifier, fg_maps


# ---------------------------------------------------------------------------
# run reports
# ---------------------------------------------------------------------------

def dumps_report(report):
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def write_report(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_report(report))


def read_report(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def strip_timings(report):
    """Copy of a report without its timing fields, for byte comparisons."""
    out = dict(report)
    out.pop("timings", None)
    return out
