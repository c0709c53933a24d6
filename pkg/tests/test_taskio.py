import struct

import numpy as np
import pytest

from gfss.core import ClassPartition, FeatureMap
from gfss.errors import CorruptionError, FormatError
from gfss.inference import GfssTask
from gfss.taskgen import SyntheticConfig, gen_task
from gfss.taskio import (
    dumps_report,
    read_report,
    read_task,
    strip_timings,
    write_report,
    write_task,
)


def _minimal_task():
    # one pixel, d=2, one base class, one novel class
    part = ClassPartition(n_base=1, n_novel=1)
    feats = FeatureMap(np.array([[1.5, -2.0]], dtype=np.float32), 1, 1)
    mask = np.array([2], dtype=np.uint8)
    query = FeatureMap(np.array([[0.25, 4.0]], dtype=np.float32), 1, 1)
    task = GfssTask(
        support=((feats, mask),),
        query=query,
        partition=part,
        query_labels=np.array([2], dtype=np.uint8),
    )
    classifier = np.array([[1.0, 0.0], [0.0, 1.0]], dtype=np.float32)
    return task, classifier


def test_round_trip_minimal(tmp_path):
    task, clf = _minimal_task()
    path = tmp_path / "mini.task"
    write_task(task, clf, path)
    loaded, clf2, fg = read_task(path)
    assert fg is None
    np.testing.assert_array_equal(clf2, clf)
    np.testing.assert_array_equal(loaded.query.pixels, task.query.pixels)
    np.testing.assert_array_equal(loaded.support[0][1], task.support[0][1])
    np.testing.assert_array_equal(loaded.query_labels, task.query_labels)
    assert loaded.partition == task.partition


def test_round_trip_generated_with_fg_maps(tmp_path):
    cfg = SyntheticConfig(d=24, n_base=3, n_novel=2, grid=(8, 8), shots=2, seed=12)
    task, clf, _ = gen_task(cfg)
    fg = np.random.default_rng(0).random((2, 64)).astype(np.float32)
    path = tmp_path / "gen.task"
    write_task(task, clf, path, foreground_maps=fg)
    loaded, clf2, fg2 = read_task(path)
    np.testing.assert_array_equal(fg2, fg)
    np.testing.assert_array_equal(clf2, clf)
    for (f1, m1), (f2, m2) in zip(task.support, loaded.support):
        np.testing.assert_array_equal(f1.pixels, f2.pixels)
        np.testing.assert_array_equal(m1, m2)


def test_write_is_deterministic(tmp_path):
    task, clf = _minimal_task()
    p1, p2 = tmp_path / "a.task", tmp_path / "b.task"
    write_task(task, clf, p1)
    write_task(task, clf, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_golden_fixture_bytes(tmp_path):
    # hand-assembled byte-level expectation for the one-pixel task
    task, clf = _minimal_task()
    path = tmp_path / "golden.task"
    write_task(task, clf, path)

    want = bytearray()
    want += b"DIAM"
    want += struct.pack("<H", 1)
    want += struct.pack("<7I", 2, 1, 1, 1, 1, 1, 1)  # d nb nn h w shots flags
    clf_bytes = clf.astype("<f4").tobytes()
    want += struct.pack("<Q", len(clf_bytes)) + clf_bytes
    sup = task.support[0][0].pixels.astype("<f4").tobytes()
    want += struct.pack("<Q", len(sup)) + sup
    want += struct.pack("<Q", 1) + bytes([2])
    q = task.query.pixels.astype("<f4").tobytes()
    want += struct.pack("<Q", len(q)) + q
    want += struct.pack("<Q", 1) + bytes([2])
    assert path.read_bytes() == bytes(want)


def test_truncated_payload_names_section(tmp_path):
    task, clf = _minimal_task()
    path = tmp_path / "t.task"
    write_task(task, clf, path)
    blob = path.read_bytes()
    bad = tmp_path / "trunc.task"
    bad.write_bytes(blob[:-3])  # cut into the query labels section
    with pytest.raises(CorruptionError, match="query labels"):
        read_task(bad)


def test_bad_magic_and_version(tmp_path):
    task, clf = _minimal_task()
    path = tmp_path / "ok.task"
    write_task(task, clf, path)
    blob = bytearray(path.read_bytes())
    wrong_magic = tmp_path / "magic.task"
    wrong_magic.write_bytes(b"NOPE" + bytes(blob[4:]))
    with pytest.raises(FormatError):
        read_task(wrong_magic)
    wrong_version = tmp_path / "version.task"
    blob[4:6] = struct.pack("<H", 9)
    wrong_version.write_bytes(bytes(blob))
    with pytest.raises(FormatError):
        read_task(wrong_version)


def test_declared_length_mismatch(tmp_path):
    task, clf = _minimal_task()
    path = tmp_path / "ok.task"
    write_task(task, clf, path)
    blob = bytearray(path.read_bytes())
    # corrupt the declared length of the classifier section
    offset = 4 + 2 + 28
    blob[offset : offset + 8] = struct.pack("<Q", 999)
    bad = tmp_path / "len.task"
    bad.write_bytes(bytes(blob))
    with pytest.raises(CorruptionError, match="base classifier"):
        read_task(bad)


def test_trailing_bytes_ignored(tmp_path):
    task, clf = _minimal_task()
    path = tmp_path / "trail.task"
    write_task(task, clf, path)
    with open(path, "ab") as fh:
        fh.write(b"\x00" * 32)  # future extension data
    loaded, _, _ = read_task(path)
    np.testing.assert_array_equal(loaded.query.pixels, task.query.pixels)


def test_report_round_trip(tmp_path):
    report = {
        "kind": "gfss-infer-report",
        "seed": 7,
        "config": {"alpha": 100.0, "beta": 100.0},
        "tasks": [{"path": "x.task", "scores": {"base": 0.5}}],
        "timings": {"wall_total_s": 1.23},
    }
    path = tmp_path / "report.json"
    write_report(report, path)
    loaded = read_report(path)
    assert loaded == report
    # canonical writer: identical bytes when re-serialized
    write_report(loaded, tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()
    assert "timings" not in strip_timings(report)
    assert "timings" in report


def test_report_floats_survive_round_trip(tmp_path):
    values = [1.25e-3, 0.1 + 0.2, 1 / 3, 1e-300]
    path = tmp_path / "f.json"
    write_report({"values": values}, path)
    assert read_report(path)["values"] == values
