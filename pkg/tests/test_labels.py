import numpy as np
import pytest

from conftest import random_prob_rows
from gfss.core import ClassPartition
from gfss.errors import LabelError, ShapeError
from gfss.labels import argmax_decode, encode_labels, project_new2old, project_support

import oracles

PART = ClassPartition(n_base=2, n_novel=1)


def test_encode_background_and_first_novel():
    got = encode_labels(np.array([0]), PART)
    np.testing.assert_array_equal(got.rows, [[1, 0, 0, 0]])
    got = encode_labels(np.array([PART.novel_start]), PART)
    np.testing.assert_array_equal(got.rows, [[0, 0, 0, 1]])


def test_encode_with_ignore_sentinel():
    got = encode_labels(np.array([0, 255, 2]), PART)
    np.testing.assert_array_equal(got.rows, [[1, 0, 0, 0], [0, 0, 0, 0], [0, 0, 1, 0]])
    assert got.ignored == 1
    assert got.valid_count == 2


def test_encode_out_of_range():
    with pytest.raises(LabelError):
        encode_labels(np.array([4]), PART)


def test_project_support_frozen_row():
    row = np.array([[0.1, 0.3, 0.2, 0.4]])
    np.testing.assert_allclose(project_support(row, PART), [[0.6, 0, 0, 0.4]], atol=1e-12)


def test_project_support_zero_base_mass():
    row = np.array([[0.0, 0.0, 0.0, 1.0]])
    np.testing.assert_allclose(project_support(row, PART), [[0, 0, 0, 1.0]], atol=1e-12)


def test_project_support_random_vs_index_sum_oracle(rng):
    p = random_prob_rows(rng, 40, 4)
    got = project_support(p, PART)
    want = [oracles.project_support(row, PART.n_base) for row in p]
    np.testing.assert_allclose(got, want, atol=1e-12)
    np.testing.assert_allclose(got.sum(axis=1), 1.0, atol=1e-9)


def test_project_new2old_frozen_row():
    row = np.array([[0.1, 0.3, 0.2, 0.4]])
    np.testing.assert_allclose(project_new2old(row, PART), [[0.5, 0.3, 0.2]], atol=1e-12)


def test_project_new2old_zero_novel_identity():
    row = np.array([[0.4, 0.35, 0.25, 0.0]])
    np.testing.assert_allclose(project_new2old(row, PART), [[0.4, 0.35, 0.25]], atol=1e-12)


def test_project_new2old_mass_conservation(rng):
    p = random_prob_rows(rng, 1000, 4)
    out = project_new2old(p, PART)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(out[:, 1:], p[:, 1:3], atol=1e-12)


def test_project_new2old_novel_permutation_insensitive(rng):
    part = ClassPartition(n_base=2, n_novel=3)
    p = random_prob_rows(rng, 25, part.n_classes)
    shuffled = p.copy()
    shuffled[:, part.novel_start :] = p[:, [5, 3, 4]]
    np.testing.assert_allclose(
        project_new2old(p, part), project_new2old(shuffled, part), atol=1e-12
    )


def test_projection_shape_errors():
    with pytest.raises(ShapeError):
        project_support(np.zeros((2, 3)), PART)
    with pytest.raises(ShapeError):
        project_new2old(np.zeros((2, 5)), PART)


def test_argmax_decode_rules():
    assert argmax_decode(np.array([[0.2, 0.5, 0.3]]))[0] == 1
    assert argmax_decode(np.array([[0.25, 0.25, 0.25, 0.25]]))[0] == 0  # tie -> lowest
    one_hot = np.eye(4)[[2, 0, 3]]
    np.testing.assert_array_equal(argmax_decode(one_hot), [2, 0, 3])


def test_encode_is_left_inverse_of_decode(rng):
    part = ClassPartition(n_base=3, n_novel=2)
    mask = rng.integers(0, part.n_classes, size=30)
    one_hot = encode_labels(mask, part)
    np.testing.assert_array_equal(argmax_decode(one_hot.rows), mask)
