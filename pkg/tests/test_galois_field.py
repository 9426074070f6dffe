import numpy as np
import pytest

from storage_sim.galois_field import FIELD


def test_multiplication_reduces_by_the_primitive_polynomial():
    assert FIELD.mul(2, 128) == 29
    assert FIELD.mul(0, 77) == 0
    assert FIELD.mul(1, 200) == 200


def test_every_nonzero_element_has_an_inverse():
    for x in range(1, 256):
        assert FIELD.mul(x, FIELD.inv(x)) == 1
    with pytest.raises(ZeroDivisionError):
        FIELD.inv(0)


def test_multiplication_distributes_over_addition(rng):
    for x, y, z in rng.integers(0, 256, size=(200, 3)):
        x, y, z = int(x), int(y), int(z)
        assert FIELD.mul(x, FIELD.add(y, z)) == FIELD.add(FIELD.mul(x, y), FIELD.mul(x, z))
        if y:
            assert FIELD.mul(FIELD.div(x, y), y) == x


def test_scale_and_combine_match_scalar_arithmetic(rng):
    rows = [rng.integers(0, 256, size=64).astype(np.uint8) for _ in range(3)]
    coefficients = [0, 7, 142]
    combined = FIELD.combine(coefficients, rows)
    for j in range(64):
        expected = 0
        for c, row in zip(coefficients, rows):
            expected ^= FIELD.mul(c, int(row[j]))
        assert combined[j] == expected
    np.testing.assert_array_equal(FIELD.scale(1, rows[0]), rows[0])


def test_invert_matrix():
    matrix = [[1, 2, 3], [4, 5, 6], [7, 8, 10]]
    inverse = FIELD.invert_matrix(matrix)
    for i in range(3):
        for j in range(3):
            entry = 0
            for k in range(3):
                entry ^= FIELD.mul(matrix[i][k], inverse[k][j])
            assert entry == int(i == j)
    with pytest.raises(ValueError, match="singular"):
        FIELD.invert_matrix([[1, 1], [1, 1]])
