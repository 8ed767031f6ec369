import logging

import numpy as np
import pytest

from array_codebook import ArrayCodebook, BeamGrid, Codebook, Ula
from exceptions import ConfigurationError, InputError


def test_array_response_is_unit_norm():
    ula = Ula(16)
    a = ArrayCodebook.array_response(ula, 0.3)
    assert a.shape == (16,)
    assert np.linalg.norm(a) == pytest.approx(1.0)
    A = ArrayCodebook.array_response(ula, np.array([0.1, -0.4, 1.2]))
    assert A.shape == (16, 3)
    np.testing.assert_allclose(np.linalg.norm(A, axis=0), 1.0)


@pytest.mark.parametrize("m", [4, 32])
def test_dft_codebook_is_unitary(m):
    A = ArrayCodebook.dft_codebook(Ula(m)).matrix
    assert np.linalg.norm(A.conj().T @ A - np.eye(m)) < 1e-10


def test_dft_phase_bits():
    assert ArrayCodebook.dft_codebook(Ula(32)).phase_bits == 5
    assert ArrayCodebook.dft_codebook(Ula(6)).phase_bits is None


def test_beam_grid_spatial_frequencies():
    grid = BeamGrid.for_ula(Ula(4))
    np.testing.assert_allclose(grid.nu, [-3 / 8, -1 / 8, 1 / 8, 3 / 8])
    np.testing.assert_allclose(0.5 * np.sin(grid.angles), grid.nu)


def test_random_codebook_constant_modulus_quantized(rng):
    ula, bits = Ula(8), 3
    cb = ArrayCodebook.random_codebook(ula, 5, bits, rng)
    assert cb.matrix.shape == (8, 5)
    assert cb.kind == 'random_quantized'
    np.testing.assert_allclose(np.abs(cb.matrix), 1 / np.sqrt(8))
    levels = np.mod(np.angle(cb.matrix), 2 * np.pi) / (2 * np.pi / 2 ** bits)
    np.testing.assert_allclose(levels, np.round(levels), atol=1e-9)


def test_random_codebook_rejects_bad_sizes(rng):
    with pytest.raises(InputError):
        ArrayCodebook.random_codebook(Ula(8), 0, 3, rng)
    with pytest.raises(InputError):
        ArrayCodebook.random_codebook(Ula(8), 4, 0, rng)


def test_dominant_bins_partition_the_mmwave_grid():
    ula = Ula(32)
    sizes = [ArrayCodebook.dominant_bin_angles(ula, b, 4).size for b in range(4)]
    assert sizes == [8, 8, 8, 8]
    first = ArrayCodebook.dominant_bin_angles(ula, 0, 4)
    assert np.all(0.5 * np.sin(first) < -0.25)


def test_dominant_bin_out_of_range():
    with pytest.raises(InputError):
        ArrayCodebook.dominant_bin_angles(Ula(32), 4, 4)


def test_select_structured_picks_matching_codeword(rng):
    ula = Ula(8)
    target = ArrayCodebook.array_response(ula, 0.2)
    random = ArrayCodebook.random_codebook(ula, 6, 2, rng).matrix
    super_codebook = Codebook(np.column_stack([random[:, :3], target, random[:, 3:]]), 'random_quantized', 2)
    picked = ArrayCodebook.select_structured(super_codebook, target[:, None], 1)
    np.testing.assert_array_equal(picked, [3])


def test_select_structured_returns_sorted_indices(rng):
    ula = Ula(8)
    super_codebook = ArrayCodebook.random_codebook(ula, 20, 2, rng)
    deterministic = ArrayCodebook.array_response(ula, np.array([0.0, 0.1]))
    picked = ArrayCodebook.select_structured(super_codebook, deterministic, 5)
    assert len(picked) == 5
    assert np.all(np.diff(picked) > 0)
    with pytest.raises(InputError):
        ArrayCodebook.select_structured(super_codebook, deterministic, 21)


def test_structured_codebook_shape_and_determinism():
    ula = Ula(32)
    a = ArrayCodebook.structured_codebook(ula, 1, 4, 8, 5, np.random.default_rng(3))
    b = ArrayCodebook.structured_codebook(ula, 1, 4, 8, 5, np.random.default_rng(3))
    assert a.kind == 'structured'
    assert a.matrix.shape == (32, 8)
    np.testing.assert_array_equal(a.matrix, b.matrix)
    np.testing.assert_allclose(np.abs(a.matrix), 1 / np.sqrt(32))


def test_structured_codebook_beats_random_in_dominant_bin():
    ula = Ula(32)
    angles = ArrayCodebook.dominant_bin_angles(ula, 2, 4)
    D = ArrayCodebook.array_response(ula, angles)
    structured_gain, random_gain = [], []
    for seed in range(20):
        s = ArrayCodebook.structured_codebook(ula, 2, 4, 8, 5, np.random.default_rng(seed))
        r = ArrayCodebook.random_codebook(ula, 8, 5, np.random.default_rng(1000 + seed))
        structured_gain.append(np.linalg.norm(s.matrix.conj().T @ D))
        random_gain.append(np.linalg.norm(r.matrix.conj().T @ D))
    assert np.mean(structured_gain) > np.mean(random_gain)


def test_structured_codebook_falls_back_when_bin_is_empty(rng, caplog):
    with caplog.at_level(logging.WARNING, logger='array_codebook'):
        cb = ArrayCodebook.structured_codebook(Ula(2), 0, 8, 2, 2, rng)
    assert cb.kind == 'random_quantized'
    assert "unstructured random codebook" in caplog.text


def test_invalid_construction():
    with pytest.raises(ConfigurationError):
        Ula(0)
    with pytest.raises(ConfigurationError):
        Codebook(np.eye(2), 'bogus')


def test_codebook_to_dict():
    data = ArrayCodebook.dft_codebook(Ula(2)).to_dict()
    assert data['kind'] == 'dft'
    assert data['shape'] == [2, 2]
    assert len(data['entries'][0][0]) == 2


def test_structured_selection_is_repeatable(rng):
    ula = Ula(16)
    super_codebook = ArrayCodebook.random_codebook(ula, 64, 5, rng)
    deterministic = ArrayCodebook.array_response(ula, ArrayCodebook.dominant_bin_angles(ula, 1, 4))
    first = ArrayCodebook.select_structured(super_codebook, deterministic, 8)
    second = ArrayCodebook.select_structured(super_codebook, deterministic, 8)
    np.testing.assert_array_equal(first, second)


def test_grid_codebook_steers_at_the_given_angles():
    ula = Ula(16)
    grid = ArrayCodebook.grid_codebook(ula, [0.1, -0.4])
    assert grid.kind == 'deterministic_grid'
    assert grid.matrix.shape == (16, 2)
    np.testing.assert_allclose(grid.matrix[:, 1], ArrayCodebook.array_response(ula, -0.4))
    assert ArrayCodebook.grid_codebook(ula, 0.3).n_beams == 1


def test_select_structured_accepts_a_grid_codebook(rng):
    ula = Ula(8)
    super_codebook = ArrayCodebook.random_codebook(ula, 20, 2, rng)
    angles = np.array([0.0, 0.1])
    from_codebook = ArrayCodebook.select_structured(super_codebook, ArrayCodebook.grid_codebook(ula, angles), 5)
    from_matrix = ArrayCodebook.select_structured(super_codebook, ArrayCodebook.array_response(ula, angles), 5)
    np.testing.assert_array_equal(from_codebook, from_matrix)
