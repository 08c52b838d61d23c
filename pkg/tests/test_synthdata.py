import math

import numpy as np
import pytest

from hkrr.errors import CsvParseError, DegenerateDataError
from hkrr.objective import SampleSet
from hkrr.synthdata import (GenSpec, generate, generate_ds1, generate_ds2,
                            read_csv, sample_true_b, split, write_csv)


# ---------------------------------------------------------------------------
# ground-truth map
# ---------------------------------------------------------------------------

def test_true_b_scalar_case():
    b = sample_true_b(1, 1, seed=0)
    assert b.shape == (1, 1)
    assert 0.0 <= b[0, 0] <= 1.0


def test_true_b_spectral_constraint():
    rng = np.random.default_rng(0)
    for _ in range(100):
        d = int(rng.integers(1, 5))
        dim = int(rng.integers(d, 12))
        b = sample_true_b(d, dim, seed=int(rng.integers(0, 10_000)))
        assert np.linalg.norm(b, 2) <= 1 + 1e-12


def test_true_b_deterministic():
    assert np.array_equal(sample_true_b(2, 7, seed=42), sample_true_b(2, 7, seed=42))


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def ds1_signal(t, d_star):
    j = np.arange(1, d_star + 1)
    return np.sin((1.0 + j / d_star) * math.pi * t).sum(axis=1)


def ds2_signal(t, d_star):
    out = np.zeros(t.shape[0])
    for j in range(1, d_star + 1):
        w1 = ((j + 1 - 1) % d_star)  # 0-based column of index j+1, wrapped
        w2 = ((j + 2 - 1) % d_star)
        out += (np.sin(0.5 * t[:, j - 1] - j)
                + 0.5 * t[:, w1] * np.cos(0.4 * t[:, w2] - j + 1))
    return out


def test_ds1_formula_with_manual_map():
    b = np.zeros((1, 4))
    b[0, 0] = 1.0
    spec = GenSpec("ds1", 4, 1, 50, seed=1, noise_ratio=0.0, b_true=b)
    data, b_out = generate(spec)
    assert np.array_equal(b_out, b)
    assert np.allclose(data.y, np.sin(2.0 * math.pi * data.x[:, 0]), atol=1e-14)
    assert np.array_equal(data.y, data.z)
    # spot value: x1 = 0.25 gives sin(pi/2) = 1
    assert np.sin(2.0 * math.pi * 0.25) == pytest.approx(1.0)


def test_ds1_input_range_and_scales():
    spec = GenSpec("ds1", 5, 2, 200, seed=2)
    data, b = generate(spec)
    assert np.all(np.abs(data.x) <= 1.0)
    assert np.linalg.norm(b, 2) <= 1 + 1e-12


def test_ds2_input_range():
    spec = GenSpec("ds2", 5, 2, 200, seed=3)
    data, _ = generate(spec)
    assert np.all(np.abs(data.x) <= 10.0)


def test_ds2_scalar_reference_value():
    # d* = 1, t = 2: z = sin(0) + 0.5 * 2 * cos(0.8) = cos(0.8)
    t = np.array([[2.0]])
    assert ds2_signal(t, 1)[0] == pytest.approx(math.cos(0.8), rel=1e-15)


@pytest.mark.parametrize("d_star", [1, 2, 3])
def test_ds2_matches_independent_signal(d_star):
    spec = GenSpec("ds2", 6, d_star, 80, seed=4, noise_ratio=0.0)
    data, b = generate(spec)
    assert np.allclose(data.y, ds2_signal(data.x @ b.T, d_star), atol=1e-12)


@pytest.mark.parametrize("d_star", [1, 3])
def test_ds1_matches_independent_signal(d_star):
    spec = GenSpec("ds1", 6, d_star, 80, seed=5, noise_ratio=0.0)
    data, b = generate(spec)
    assert np.allclose(data.y, ds1_signal(data.x @ b.T, d_star), atol=1e-12)


@pytest.mark.parametrize("dataset", ["ds1", "ds2"])
def test_generators_bitwise_deterministic(dataset):
    spec = GenSpec(dataset, 7, 2, 64, seed=123)
    a, b_a = generate(spec)
    b, b_b = generate(spec)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    assert np.array_equal(a.z, b.z) and np.array_equal(b_a, b_b)


@pytest.mark.parametrize("dataset", ["ds1", "ds2"])
def test_signal_depends_only_on_mapped_inputs(dataset):
    # perturbing inputs inside the null space of the map leaves z unchanged
    spec = GenSpec(dataset, 6, 2, 40, seed=6, noise_ratio=0.0)
    data, b = generate(spec)
    signal = ds1_signal if dataset == "ds1" else ds2_signal
    null = np.linalg.svd(b)[2][2:].T  # basis of ker(B)
    shift = null @ np.ones(null.shape[1])
    x_shifted = data.x + shift[None, :]
    assert np.allclose(x_shifted @ b.T, data.x @ b.T, atol=1e-12)
    assert np.allclose(signal(x_shifted @ b.T, 2), data.z, atol=1e-10)


def test_noise_variance_ratio():
    spec = GenSpec("ds1", 5, 2, 100_000, seed=7, noise_ratio=0.01)
    data, _ = generate(spec)
    ratio = np.var(data.y - data.z) / np.var(data.z)
    assert 0.008 <= ratio <= 0.012


def test_noise_on_constant_signal_rejected():
    b = np.zeros((1, 3))  # maps everything to 0, so the signal is constant
    spec = GenSpec("ds1", 3, 1, 20, seed=8, noise_ratio=0.01, b_true=b)
    with pytest.raises(DegenerateDataError):
        generate(spec)


def test_genspec_validation():
    with pytest.raises(ValueError):
        GenSpec("ds3", 4, 1, 10, seed=0)
    with pytest.raises(ValueError):
        GenSpec("ds1", 4, 0, 10, seed=0)
    with pytest.raises(ValueError):
        GenSpec("ds1", 4, 5, 10, seed=0)
    with pytest.raises(ValueError):
        GenSpec("ds1", 4, 1, 10, seed=0, noise_ratio=-0.1)
    with pytest.raises(ValueError):
        GenSpec("ds1", 4, 2, 10, seed=0, b_true=np.zeros((1, 4)))


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

def test_split_rejects_degenerate_fractions():
    data = SampleSet(np.random.default_rng(9).normal(size=(8, 2)), np.zeros(8))
    with pytest.raises(ValueError):
        split(data, (1.0, 0.0, 0.0), seed=0)
    with pytest.raises(ValueError):
        split(data, (0.5, 0.3, 0.3), seed=0)


def test_split_exact_sizes_with_remainder_to_train():
    data = SampleSet(np.arange(16.0).reshape(8, 2), np.arange(8.0))
    train, val, test = split(data, (0.5, 0.25, 0.25), seed=1)
    assert (train.m, val.m, test.m) == (4, 2, 2)


def test_split_union_is_input_multiset():
    rng = np.random.default_rng(10)
    data = SampleSet(rng.normal(size=(23, 3)), rng.normal(size=23))
    train, val, test = split(data, (0.6, 0.2, 0.2), seed=2)
    rows = np.vstack([train.x, val.x, test.x])
    assert np.array_equal(np.sort(rows, axis=0), np.sort(data.x, axis=0))
    ys = np.concatenate([train.y, val.y, test.y])
    assert np.array_equal(np.sort(ys), np.sort(data.y))


def test_split_deterministic():
    rng = np.random.default_rng(11)
    data = SampleSet(rng.normal(size=(20, 2)), rng.normal(size=20))
    a = split(data, (0.5, 0.25, 0.25), seed=3)
    b = split(data, (0.5, 0.25, 0.25), seed=3)
    assert np.array_equal(a[0].x, b[0].x)


def test_split_carries_noiseless_targets():
    spec = GenSpec("ds1", 4, 1, 30, seed=12)
    data, _ = generate(spec)
    train, _, _ = split(data, (0.5, 0.25, 0.25), seed=0)
    assert train.z is not None and train.z.shape == (16,)


# ---------------------------------------------------------------------------
# CSV persistence
# ---------------------------------------------------------------------------

def test_csv_round_trip_bitwise(tmp_path):
    spec = GenSpec("ds2", 4, 2, 25, seed=13)
    data, _ = generate(spec)
    path = tmp_path / "data.csv"
    write_csv(data, path)
    back = read_csv(path)
    assert np.array_equal(back.x, data.x)
    assert np.array_equal(back.y, data.y)
    assert np.array_equal(back.z, data.z)


def test_csv_round_trip_without_z(tmp_path):
    rng = np.random.default_rng(14)
    data = SampleSet(rng.normal(size=(7, 3)), rng.normal(size=7))
    path = tmp_path / "data.csv"
    write_csv(data, path)
    back = read_csv(path)
    assert back.z is None and np.array_equal(back.x, data.x)


def test_csv_handwritten_file(tmp_path):
    path = tmp_path / "hand.csv"
    path.write_text("x_1,x_2,y\n0.5,1.5,2.0\n-1.0,0.0,3.0\n2.0,2.0,4.0\n")
    data = read_csv(path)
    assert (data.m, data.dim) == (3, 2)
    assert data.y.tolist() == [2.0, 3.0, 4.0]


def test_csv_missing_y_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x_1,x_2\n0.5,1.5\n")
    with pytest.raises(CsvParseError):
        read_csv(path)


def test_csv_malformed_row_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x_1,y\n0.5,1.0\n0.7\n")
    with pytest.raises(CsvParseError) as err:
        read_csv(path)
    assert err.value.line_no == 3


def test_csv_non_numeric_field(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x_1,y\nabc,1.0\n")
    with pytest.raises(CsvParseError) as err:
        read_csv(path)
    assert err.value.line_no == 2


def test_ds2_noise_variance_ratio():
    spec = GenSpec("ds2", 5, 2, 100_000, seed=21, noise_ratio=0.01)
    data, _ = generate(spec)
    ratio = np.var(data.y - data.z) / np.var(data.z)
    assert 0.008 <= ratio <= 0.012
