import struct

import numpy as np
import pytest

from isal.data import build_dataset, gen_blobs, gen_two_moons, load_csv, load_idx, write_csv
from isal.exceptions import ContractViolation


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_csv_basic(tmp_path):
    p = write(tmp_path / "a.csv", "a,b,label\n1,2,0\n3.5,-4,1\n0,0,0\n")
    d = load_csv(p, "label")
    assert (len(d), d.feature_dim, d.num_classes) == (3, 2, 2)
    np.testing.assert_array_equal(d.X, [[1, 2], [3.5, -4], [0, 0]])


def test_csv_first_occurrence_mapping(tmp_path):
    p = write(tmp_path / "a.csv", "x,animal\n1,cat\n2,dog\n3,cat\n")
    d = load_csv(p, "animal")
    assert d.num_classes == 2
    np.testing.assert_array_equal(d.y, [0, 1, 0])
    assert d.label_names == ("cat", "dog")


def test_csv_round_trip(tmp_path):
    d = gen_blobs(3, 4, spread=0.7, seed=2)
    write_csv(d, tmp_path / "b.csv")
    assert load_csv(tmp_path / "b.csv", "label") == d


@pytest.mark.parametrize("text,needle", [
    ("a,label\n1,0\n2\n", "row 3"),
    ("a,label\n1,0\nx,1\n", "row 3"),
])
def test_csv_errors_name_the_row(tmp_path, text, needle):
    with pytest.raises(ContractViolation, match=needle):
        load_csv(write(tmp_path / "c.csv", text), "label")


def test_csv_unknown_label_column(tmp_path):
    with pytest.raises(ContractViolation, match="label column"):
        load_csv(write(tmp_path / "c.csv", "a,b\n1,2\n"), "label")


def idx_files(tmp_path, pixels, labels, magic=0x803, n=None, rows=2, cols=2, extra=b""):
    n = len(labels) if n is None else n
    img = struct.pack(">IIII", magic, n, rows, cols) + bytes(pixels) + extra
    lab = struct.pack(">II", 0x801, len(labels)) + bytes(labels)
    (tmp_path / "img").write_bytes(img)
    (tmp_path / "lab").write_bytes(lab)
    return tmp_path / "img", tmp_path / "lab"


def test_idx_scaling(tmp_path):
    d = load_idx(*idx_files(tmp_path, [0, 255, 255, 0, 0, 0, 255, 255], [3, 1]))
    assert d.X.shape == (2, 4)
    assert set(d.X.ravel()) == {0.0, 1.0}
    np.testing.assert_array_equal(d.y, [3, 1])


def test_idx_bad_magic(tmp_path):
    with pytest.raises(ContractViolation, match="magic"):
        load_idx(*idx_files(tmp_path, [0] * 8, [0, 1], magic=0x804))


def test_idx_truncated(tmp_path):
    with pytest.raises(ContractViolation, match="offset 23"):
        load_idx(*idx_files(tmp_path, [0] * 7, [0, 1]))


def test_idx_count_mismatch(tmp_path):
    with pytest.raises(ContractViolation, match="count mismatch"):
        load_idx(*idx_files(tmp_path, [0] * 12, [0, 1], n=3))


def test_blobs():
    d = gen_blobs(3, 5, centers=[[0, 0], [1, 1], [2, -2]], spread=0.0, seed=1)
    np.testing.assert_array_equal(d.X, np.repeat([[0, 0], [1, 1], [2, -2]], 5, axis=0))
    np.testing.assert_array_equal(np.bincount(d.y), [5, 5, 5])
    assert gen_blobs(3, 5, seed=4) == gen_blobs(3, 5, seed=4)
    assert gen_blobs(3, 5, seed=4) != gen_blobs(3, 5, seed=5)


def test_two_moons():
    d = gen_two_moons(101, noise=0.0)
    upper, lower = d.X[d.y == 0], d.X[d.y == 1] - [1.0, 0.5]
    np.testing.assert_allclose(np.hypot(*upper.T), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.hypot(*lower.T), 1.0, atol=1e-12)
    assert np.bincount(d.y).tolist() == [50, 51]
    assert gen_two_moons(50, 0.2, seed=3) == gen_two_moons(50, 0.2, seed=3)


def test_dataset_is_immutable():
    d = gen_blobs(2, 3)
    with pytest.raises(ValueError):
        d.X[0, 0] = 1.0


def test_build_dataset():
    assert build_dataset({"kind": "two_moons", "n": 20, "seed": 1}) == gen_two_moons(20, seed=1)
    with pytest.raises(ContractViolation, match="unknown keys"):
        build_dataset({"kind": "blobs", "num_classes": 2, "per_class": 3, "radius": 1})
    with pytest.raises(ContractViolation):
        build_dataset({"kind": "cifar"})
