import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from robusttree.data import AttackModel, DataError, Dataset, ScalingInfo, load_csv, scale_features


def write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_three_rows(tmp_path):
    raw = load_csv(write(tmp_path, "f1,label\n0.5,1\n2,0\n-1,1\n"))
    assert raw.matrix.shape == (3, 1)
    assert raw.matrix[:, 0].tolist() == [0.5, 2.0, -1.0]
    assert raw.labels.tolist() == [1, 0, 1]
    assert raw.feature_names == ("f1",)


def test_header_only_gives_empty_dataset(tmp_path):
    raw = load_csv(write(tmp_path, "a,b,label\n"))
    assert raw.matrix.shape == (0, 2)
    data, _ = scale_features(raw.matrix, raw.labels)
    assert data.n == 0 and data.p == 2


def test_bad_label_names_row(tmp_path):
    with pytest.raises(DataError, match="row 3"):
        load_csv(write(tmp_path, "f,label\n1,0\n2,2\n"))


def test_non_numeric_cell_names_row_and_column(tmp_path):
    with pytest.raises(DataError, match=r"row 2, column 2"):
        load_csv(write(tmp_path, "f,g,label\n1,x,0\n"))


def test_ragged_row(tmp_path):
    with pytest.raises(DataError, match="row 3 has 2 columns"):
        load_csv(write(tmp_path, "f,g,label\n1,2,0\n1,0\n"))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "nope.csv")


def test_scaling_maps_to_unit_interval():
    data, info = scale_features(np.array([[1.0, 5.0], [3.0, 5.0], [2.0, 5.0]]), np.array([0, 1, 0]))
    assert data.features[:, 0].tolist() == [0.0, 1.0, 0.5]
    assert data.features[:, 1].tolist() == [0.5, 0.5, 0.5]
    assert info.degenerate.tolist() == [False, True]


def test_scaling_rejects_nan():
    with pytest.raises(DataError):
        scale_features(np.array([[np.nan]]))


@settings(max_examples=100, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 8), st.integers(1, 4)),
              elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_scaling_round_trip(raw):
    data, info = scale_features(raw)
    assert data.features.min() >= 0.0 and data.features.max() <= 1.0
    back = info.inverse_transform(data.features)
    assert np.allclose(back, raw, rtol=1e-9, atol=1e-9 * (np.abs(raw).max() + 1))
    again = ScalingInfo.from_dict(info.to_dict())
    assert np.array_equal(again.transform(raw), data.features)


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.array([[1.5]]), np.array([0]))
    with pytest.raises(DataError):
        Dataset(np.array([[0.5]]), np.array([3]))
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 0)), np.array([0, 1]))
    d = Dataset(np.array([[0.1], [0.2], [0.3]]), np.array([1, 0, 1]))
    assert d.majority_label() == 1
    assert d.majority_fraction() == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        d.features[0, 0] = 0.0


def test_attack_model():
    a = AttackModel.from_epsilon(0.1, 3)
    assert a.delta_left.tolist() == [0.1] * 3 and a.epsilon == 0.1
    with pytest.raises(ValueError):
        AttackModel([0.1, -0.1], [0.0, 0.0])
    with pytest.raises(ValueError):
        AttackModel([0.1], [0.1, 0.2])
    lo, hi = AttackModel([0.2, 0.0], [0.0, 0.3]).boxes(np.array([[0.1, 0.9]]))
    assert lo.tolist() == [[0.0, 0.9]]
    assert hi.tolist() == [[0.1, 1.0]]
    with pytest.raises(ValueError):
        a.check(2)
