import numpy as np
import pytest

from affinitynet import data
from affinitynet.errors import ClassTooSmall, EmptyTable, MissingValue, MTooLarge, NonNumeric, Ragged


def test_synthetic_shape_and_cluster_means():
    d = data.gen_synthetic(1000, 0)
    assert d.features.shape == (4000, 42)
    assert np.bincount(d.labels).tolist() == [1000] * 4
    for c, mean in enumerate([(0, 0), (0, 5), (5, 0), (5, 5)]):
        np.testing.assert_allclose(d.features[d.labels == c, :2].mean(axis=0), mean, atol=0.15)
    noise = d.features[:, 2:]
    assert noise.mean() == pytest.approx(2.5, abs=0.05)
    assert noise.var() == pytest.approx(10.0, rel=0.03)
    assert not d.labeled_mask.any()


def test_synthetic_seeded():
    assert data.gen_synthetic(10, 1) == data.gen_synthetic(10, 1)
    assert not np.array_equal(data.gen_synthetic(10, 1).features, data.gen_synthetic(10, 2).features)


def test_survival_surrogate_censoring():
    d = data.gen_survival_surrogate(2000, 0)
    assert (d.time > 0).all()
    assert 0.5 < d.event.mean() < 0.9
    assert np.bincount(d.labels).tolist() == pytest.approx([667, 666, 667], abs=1)


def test_unbalanced_sizes():
    d = data.gen_unbalanced()
    assert d.features.shape == (475, 50)
    assert np.bincount(d.labels).tolist() == [421, 54]


def test_csv_round_trip(tmp_path):
    d = data.gen_synthetic(3, 0)
    d = data.Dataset(d.features, d.labels, feature_names=d.feature_names,
                     sample_ids=[f"s{i}" for i in range(d.n)])
    data.write_csv(tmp_path / "x.csv", d)
    back = data.load_csv(tmp_path / "x.csv", label_column="label")
    assert back == d


def test_csv_features_as_rows_and_label_file(tmp_path):
    (tmp_path / "g.csv").write_text("gene,a,b,c\ng1,1,2,3\ng2,4,5,6\n")
    (tmp_path / "lab.csv").write_text("sample,type\nc,x\na,y\nb,x\n")
    d = data.load_csv(tmp_path / "g.csv", "features_as_rows", label_file=tmp_path / "lab.csv")
    assert d.features.tolist() == [[1, 4], [2, 5], [3, 6]]
    assert d.sample_ids == ["a", "b", "c"] and d.feature_names == ["g1", "g2"]
    assert d.labels.tolist() == [0, 1, 1] and d.class_names == ["y", "x"]


def test_csv_zscore(tmp_path):
    (tmp_path / "x.csv").write_text("id,u,v\na,1,5\nb,2,5\nc,3,5\n")
    d = data.load_csv(tmp_path / "x.csv", zscore=True)
    np.testing.assert_allclose(d.features[:, 0], [-1, 0, 1])
    assert (d.features[:, 1] == 0).all()


@pytest.mark.parametrize("text,err,fragment", [
    ("id,a,b\nr1,1,2\nr2,3\n", Ragged, "row 2"),
    ("id,a,b\nr1,1,x\n", NonNumeric, "'b'"),
    ("id,a,b\nr1,1,2\nr2,,4\n", MissingValue, "row 2, column 'a'"),
    ("id,a,b\n", EmptyTable, "no data"),
])
def test_csv_errors(tmp_path, text, err, fragment):
    (tmp_path / "bad.csv").write_text(text)
    with pytest.raises(err, match=fragment):
        data.load_csv(tmp_path / "bad.csv")


def test_top_variance_select():
    X = np.array([[0.0, 1.0, 10.0, 5.0], [0.0, 2.0, -10.0, 5.5], [0.0, 3.0, 0.0, 6.0]])
    d = data.Dataset(X, feature_names=["a", "b", "c", "d"])
    top = data.top_variance_select(d, 2)
    assert top.feature_names == ["c", "b"]
    with pytest.raises(MTooLarge):
        data.top_variance_select(d, 5)


def test_stratified_counts_examples():
    assert data.stratified_counts([421, 54], 0.01) == [4, 1]
    assert data.stratified_counts([463, 2212, 1909], 0.1) == [46, 221, 191]
    with pytest.raises(ClassTooSmall):
        data.stratified_counts([3, 0], 0.5)


def test_split_disjoint_exhaustive_and_seeded():
    d = data.gen_unbalanced()
    tr, te = data.split(d, data.SplitPlan(0.01, True, 3))
    assert not (tr & te).any() and (tr | te).all()
    assert np.bincount(d.labels[tr]).tolist() == [4, 1]
    tr2, _ = data.split(d, data.SplitPlan(0.01, True, 3))
    assert np.array_equal(tr, tr2)
    tr3, _ = data.split(d, data.SplitPlan(0.2, False, 0))
    assert tr3.sum() == 95
    with pytest.raises(ValueError):
        data.SplitPlan(1.0)


def test_three_way_split():
    tr, va, te = data.three_way_split(100, 0.4, 0.3, 1)
    assert (tr.sum(), va.sum(), te.sum()) == (40, 30, 30)
    assert ((tr.astype(int) + va + te) == 1).all()
    with pytest.raises(ValueError):
        data.three_way_split(10, 0.6, 0.4)
