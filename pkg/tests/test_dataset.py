import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cgtree.dataset import (DataError, Dataset, Schema, UnknownCategoryError, class_histogram, infer_schema,
                            load_csv, split_train_test, synthetic_dataset)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_small_numeric(tmp_path):
    p = write(tmp_path, "toy.csv", "a,b,y\n1,2,a\n3,4,b\n5,6,a\n7,8,b\n")
    d = load_csv(p)
    assert (d.n_rows, d.n_features, d.n_classes) == (4, 2, 2)
    assert d.targets.tolist() == [0, 1, 0, 1]
    assert d.class_labels == ["a", "b"]


def test_targets_numbered_by_first_appearance(tmp_path):
    p = write(tmp_path, "toy.csv", "x,y\n1,zebra\n2,apple\n3,zebra\n")
    d = load_csv(p)
    assert d.class_labels == ["zebra", "apple"]
    assert d.targets.tolist() == [0, 1, 0]


def test_ordinal_levels_map_to_ranks(tmp_path):
    p = write(tmp_path, "o.csv", "size,y\nlow,a\nhigh,b\nmedium,a\n")
    schema = Schema(["size"], ["ordinal"], 1, {"size": ["low", "medium", "high"]})
    d = load_csv(p, schema)
    assert d.n_features == 1
    assert d.values[:, 0].tolist() == [0.0, 2.0, 1.0]


def test_categorical_one_hot_and_roundtrip(tmp_path):
    p = write(tmp_path, "c.csv", "colour,x,y\nred,1,a\nblue,2,b\ngreen,3,a\nred,4,b\n")
    d = load_csv(p)
    assert d.feature_names == ["colour=blue", "colour=green", "colour=red", "x"]
    assert d.values[:, :3].sum(axis=1).tolist() == [1.0] * 4
    assert d.encoder.decode_categorical(d.values, "colour") == ["red", "blue", "green", "red"]


def test_schema_sidecar(tmp_path):
    write(tmp_path, "s.schema", "[schema]\ntarget_column = 0\n\n[features]\nw = numeric\nq = ordinal: lo, hi\n")
    p = write(tmp_path, "s.csv", "y,w,q\nA,1.5,lo\nB,2.5,hi\n")
    d = load_csv(p, Schema.read(tmp_path / "s.schema"))
    assert d.values.tolist() == [[1.5, 0.0], [2.5, 1.0]]
    assert d.targets.tolist() == [0, 1]


def test_malformed_row_reports_line(tmp_path):
    p = write(tmp_path, "bad.csv", "a,b,y\n1,2,a\n3,b\n")
    with pytest.raises(DataError, match="line 3"):
        load_csv(p)


def test_empty_file(tmp_path):
    p = write(tmp_path, "e.csv", "")
    with pytest.raises(DataError, match="empty"):
        load_csv(p)


def test_missing_value_rejected(tmp_path):
    p = write(tmp_path, "m.csv", "a,y\n1,a\n?,b\n")
    schema = Schema(["a"], ["numeric"], 1)
    with pytest.raises(DataError, match="missing"):
        load_csv(p, schema)


def test_unknown_category_at_predict_time(tmp_path):
    train = load_csv(write(tmp_path, "tr.csv", "c,y\nx,a\nz,b\n"))
    with pytest.raises(UnknownCategoryError):
        load_csv(write(tmp_path, "te.csv", "c,y\nw,a\n"), encoder=train.encoder)


def test_infer_schema_kinds(tmp_path):
    p = write(tmp_path, "i.csv", "n,c,y\n1,u,a\n2.5,v,b\n")
    s = infer_schema(p)
    assert s.feature_kinds == ["numeric", "categorical"]
    assert s.target_column == 2


def test_schema_invariants():
    with pytest.raises(DataError):
        Schema(["a", "a"], ["numeric", "numeric"], 2)
    with pytest.raises(DataError):
        Schema(["a"], ["numeric"], 5)
    with pytest.raises(DataError):
        Schema([], [], 0)


def test_dataset_invariants():
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 1)), [0, 2], 2)
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 1)), [0, 0], 1)


def test_iris_file(data_dir):
    d = load_csv(data_dir / "iris.csv")
    assert (d.n_rows, d.n_features) == (150, 4)
    assert d.n_classes == 3


def test_split_sizes_for_100_rows():
    d = Dataset(np.arange(100.0)[:, None], np.arange(100) % 2, 2)
    p = split_train_test(d, 3)
    assert (len(p.train_indices), len(p.test_indices), len(p.unused_indices)) == (50, 25, 25)


def test_split_is_deterministic_and_seed_sensitive():
    d = Dataset(np.arange(1000.0)[:, None], np.arange(1000) % 2, 2)
    assert split_train_test(d, 5) == split_train_test(d, 5)
    assert split_train_test(d, 5).train_indices != split_train_test(d, 6).train_indices


def test_split_needs_four_rows():
    with pytest.raises(DataError):
        split_train_test(Dataset(np.zeros((3, 1)), [0, 1, 0], 2), 0)


def test_class_histogram_examples():
    d = Dataset(np.zeros((3, 1)), [0, 0, 1], 2)
    assert class_histogram(d).tolist() == [2, 1]
    assert class_histogram(d, []).tolist() == [0, 0]


@pytest.mark.invariant
@settings(max_examples=60, deadline=None)
@given(n=st.integers(4, 400), seed=st.integers(0, 10**6))
def test_partition_disjoint_and_sized(n, seed):
    d = Dataset(np.zeros((n, 1)), np.arange(n) % 2, 2)
    p = split_train_test(d, seed)
    tr, te, un = map(set, (p.train_indices, p.test_indices, p.unused_indices))
    assert not (tr & te) and not (tr & un) and not (te & un)
    assert tr | te | un == set(range(n))
    assert len(tr) == n // 2 and len(te) == n // 4


@pytest.mark.invariant
@settings(max_examples=60, deadline=None)
@given(targets=st.lists(st.integers(0, 3), min_size=4, max_size=60), seed=st.integers(0, 1000))
def test_histogram_additive_over_partition(targets, seed):
    d = Dataset(np.zeros((len(targets), 1)), targets, 4)
    p = split_train_test(d, seed)
    parts = sum(class_histogram(d, list(ix)) for ix in (p.train_indices, p.test_indices, p.unused_indices))
    assert parts.tolist() == class_histogram(d).tolist()
    assert class_histogram(d).sum() == len(targets)


@settings(max_examples=30, deadline=None)
@given(cats=st.lists(st.sampled_from(["lo", "mid", "hi", "x"]), min_size=2, max_size=30))
def test_one_hot_roundtrip(tmp_path_factory, cats):
    tmp = tmp_path_factory.mktemp("rt")
    lines = ["c,y"] + [f"{c},{'ab'[i % 2]}" for i, c in enumerate(cats)]
    p = tmp / "rt.csv"
    p.write_text("\n".join(lines) + "\n")
    d = load_csv(p)
    assert d.encoder.decode_categorical(d.values, "c") == cats


def test_synthetic_dataset_shape_and_determinism():
    a = synthetic_dataset(500, 5, 3, seed=4)
    b = synthetic_dataset(500, 5, 3, seed=4)
    assert a.values.shape == (500, 5) and a.n_classes == 3
    assert np.array_equal(a.values, b.values) and np.array_equal(a.targets, b.targets)
