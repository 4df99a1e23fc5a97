#!/usr/bin/env python3
"""Tests for dataset CSV, model text file, report CSV and JSON persistence."""

import json
import os
import sys

import numpy as np
import pytest

# Add src directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from core.ann import DEFAULT_LAYER_SIZES, forward, init_network
from interfaces import (
    Dataset,
    DatasetFormatError,
    DatasetKind,
    DatasetRecord,
    DimensionError,
    EvalRecord,
    FeatureVector,
    ModelFormatError,
    Provenance,
    ReportFormatError,
    StorageError,
    ValidationError,
)
from platforms import storage


def random_dataset(rng: np.random.Generator, size: int) -> Dataset:
    records = [
        DatasetRecord(float(rng.uniform(1.0, 200.0)), FeatureVector(rng.uniform(0.0, 1.2, size=40)))
        for _ in range(size)
    ]
    provenance = Provenance(noisy=True, bit_depth=10, seed=int(rng.integers(2**32)), realizations=2, clamp=False)
    return Dataset(records=records, kind=DatasetKind.TEST, provenance=provenance, downsample_mode="block")


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def test_dataset_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(20)
    for index in range(1000):
        original = random_dataset(rng, int(rng.integers(0, 4)))
        path = tmp_path / f"ds{index}.csv"
        storage.save_dataset(original, path)
        loaded = storage.load_dataset(path)
        assert len(loaded) == len(original)
        assert loaded.kind is DatasetKind.TEST
        assert loaded.provenance == original.provenance
        assert loaded.downsample_mode == "block"
        np.testing.assert_array_equal(loaded.thicknesses(), original.thicknesses())
        np.testing.assert_array_equal(loaded.feature_matrix(), original.feature_matrix())


def test_training_set_file_layout(tmp_path, train_set):
    path = tmp_path / "train.csv"
    storage.save_dataset(train_set, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 21
    assert lines[0] == ",".join(["thickness_nm"] + [f"f{i:03d}" for i in range(40)])
    assert lines[1].startswith("10.0,")
    meta = json.loads((tmp_path / "train.csv.meta.json").read_text(encoding="utf-8"))
    assert meta["kind"] == "train" and meta["provenance"]["noisy"] is False
    assert storage.load_dataset(path).kind is DatasetKind.TRAIN


def test_empty_dataset_round_trip(tmp_path):
    path = tmp_path / "empty.csv"
    storage.save_dataset(Dataset(records=[], kind=DatasetKind.TRAIN), path)
    assert path.read_text(encoding="utf-8").count("\n") == 1
    loaded = storage.load_dataset(path)
    assert len(loaded) == 0 and loaded.kind is DatasetKind.TRAIN


def test_dataset_without_sidecar_uses_requested_kind(tmp_path, train_set):
    path = tmp_path / "train.csv"
    storage.save_dataset(train_set, path)
    (tmp_path / "train.csv.meta.json").unlink()
    assert storage.load_dataset(path, kind=DatasetKind.TRAIN).kind is DatasetKind.TRAIN
    assert storage.load_dataset(path).provenance == Provenance.clean()


def test_dataset_header_with_39_features_is_an_arity_error(tmp_path):
    path = tmp_path / "short.csv"
    header = ["thickness_nm"] + [f"f{i:03d}" for i in range(39)]
    write_lines(path, [",".join(header), ",".join(["10.0"] + ["0.5"] * 39)])
    with pytest.raises(DatasetFormatError, match="arity") as info:
        storage.load_dataset(path)
    assert info.value.line == 1


def test_dataset_row_errors_carry_location(tmp_path):
    header = ",".join(storage.DATASET_HEADER)
    path = tmp_path / "bad.csv"
    write_lines(path, [header, ",".join(["10.0"] + ["0.5"] * 40), ",".join(["20.0"] + ["0.5"] * 38)])
    with pytest.raises(DatasetFormatError, match="arity") as info:
        storage.load_dataset(path)
    assert info.value.line == 3

    write_lines(path, [header, ",".join(["10.0", "oops"] + ["0.5"] * 39)])
    with pytest.raises(DatasetFormatError) as info:
        storage.load_dataset(path)
    assert (info.value.line, info.value.column) == (2, 2)

    write_lines(path, [header.replace("f007", "f7")])
    with pytest.raises(DatasetFormatError, match="f7"):
        storage.load_dataset(path)


def test_negative_feature_value_is_a_format_error(tmp_path):
    path = tmp_path / "negative.csv"
    write_lines(path, [",".join(storage.DATASET_HEADER), ",".join(["10.0", "0.5", "-0.25"] + ["0.5"] * 38)])
    with pytest.raises(DatasetFormatError, match="negative") as info:
        storage.load_dataset(path)
    assert (info.value.line, info.value.column) == (2, 3)
    with pytest.raises(ValidationError):
        FeatureVector(np.full(40, -1e-9))


@pytest.mark.parametrize(
    "meta",
    [
        {"kind": "training"},
        {"kind": "train", "provenance": {"noisy": False, "gain": 2}},
        {"kind": "train", "provenance": [False, 8]},
        {"kind": "test", "downsample": 3},
        ["train"],
    ],
)
def test_malformed_sidecar_is_a_format_error(tmp_path, train_set, meta):
    path = tmp_path / "train.csv"
    storage.save_dataset(train_set, path)
    (tmp_path / "train.csv.meta.json").write_text(json.dumps(meta), encoding="utf-8")
    with pytest.raises(DatasetFormatError, match="train.csv.meta.json") as info:
        storage.load_dataset(path)
    assert info.value.exit_code == 3


def test_missing_dataset_is_a_storage_error(tmp_path):
    with pytest.raises(StorageError) as info:
        storage.load_dataset(tmp_path / "nope.csv")
    assert info.value.exit_code == 2
    assert "nope.csv" in str(info.value)


def test_model_round_trip_small_networks(tmp_path):
    rng = np.random.default_rng(30)
    for index in range(1000):
        sizes = tuple(int(n) for n in rng.integers(1, 6, size=int(rng.integers(2, 5))))
        net = init_network(sizes, seed=index)
        net.weights[0] *= 1e-3 ** float(rng.uniform())
        path = tmp_path / f"model{index}.txt"
        storage.save_model(net, path)
        loaded = storage.load_model(path, expected_sizes=None)
        assert loaded.layer_sizes == sizes
        for p, q in zip(net.parameters(), loaded.parameters()):
            np.testing.assert_array_equal(p, q)


def test_model_round_trip_default_network(tmp_path):
    net = init_network(DEFAULT_LAYER_SIZES, seed=7)
    path = tmp_path / "model.txt"
    storage.save_model(net, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "MLPFRINGE 1"
    assert lines[1] == "40 64 64 20"
    assert len(lines) == 2 + (1 + 64) + (1 + 64) + (1 + 20)
    loaded = storage.load_model(path)
    for x in np.random.default_rng(31).uniform(size=(100, 40)):
        np.testing.assert_array_equal(forward(loaded, x), forward(net, x))


def test_model_with_wrong_output_count_names_expected_sizes(tmp_path):
    path = tmp_path / "model.txt"
    storage.save_model(init_network((40, 64, 64, 21), seed=1), path)
    with pytest.raises(DimensionError, match="20") as info:
        storage.load_model(path)
    assert "layer 3" in str(info.value)


def test_truncated_model_is_a_format_error(tmp_path):
    path = tmp_path / "model.txt"
    storage.save_model(init_network(seed=1), path)
    lines = path.read_text(encoding="utf-8").splitlines()
    write_lines(path, lines[:-5])
    with pytest.raises(ModelFormatError, match="truncated"):
        storage.load_model(path)


def test_model_format_defects(tmp_path):
    path = tmp_path / "model.txt"
    storage.save_model(init_network((2, 2), seed=1), path)
    lines = path.read_text(encoding="utf-8").splitlines()

    write_lines(path, ["NOTAMODEL"] + lines[1:])
    with pytest.raises(ModelFormatError) as info:
        storage.load_model(path, expected_sizes=None)
    assert info.value.line == 1

    write_lines(path, lines[:2] + ["0.1"] + lines[3:])
    with pytest.raises(ModelFormatError) as info:
        storage.load_model(path, expected_sizes=None)
    assert info.value.line == 3

    write_lines(path, lines[:3] + ["nan 0.2"] + lines[4:])
    with pytest.raises(ModelFormatError, match="not finite"):
        storage.load_model(path, expected_sizes=None)

    write_lines(path, lines + ["1 2 3"])
    with pytest.raises(ModelFormatError, match="after the last layer"):
        storage.load_model(path, expected_sizes=None)


def test_report_rows_round_trip(tmp_path):
    records = [EvalRecord(5.0, 10.0, 7.123456789012345), EvalRecord(200.0, 200.0, 198.5)]
    path = tmp_path / "eval.csv"
    storage.write_report_rows(records, path, {"bit_depth": 8})
    loaded, meta = storage.read_report_rows(path)
    assert loaded == records
    assert meta == {"bit_depth": 8}
    assert path.read_text(encoding="utf-8").splitlines()[0] == "catalogue_nm,ann_argmax_nm,ann_expect_nm"


def test_report_with_wrong_header(tmp_path):
    path = tmp_path / "eval.csv"
    write_lines(path, ["a,b,c", "1,2,3"])
    with pytest.raises(ReportFormatError):
        storage.read_report_rows(path)


def test_json_is_stable_and_sorted(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    storage.write_json(a, {"z": 1, "a": {"y": [1, 2], "b": None}})
    storage.write_json(b, {"a": {"b": None, "y": [1, 2]}, "z": 1})
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text(encoding="utf-8").startswith('{\n  "a"')
    assert storage.sha256_file(a) == storage.sha256_file(b)
    assert storage.read_json(a) == {"z": 1, "a": {"y": [1, 2], "b": None}}


def test_invalid_json_is_a_validation_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{", encoding="utf-8")
    with pytest.raises(ValidationError):
        storage.read_json(path)
