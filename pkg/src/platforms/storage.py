"""On-disk formats: dataset CSV, model text file, evaluation CSV and run manifest."""
import csv
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.ann import DEFAULT_LAYER_SIZES, MlpNetwork
from interfaces import (
    FEATURE_COUNT,
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

logger = logging.getLogger(__name__)

DATASET_HEADER = ["thickness_nm"] + [f"f{i:03d}" for i in range(FEATURE_COUNT)]
REPORT_HEADER = ["catalogue_nm", "ann_argmax_nm", "ann_expect_nm"]
MODEL_MAGIC = "MLPFRINGE 1"


def _float_text(value: float) -> str:
    """Shortest decimal that round-trips bit-exactly."""
    return repr(float(value))


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def _open_for_write(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="", encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot write ({e.strerror})", path) from e


def _open_for_read(path: Path):
    try:
        return open(path, "r", newline="", encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot read ({e.strerror})", path) from e


def _parse_float(text: str, error_type, line: int, column: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise error_type(f"'{text}' is not a number", line=line, column=column) from None
    if not np.isfinite(value):
        raise error_type(f"'{text}' is not finite", line=line, column=column)
    return value


def save_dataset(ds: Dataset, path) -> None:
    """CSV with header thickness_nm,f000..f039 plus a JSON sidecar holding kind and provenance."""
    path = Path(path)
    with _open_for_write(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(DATASET_HEADER)
        for record in ds.records:
            writer.writerow([_float_text(record.thickness_nm)] + [_float_text(v) for v in record.features.values])
    meta = {
        "kind": ds.kind.value,
        "downsample": ds.downsample_mode,
        "provenance": {
            "noisy": ds.provenance.noisy,
            "bit_depth": ds.provenance.bit_depth,
            "seed": ds.provenance.seed,
            "realizations": ds.provenance.realizations,
            "clamp": ds.provenance.clamp,
        },
    }
    write_json(_sidecar(path), meta)
    logger.debug("Saved %d records to %s", len(ds), path)


def load_dataset(path, kind: Optional[DatasetKind] = None) -> Dataset:
    """Read a dataset CSV; the sidecar, when present, restores kind and provenance.

    `kind` only applies to files without a sidecar.
    """
    path = Path(path)
    records: List[DatasetRecord] = []
    with _open_for_read(path) as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise DatasetFormatError("file is empty, expected a header", line=1)
        if len(header) != len(DATASET_HEADER):
            raise DatasetFormatError(
                f"header arity mismatch: {len(header)} columns, expected {len(DATASET_HEADER)} "
                f"(thickness_nm + {FEATURE_COUNT} features)",
                line=1,
                column=min(len(header), len(DATASET_HEADER)) + 1,
            )
        for column, (found, expected) in enumerate(zip(header, DATASET_HEADER), start=1):
            if found.strip() != expected:
                raise DatasetFormatError(f"header mismatch: '{found}' instead of '{expected}'", line=1, column=column)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(DATASET_HEADER):
                raise DatasetFormatError(
                    f"row arity mismatch: {len(row)} columns, expected {len(DATASET_HEADER)}",
                    line=line,
                    column=min(len(row), len(DATASET_HEADER)) + 1,
                )
            values = [_parse_float(text, DatasetFormatError, line, column) for column, text in enumerate(row, start=1)]
            for column, value in enumerate(values[1:], start=2):
                if value < 0:
                    raise DatasetFormatError(f"negative feature value {value!r}", line=line, column=column)
            records.append(DatasetRecord(values[0], FeatureVector(np.array(values[1:]))))

    kind, provenance, downsample = _read_dataset_meta(_sidecar(path), kind)
    return Dataset(records=records, kind=kind, provenance=provenance, downsample_mode=downsample)


def _read_dataset_meta(sidecar: Path, kind: Optional[DatasetKind]) -> Tuple[DatasetKind, Provenance, str]:
    if not sidecar.exists():
        return kind or DatasetKind.TEST, Provenance.clean(), "stride"
    meta = read_json(sidecar)
    try:
        if not isinstance(meta, dict):
            raise TypeError("expected a JSON object")
        if "kind" in meta:
            kind = DatasetKind(meta["kind"])
        provenance = Provenance(**meta["provenance"]) if "provenance" in meta else Provenance.clean()
        downsample = meta.get("downsample", "stride")
        if not isinstance(downsample, str):
            raise TypeError(f"downsample mode {downsample!r} is not a string")
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetFormatError(f"bad dataset sidecar {sidecar}: {e}") from None
    return kind or DatasetKind.TEST, provenance, downsample


def save_model(net: MlpNetwork, path) -> None:
    """Text model: magic line, layer sizes, then per layer a bias line and one weight row per output node."""
    path = Path(path)
    with _open_for_write(path) as f:
        f.write(MODEL_MAGIC + "\n")
        f.write(" ".join(str(n) for n in net.layer_sizes) + "\n")
        for w, b in zip(net.weights, net.biases):
            f.write(" ".join(format(float(v), ".17g") for v in b) + "\n")
            for row in w:
                f.write(" ".join(format(float(v), ".17g") for v in row) + "\n")
    logger.debug("Saved model %s to %s", net.layer_sizes, path)


def load_model(path, expected_sizes: Optional[Sequence[int]] = DEFAULT_LAYER_SIZES) -> MlpNetwork:
    """Parse a model file; any defect raises before a network is built."""
    path = Path(path)
    with _open_for_read(path) as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    def line_at(number: int) -> str:
        if number > len(lines):
            raise ModelFormatError("file is truncated", line=number)
        return lines[number - 1]

    if line_at(1).strip() != MODEL_MAGIC:
        raise ModelFormatError(f"expected '{MODEL_MAGIC}'", line=1, column=1)
    size_fields = line_at(2).split()
    try:
        sizes = tuple(int(s) for s in size_fields)
    except ValueError:
        raise ModelFormatError("layer sizes must be integers", line=2) from None
    if len(sizes) < 2 or min(sizes) < 1:
        raise ModelFormatError(f"invalid layer sizes {size_fields}", line=2)
    if expected_sizes is not None and sizes != tuple(expected_sizes):
        mismatched = [
            f"layer {i}: expected {e}, found {s}" for i, (s, e) in enumerate(zip(sizes, expected_sizes)) if s != e
        ]
        if len(sizes) != len(expected_sizes):
            mismatched.append(f"expected {len(expected_sizes)} layers, found {len(sizes)}")
        raise DimensionError(
            f"model declares layer sizes {' '.join(map(str, sizes))}; "
            f"expected {' '.join(map(str, expected_sizes))} ({'; '.join(mismatched)})"
        )

    def numbers(number: int, count: int) -> np.ndarray:
        fields = line_at(number).split()
        if len(fields) != count:
            raise ModelFormatError(f"expected {count} values, found {len(fields)}", line=number)
        return np.array([_parse_float(text, ModelFormatError, number, column) for column, text in enumerate(fields, 1)])

    weights, biases = [], []
    line = 3
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        biases.append(numbers(line, n_out))
        line += 1
        rows = []
        for _ in range(n_out):
            rows.append(numbers(line, n_in))
            line += 1
        weights.append(np.stack(rows))
    if line <= len(lines) and any(text.strip() for text in lines[line - 1 :]):
        raise ModelFormatError("unexpected data after the last layer", line=line)
    return MlpNetwork(sizes, weights, biases)


def write_report_rows(records: Sequence[EvalRecord], path, meta: Dict[str, Any]) -> None:
    path = Path(path)
    with _open_for_write(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for r in records:
            writer.writerow([_float_text(r.catalogue_nm), _float_text(r.ann_nm_argmax), _float_text(r.ann_nm_expect)])
    write_json(_sidecar(path), meta)


def read_report_rows(path) -> Tuple[List[EvalRecord], Dict[str, Any]]:
    path = Path(path)
    records = []
    with _open_for_read(path) as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != REPORT_HEADER:
            raise ReportFormatError(f"expected header {','.join(REPORT_HEADER)}", line=1)
        for row in reader:
            if not row:
                continue
            if len(row) != len(REPORT_HEADER):
                raise ReportFormatError(f"expected {len(REPORT_HEADER)} columns, found {len(row)}", line=reader.line_num)
            values = [_parse_float(t, ReportFormatError, reader.line_num, c) for c, t in enumerate(row, start=1)]
            records.append(EvalRecord(*values))
    meta = read_json(_sidecar(path)) if _sidecar(path).exists() else {}
    return records, meta


def write_json(path, payload: Dict[str, Any]) -> None:
    """Sorted keys, two-space indent, trailing newline: stable bytes for equal payloads."""
    path = Path(path)
    with _open_for_write(path) as f:
        f.write(json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n")


def read_json(path) -> Dict[str, Any]:
    path = Path(path)
    with _open_for_read(path) as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise ValidationError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}") from None


def sha256_file(path) -> str:
    path = Path(path)
    try:
        return hashlib.sha256(path.read_bytes()).hexdigest()
    except OSError as e:
        raise StorageError(f"cannot read ({e.strerror})", path) from e
