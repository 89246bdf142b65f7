"""Artifact formats: FLD1 fields, MAF1 flow checkpoints and annotated CSVs.

FLD1 (little endian, no padding)::

    0   4s   magic b"FLD1"
    4   u32  version (1)
    8   u32  N
    12  f64  box_size
    20  u64  seed
    28  u32  P
    32  P x f64 parameter values
    ..  N*N x f32 data, row major

MAF1::

    0   4s   magic b"MAF1"
    4   u32  version (1)
    8   u64  header length H
    16  H    UTF-8 JSON header (config, degree vectors, array table, metadata)
    ..       arrays listed in header["arrays"], little-endian f64, C order

CSV artifacts start with ``# key=value`` comment lines carrying provenance,
followed by one header row; numbers are written with 17 significant digits.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError
from .fields import Field2D, ParamVector
from .flows import FlowEnsemble, MadeBlock, MafModel, Standardizer

FLD1_MAGIC = b"FLD1"
MAF1_MAGIC = b"MAF1"
VERSION = 1
_FLD1_HEAD = struct.Struct("<4sIIdQI")


# ---- FLD1 ---------------------------------------------------------------------


def encode_fld1(field: Field2D) -> bytes:
    values = field.params.values if field.params is not None else np.zeros(0)
    seed = field.seed if field.seed is not None else 0
    head = _FLD1_HEAD.pack(FLD1_MAGIC, VERSION, field.n, float(field.box_size), seed, values.size)
    return (
        head
        + np.asarray(values, dtype="<f8").tobytes()
        + np.ascontiguousarray(field.data, dtype="<f4").tobytes()
    )


def decode_fld1(raw: bytes, names: Sequence[str] | None = None) -> Field2D:
    if len(raw) < _FLD1_HEAD.size:
        raise FormatError("truncated FLD1 header")
    magic, version, n, box, seed, p = _FLD1_HEAD.unpack_from(raw, 0)
    if magic != FLD1_MAGIC:
        raise FormatError(f"bad FLD1 magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported FLD1 version {version}")
    offset = _FLD1_HEAD.size
    expected = offset + 8 * p + 4 * n * n
    if len(raw) != expected:
        raise FormatError(f"FLD1 payload is {len(raw)} bytes, expected {expected}")
    values = np.frombuffer(raw, dtype="<f8", count=p, offset=offset).astype(np.float64)
    data = np.frombuffer(raw, dtype="<f4", count=n * n, offset=offset + 8 * p).reshape(n, n)
    params = None
    if p:
        params = ParamVector(values, names or [f"p{i}" for i in range(p)])
    return Field2D(data=data.astype(np.float64), box_size=box, params=params, seed=seed)


def write_fld1(path, field: Field2D) -> None:
    Path(path).write_bytes(encode_fld1(field))


def read_fld1(path, names: Sequence[str] | None = None) -> Field2D:
    return decode_fld1(Path(path).read_bytes(), names)


# ---- MAF1 ---------------------------------------------------------------------


def _model_arrays(model: MafModel):
    yield "t_shift", model.t_std.shift
    yield "t_scale", model.t_std.scale
    yield "theta_shift", model.theta_std.shift
    yield "theta_scale", model.theta_std.scale
    for b, name, value in model.parameters():
        yield f"block{b}.{name}", value


def encode_maf1(model: MafModel, meta: dict | None = None) -> bytes:
    arrays = list(_model_arrays(model))
    header = {
        "D": model.D_full,
        "P": model.P,
        "n_blocks": model.n_blocks,
        "hidden": model.hidden,
        "active": [bool(a) for a in model.active],
        "degrees": [[d.tolist() for d in blk.degrees] for blk in model.blocks],
        "degraded": model.degraded,
        "best_validation_ll": model.best_validation_ll,
        "history": model.history,
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in arrays],
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    body = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for _, v in arrays)
    return MAF1_MAGIC + struct.pack("<IQ", VERSION, len(blob)) + blob + body


def decode_maf1(raw: bytes) -> tuple[MafModel, dict]:
    if len(raw) < 16:
        raise FormatError("truncated MAF1 header")
    if raw[:4] != MAF1_MAGIC:
        raise FormatError(f"bad MAF1 magic {raw[:4]!r}")
    version, hlen = struct.unpack_from("<IQ", raw, 4)
    if version != VERSION:
        raise FormatError(f"unsupported MAF1 version {version}")
    try:
        header = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt MAF1 header: {exc}") from None
    hidden = header["hidden"]
    model = MafModel(
        header["D"],
        header["P"],
        header["n_blocks"],
        hidden_layers=len(hidden),
        hidden_width=hidden[0],
        active=np.array(header["active"], dtype=bool),
    )
    # rebuild blocks from stored degree vectors so masks are exactly reproduced
    model.blocks = [
        MadeBlock(model.D, model.P, hidden, [np.array(d) for d in degs]) for degs in header["degrees"]
    ]
    offset = 16 + hlen
    values = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        if offset + 8 * count > len(raw):
            raise FormatError("truncated MAF1 payload")
        values[entry["name"]] = (
            np.frombuffer(raw, dtype="<f8", count=count, offset=offset).astype(np.float64).reshape(shape)
        )
        offset += 8 * count
    if offset != len(raw):
        raise FormatError("trailing bytes in MAF1 file")
    model.t_std = Standardizer(values.pop("t_shift"), values.pop("t_scale"))
    model.theta_std = Standardizer(values.pop("theta_shift"), values.pop("theta_scale"))
    for key, value in values.items():
        b, name = key.split(".", 1)
        model.blocks[int(b[len("block"):])].params[name] = value
    model.degraded = header["degraded"]
    model.best_validation_ll = header["best_validation_ll"]
    model.history = header["history"]
    return model, header["meta"]


def write_maf1(path, model: MafModel, meta: dict | None = None) -> None:
    Path(path).write_bytes(encode_maf1(model, meta))


def read_maf1(path) -> tuple[MafModel, dict]:
    return decode_maf1(Path(path).read_bytes())


def write_ensemble(directory, ensemble: FlowEnsemble, meta: dict | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for k, member in enumerate(ensemble.members):
        name = f"member{k}_blocks{member.n_blocks}.maf1"
        write_maf1(directory / name, member, meta)
        files.append(name)
    index = {
        "members": files,
        "stack_weights": [float(w) for w in ensemble.stack_weights],
        "validation_ll": [float(v) for v in ensemble.validation_ll],
        "meta": meta or {},
    }
    (directory / "ensemble.json").write_text(json.dumps(index, indent=2, sort_keys=True))


def read_ensemble(directory) -> tuple[FlowEnsemble, dict]:
    directory = Path(directory)
    index = json.loads((directory / "ensemble.json").read_text())
    members = [read_maf1(directory / name)[0] for name in index["members"]]
    ensemble = FlowEnsemble(
        members, np.array(index["stack_weights"]), np.array(index["validation_ll"])
    )
    return ensemble, index["meta"]


# ---- CSV ----------------------------------------------------------------------


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_table(path, meta: dict, columns: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        for key, value in meta.items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def read_table(path) -> tuple[dict, list[str], np.ndarray]:
    """Parse an annotated CSV; non-finite entries are rejected with their row."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    meta, rows, columns = {}, [], None
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
                continue
            columns = next(csv.reader([line]))
            break
        if columns is None:
            raise FormatError(f"{path}: missing header row")
        for i, row in enumerate(csv.reader(fh)):
            if len(row) != len(columns):
                raise FormatError(f"{path}: row {i} has {len(row)} fields, expected {len(columns)}")
            try:
                values = [float(v) for v in row]
            except ValueError:
                raise FormatError(f"{path}: row {i} is not numeric") from None
            if not all(np.isfinite(values)):
                raise FormatError(f"{path}: row {i} contains NaN or inf")
            rows.append(values)
    data = np.array(rows, dtype=np.float64).reshape(len(rows), len(columns))
    return meta, columns, data


@dataclass
class SummaryDataset:
    theta: np.ndarray
    t: np.ndarray
    theta_names: tuple[str, ...]
    labels: tuple[str, ...]
    header: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=np.float64))
        self.t = np.atleast_2d(np.asarray(self.t, dtype=np.float64))
        if self.theta.shape[0] != self.t.shape[0]:
            raise ValueError("theta and summary row counts differ")
        if self.theta.shape[1] != len(self.theta_names) or self.t.shape[1] != len(self.labels):
            raise ValueError("column counts do not match names")


def write_dataset(path, ds: SummaryDataset) -> None:
    columns = [f"theta:{n}" for n in ds.theta_names] + list(ds.labels)
    write_table(path, ds.header, columns, np.hstack([ds.theta, ds.t]))


def read_dataset(path) -> SummaryDataset:
    meta, columns, data = read_table(path)
    n_theta = sum(c.startswith("theta:") for c in columns)
    if columns[:n_theta] != [c for c in columns if c.startswith("theta:")]:
        raise FormatError(f"{path}: parameter columns must come first")
    return SummaryDataset(
        theta=data[:, :n_theta],
        t=data[:, n_theta:],
        theta_names=tuple(c[len("theta:"):] for c in columns[:n_theta]),
        labels=tuple(columns[n_theta:]),
        header=meta,
    )


def write_samples(path, samples, meta: dict) -> None:
    columns = ["chain", "logpost", *samples.names]
    rows = (
        [str(int(c)), lp, *d]
        for c, lp, d in zip(samples.chain_ids, samples.log_densities, samples.draws)
    )
    write_table(path, meta, columns, rows)


def write_curve(path, curve, meta: dict) -> None:
    rows = np.column_stack([curve.alphas, curve.ecp, curve.bands.T])
    write_table(path, meta, ["alpha", "ecp", "band1", "band2", "band3"], rows)
