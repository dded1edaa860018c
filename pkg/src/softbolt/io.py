"""Output files.  Every file starts with a metadata record so a result can be
traced back to the exact configuration and seed that produced it."""
from __future__ import annotations

import csv
import datetime as _dt
import json
import os
import struct
from importlib import metadata as _md

import numpy as np

FIELD_MAGIC = b"SBFIELD1"


def package_version() -> str:
    try:
        return _md.version("artifact")
    except _md.PackageNotFoundError:
        return "0+unknown"


def timestamp() -> str:
    """UTC time of the run, or SOURCE_DATE_EPOCH when set so outputs can be reproduced byte for byte."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = (_dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch
            else _dt.datetime.now(_dt.timezone.utc))
    return when.strftime("%Y-%m-%dT%H:%M:%SZ")


def metadata(config_hash: str, seed: int, **extra) -> dict:
    rec = {"version": package_version(), "config_hash": config_hash, "seed": int(seed),
           "timestamp": timestamp()}
    rec.update(extra)
    return {"metadata": rec}


def _default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(rec) -> str:
    return json.dumps(rec, default=_default, sort_keys=True, allow_nan=True)


class NDJSONWriter:
    """Append-only stream of JSON records, one per line, metadata first."""

    def __init__(self, path, meta: dict):
        self.path = path
        self._fh = open(path, "w")
        self.write(meta)

    def write(self, rec: dict):
        self._fh.write(dumps(rec) + "\n")

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_ndjson(path):
    """Return (metadata, records) from an NDJSON file."""
    meta, recs = None, []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if meta is None and "metadata" in rec:
                meta = rec["metadata"]
            else:
                recs.append(rec)
    return meta, recs


def write_json(path, meta: dict, payload: dict):
    with open(path, "w") as fh:
        fh.write(json.dumps({**meta, **payload}, default=_default, sort_keys=True, indent=2) + "\n")


def write_field(path, meta: dict, values: np.ndarray, **header):
    """Binary dump: magic, header length (little-endian u64), JSON header, raw float64 data."""
    arr = np.ascontiguousarray(values, dtype="<f8")
    head = json.dumps({**meta, "shape": list(arr.shape), "dtype": "<f8", **header},
                      default=_default, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        fh.write(arr.tobytes())


def read_field(path):
    with open(path, "rb") as fh:
        if fh.read(len(FIELD_MAGIC)) != FIELD_MAGIC:
            raise ValueError(f"{path}: not a field file")
        (n,) = struct.unpack("<Q", fh.read(8))
        head = json.loads(fh.read(n))
        data = np.frombuffer(fh.read(), dtype=head["dtype"]).reshape(head["shape"])
    return head, data


def write_csv(path, meta: dict, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write("# " + dumps(meta) + "\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
