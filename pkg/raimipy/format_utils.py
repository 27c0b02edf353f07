import json
import os
from typing import Any, Dict

import h5py
import numpy as np
import pandas as pd

TABLE_FORMATS = ("csv", "parquet", "hdf5")


# Define reading and writing functions
def write_hdf5(df: pd.DataFrame, filename: str):
    if os.path.exists(filename):
        os.remove(filename)

    dest = h5py.File(filename, mode="w")

    try:
        dim_0 = [repr(float(x)).encode("utf8") for x in df.index]
        dim_1 = [str(x).encode("utf8") for x in df.columns]

        dest.attrs["index_name"] = df.index.name or ""
        dest.create_dataset("dim_0", track_times=False, data=dim_0)
        dest.create_dataset("dim_1", track_times=False, data=dim_1)
        dest.create_dataset(
            "data", track_times=False, data=df.values.astype(float), compression="gzip"
        )
    finally:
        dest.close()


def read_hdf5(filename: str) -> pd.DataFrame:
    "Reads a numeric table written by write_hdf5; the index comes back as floats"
    src = h5py.File(filename, mode="r")
    try:
        dim_0 = [float(x.decode("utf8")) for x in src["dim_0"]]
        dim_1 = [x.decode("utf8") for x in src["dim_1"]]
        data = np.array(src["data"])
        index = pd.Index(dim_0, name=src.attrs.get("index_name") or None)
        return pd.DataFrame(index=index, columns=dim_1, data=data)
    finally:
        src.close()


def write_parquet(df: pd.DataFrame, dest: str):
    df.to_parquet(dest)


def read_parquet(filename: str) -> pd.DataFrame:
    return pd.read_parquet(filename)


def _ensure_parent_dir_exists(filename: str):
    parent = os.path.dirname(os.path.abspath(filename))
    if not os.path.exists(parent):
        os.makedirs(parent)


def write_table(df: pd.DataFrame, filename: str, format: str = "csv"):
    _ensure_parent_dir_exists(filename)
    if format == "csv":
        df.to_csv(filename, float_format="%.17g")
    elif format == "parquet":
        write_parquet(df, filename)
    elif format == "hdf5":
        write_hdf5(df, filename)
    else:
        raise ValueError(f"Unknown table format {format!r}; expected one of {TABLE_FORMATS}")


def read_table(filename: str, format: str = "csv") -> pd.DataFrame:
    if format == "csv":
        return pd.read_csv(filename, index_col=0, float_precision="round_trip")
    elif format == "parquet":
        return read_parquet(filename)
    elif format == "hdf5":
        return read_hdf5(filename)
    else:
        raise ValueError(f"Unknown table format {format!r}; expected one of {TABLE_FORMATS}")


def write_json_report(report: Dict[str, Any], filename: str):
    """Keys are sorted so that two runs of the same experiment produce the same
    bytes apart from the created_at field."""
    _ensure_parent_dir_exists(filename)
    with open(filename, "wt") as fd:
        json.dump(report, fd, sort_keys=True, indent=2)
        fd.write("\n")


def read_json_report(filename: str) -> Dict[str, Any]:
    with open(filename, "rt") as fd:
        return json.load(fd)
