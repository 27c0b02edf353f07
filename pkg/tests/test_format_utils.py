import numpy as np
import pandas as pd
import pytest

from raimipy.format_utils import read_json_report, read_table, write_json_report, write_table

FRAME = pd.DataFrame(
    {"hits_1": [7, 4, 0], "mean_1": [0.7, 0.4, 0.0]},
    index=pd.Index([0.0, 1 / 3, 2 / 3], name="theta"),
)


@pytest.mark.parametrize("format", ["csv", "parquet", "hdf5"])
def test_table_round_trip(tmpdir, format):
    filename = str(tmpdir.join("out", f"table.{format}"))
    write_table(FRAME, filename, format)
    df = read_table(filename, format)
    assert list(df.columns) == ["hits_1", "mean_1"]
    assert df.index.name == "theta"
    # thirds survive exactly
    assert list(df.index) == list(FRAME.index)
    assert np.array_equal(df.values.astype(float), FRAME.values.astype(float))


def test_hdf5_overwrites(tmpdir):
    filename = str(tmpdir.join("table.hdf5"))
    write_table(FRAME, filename, "hdf5")
    write_table(FRAME.iloc[:1], filename, "hdf5")
    assert len(read_table(filename, "hdf5")) == 1


def test_unknown_format(tmpdir):
    with pytest.raises(ValueError, match="Unknown table format"):
        write_table(FRAME, str(tmpdir.join("table.xls")), "xls")
    with pytest.raises(ValueError, match="Unknown table format"):
        read_table(str(tmpdir.join("table.xls")), "xls")


def test_json_report_is_stable(tmpdir):
    filename = str(tmpdir.join("reports", "r.json"))
    write_json_report({"b": 1, "a": [0.25, None]}, filename)
    with open(filename) as fd:
        text = fd.read()
    assert text == '{\n  "a": [\n    0.25,\n    null\n  ],\n  "b": 1\n}\n'
    assert read_json_report(filename) == {"a": [0.25, None], "b": 1}
