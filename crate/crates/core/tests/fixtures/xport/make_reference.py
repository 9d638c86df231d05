"""Writes a reference XPORT v5 file with the `xport` package and records the
values as decoded by `xport.v56.load`. pandas.read_sas is used as a second,
independent reader for every row it returns (it drops a final row whose
trailing text bytes are blank).

    python make_reference.py
"""
import json
import math

import pandas as pd
import xport
import xport.v56

ROWS = {
    "SEQN": [62161.0, 62162.0, 62163.0, 62164.0, 62165.0],
    "RIDAGEYR": [22.0, float("nan"), 70.0, 18.0, 45.0],
    "BMXBMI": [23.3, 18.5, 50.0, 1.0 / 3.0, -118.625],
    "WTMEC2YR": [102641.406474, 15457.736897, 7397.684828, 1e-5, 123456789.125],
    "NOTE": ["alpha", "", "b", "long text value", "z"],
}


def main():
    df = pd.DataFrame(ROWS)
    ds = xport.Dataset(df, name="REF", label="reference")
    for k in ds:
        ds[k].label = k.lower()
    library = xport.Library({"REF": ds})
    with open("reference.xpt", "wb") as f:
        xport.v56.dump(library, f)

    with open("reference.xpt", "rb") as f:
        back = next(iter(xport.v56.load(f).values()))
    check = pd.read_sas("reference.xpt", format="xport", encoding="ascii")
    assert len(check) >= 1
    for c in check.columns:
        for i in range(len(check)):
            a, b = check[c].iloc[i], back[c].iloc[i]
            if isinstance(a, float) and math.isnan(a):
                assert isinstance(b, float) and math.isnan(b) or b in ("", None), (c, i)
            elif isinstance(a, str):
                assert a == ("" if b is None else str(b)).rstrip(), (c, i)
            else:
                assert float(a) == float(b), (c, i, a, b)
    expected = {"name": "REF", "columns": [], "rows": []}
    for c in back.columns:
        kind = "numeric" if pd.api.types.is_float_dtype(back[c]) else "text"
        expected["columns"].append({"name": c, "kind": kind})
    for _, row in back.iterrows():
        out = []
        for c in back.columns:
            v = row[c]
            if isinstance(v, float) and math.isnan(v):
                out.append(None)
            elif v is None or isinstance(v, str) or v is pd.NA:
                out.append(v if isinstance(v, str) and v.strip() else None)
            else:
                out.append(repr(float(v)))
        expected["rows"].append(out)
    with open("reference.json", "w") as f:
        json.dump(expected, f, indent=1)


if __name__ == "__main__":
    main()
