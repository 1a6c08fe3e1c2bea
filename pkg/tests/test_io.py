import json

import numpy as np
import pytest

from covcpd.covtensor import CurvePanel
from covcpd.errors import DataError, FormatError, IllPosedProjectionError
from covcpd.fbasis import BasisSpec, evaluate_basis
from covcpd.io import ingest, ingest_with_info, read_table, write_coefficients


def test_grid_csv_600_by_1000(tmp_path, rng):
    spec = BasisSpec(8, 2)
    t = np.arange(1000) / 1000
    coeffs = rng.standard_normal((600, 8))
    np.savetxt(tmp_path / "lfp.csv", coeffs @ evaluate_basis(spec, t).T, delimiter=",", fmt="%.17g")
    panel, info = ingest_with_info(tmp_path / "lfp.csv", "grid", "2:8")
    assert (panel.n, panel.p) == (600, 8) and info["grid_size"] == 1000
    assert np.allclose(panel.coeffs, coeffs, atol=1e-10)


def test_coefficient_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps([[1, 2, 3, 4, 5, 6, 7, 8], [0, 0, 0, 0, 0, 0, 0, 1.5]]))
    panel = ingest(path, "coefficients")
    assert panel.coeffs.shape == (2, 8) and panel.coeffs[1, 7] == 1.5
    path.write_text(json.dumps({"coefficients": [[1, 2], [3, 4]]}))
    assert ingest(path, "coefficients").basis == BasisSpec(2, 1)


def test_nan_reports_coordinates(tmp_path):
    values = np.ones((10, 20))
    values[7, 3] = np.nan
    np.savetxt(tmp_path / "bad.csv", values, delimiter=",")
    with pytest.raises(DataError) as info:
        ingest(tmp_path / "bad.csv")
    assert (info.value.row, info.value.column) == (7, 3)
    assert "row 7, column 3" in str(info.value)


def test_nan_in_json(tmp_path):
    path = tmp_path / "g.json"
    path.write_text('{"curves": [[1, 2, 3], [1, NaN, 3]]}')
    with pytest.raises(DataError) as info:
        read_table(path, "grid")
    assert (info.value.row, info.value.column) == (1, 1)


def test_ragged_rows(tmp_path):
    (tmp_path / "r.csv").write_text("1,2,3\n4,5,6\n7,8\n")
    with pytest.raises(FormatError, match="row 2"):
        ingest(tmp_path / "r.csv")


def test_unparseable_and_single_row(tmp_path):
    (tmp_path / "u.csv").write_text("1,2\n3,abc\n")
    with pytest.raises(FormatError):
        read_table(tmp_path / "u.csv")
    (tmp_path / "one.csv").write_text(",".join(["1"] * 30) + "\n")
    with pytest.raises(FormatError):
        ingest(tmp_path / "one.csv")


def test_too_few_columns(tmp_path):
    np.savetxt(tmp_path / "narrow.csv", np.ones((5, 6)), delimiter=",")
    with pytest.raises(IllPosedProjectionError):
        ingest(tmp_path / "narrow.csv", band="2:8")


def test_json_grid_and_text_header(tmp_path, rng):
    spec = BasisSpec(3)
    t = np.sort(rng.uniform(0, 1, 40))
    coeffs = rng.standard_normal((4, 3))
    values = coeffs @ evaluate_basis(spec, t).T
    lines = [",".join(repr(float(x)) for x in row) for row in values]
    (tmp_path / "h.json").write_text(json.dumps({"grid": t.tolist(), "curves": values.tolist()}))
    assert np.allclose(ingest(tmp_path / "h.json", band="1:3").coeffs, coeffs, atol=1e-10)
    text_header = ["t" + str(i) for i in range(40)]
    (tmp_path / "named.csv").write_text(",".join(text_header) + "\n" + "\n".join(lines) + "\n")
    assert read_table(tmp_path / "named.csv").values.shape == (4, 40)


def test_coefficient_csv_round_trip_is_exact(tmp_path, rng):
    panel = CurvePanel(rng.standard_normal((7, 8)) / 3, BasisSpec(8, 2))
    write_coefficients(tmp_path / "p.csv", panel)
    back = ingest(tmp_path / "p.csv", "coefficients")
    assert np.array_equal(back.coeffs, panel.coeffs)
    assert back.basis == panel.basis
