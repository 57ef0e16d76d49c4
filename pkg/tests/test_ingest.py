import json

import pytest

from cohortpolicy.errors import IntegrityError, RowIngestError, SchemaError
from cohortpolicy.ingest import (IngestSchema, ingest, load_stored_estimates,
                                 parse_lift_text)

SCHEMA = {
    "user_id": "uid",
    "arm": "group",
    "control": "control",
    "features": ["age"],
    "metrics": ["spend"],
}


def write_csv(path, rows, header="uid,group,age,spend"):
    path.write_text("\n".join([header, *rows]) + "\n")
    return path


def test_ingest_minimal_csv(tmp_path):
    path = write_csv(tmp_path / "d.csv", [
        "u1,t1,30,1.0", "u2,t1,40,2.0", "u3,control,35,1.5", "u4,control,25,0.5"])
    ds = ingest(path, SCHEMA)
    assert ds.n_users == 4
    assert ds.treatments == ("t1",)
    assert ds.metrics == ("spend",)
    assert ds.features == ("age",)


def test_ingest_jsonl(tmp_path):
    path = tmp_path / "d.jsonl"
    rows = [
        {"uid": "u1", "group": "t1", "age": 30, "spend": 1.0},
        {"uid": "u2", "group": "control", "age": 40, "spend": 2.0},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    ds = ingest(path, SCHEMA)
    assert ds.n_users == 2


def test_ingest_row_order_irrelevant(tmp_path):
    rows = ["u1,t1,30,1.0", "u2,t1,40,2.0", "u3,control,35,1.5"]
    a = ingest(write_csv(tmp_path / "a.csv", rows), SCHEMA)
    b = ingest(write_csv(tmp_path / "b.csv", rows[::-1]), SCHEMA)
    assert a.user_ids == b.user_ids
    assert [u.outcomes for u in a.users] == [u.outcomes for u in b.users]


def test_missing_column_names_it(tmp_path):
    path = write_csv(tmp_path / "d.csv", ["u1,t1,30"], header="uid,group,age")
    with pytest.raises(SchemaError, match="spend"):
        ingest(path, SCHEMA)


def test_non_numeric_cell_reports_row(tmp_path):
    path = write_csv(tmp_path / "d.csv",
                     ["u1,t1,30,1.0", "u2,control,oops,2.0"])
    with pytest.raises(RowIngestError, match="row 2"):
        ingest(path, SCHEMA)


def test_missing_value_rejected_not_imputed(tmp_path):
    path = write_csv(tmp_path / "d.csv", ["u1,t1,,1.0", "u2,control,40,2.0"])
    with pytest.raises(RowIngestError, match="age"):
        ingest(path, SCHEMA)


def test_non_finite_rejected(tmp_path):
    path = write_csv(tmp_path / "d.csv", ["u1,t1,inf,1.0"])
    with pytest.raises(RowIngestError):
        ingest(path, SCHEMA)


def test_user_in_two_arms_rejected(tmp_path):
    path = write_csv(tmp_path / "d.csv",
                     ["u1,t1,30,1.0", "u1,control,30,1.0"])
    with pytest.raises(IntegrityError, match="u1"):
        ingest(path, SCHEMA)


def test_schema_missing_key():
    with pytest.raises(SchemaError):
        IngestSchema.from_mapping({"arm": "group", "features": ["age"]})


@pytest.mark.parametrize("text,mean,std_err", [
    ("-0.049% ± 0.043", -0.00049, 0.00043),
    ("+0.282% ± 0.074", 0.00282, 0.00074),
    ("+0.036% ± 0.034", 0.00036, 0.00034),
    ("-0.289% ± 0.073", -0.00289, 0.00073),
    ("1.5 ± 0.3", 1.5, 0.3),
    ("2.0 +/- 0.5", 2.0, 0.5),
])
def test_parse_lift_text(text, mean, std_err):
    est = parse_lift_text(text)
    assert est.mean == pytest.approx(mean, abs=1e-12)
    assert est.std_err == pytest.approx(std_err, abs=1e-12)


def test_parse_lift_text_rejects_garbage():
    with pytest.raises(ValueError):
        parse_lift_text("not a lift")


def test_stored_estimates_numeric_and_text(tmp_path):
    path = tmp_path / "est.json"
    path.write_text(json.dumps([
        {"policy_id": "p1", "metric_id": "m1", "mean": 0.5, "std_err": 0.1},
        {"policy_id": "p1", "metric_id": "m2", "estimate": "-0.049% ± 0.043"},
    ]))
    table = load_stored_estimates(path)
    assert table["p1"]["m1"].mean == 0.5
    assert table["p1"]["m2"].mean == pytest.approx(-0.00049)
    assert table["p1"]["m2"].std_err == pytest.approx(0.00043)
