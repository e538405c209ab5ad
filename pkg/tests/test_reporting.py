import json

import jsonschema
import pytest

from mixedqubit.bayes3d import fidelity_3d
from mixedqubit.priors import uniform_prior
from mixedqubit.reporting import (make_document, parse_delimited, serialize, to_delimited, to_json,
                                  validate_document)


class TestDocuments:
    def test_report_rows(self):
        rep = fidelity_3d(3, uniform_prior())
        rows = rep.rows()
        assert [r["row_type"] for r in rows] == ["block", "block", "summary"]
        assert rows[-1]["F"] == rep.F and "vz" in rows[0]
        d = rep.to_dict()
        assert d["N"] == 3 and len(d["per_block"]) == 2

    def test_schema_rejects_unknown_row(self):
        with pytest.raises(jsonschema.ValidationError):
            validate_document(make_document("x", {}, [{"row_type": "bogus"}]))

    def test_schema_rejects_version(self):
        doc = make_document("x", {}, [])
        doc["schema_version"] = "0.9"
        with pytest.raises(jsonschema.ValidationError):
            validate_document(doc)

    def test_non_finite_as_strings(self):
        doc = make_document("x", {}, [{"row_type": "fit", "slope": float("nan"), "A": float("inf")}])
        back = json.loads(to_json(doc))
        assert back["rows"][0]["slope"] == "nan" and back["rows"][0]["A"] == "inf"

    def test_delimited_exact_floats(self):
        vals = [0.1 + 0.2, 1 / 3, 1e-300, 123456789.123456789]
        doc = make_document("x", {}, [{"row_type": "point", "v": v, "empty": None} for v in vals])
        back = parse_delimited(to_delimited(doc))
        assert [r["v"] for r in back["rows"]] == vals
        assert all(r["empty"] is None for r in back["rows"])

    def test_header_required(self):
        with pytest.raises(ValueError):
            parse_delimited("a,b\n1,2\n")

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            serialize(make_document("x", {}, []), "xml")
