import json

import numpy as np
import pytest

from conftest import random_spec
from spongedim.io import (
    SpecFormatError,
    boxes_csv,
    dump_spec,
    dumps,
    load_spec,
    probvector_from_json,
    probvector_to_json,
    read_csv_rows,
    spec_from_dict,
)
from spongedim.measures import ProbVector
from spongedim.model import validate


def test_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    for i in range(20):
        spec = random_spec(rng)
        path = tmp_path / f"s{i}.json"
        path.write_text(dump_spec(spec))
        assert load_spec(path) == spec


def test_offsets_optional_left_packed():
    spec = spec_from_dict({"d": 2, "tree": [{"ratio": 0.5, "children": [{"ratio": 0.2}, {"ratio": 0.3}]}]})
    assert validate(spec).ok
    assert [c.offset for c in spec.tree[0].children] == [0.0, 0.2]


def test_partial_offsets_rejected():
    with pytest.raises(SpecFormatError) as info:
        spec_from_dict({"d": 2, "tree": [{"ratio": 0.5, "children": [{"ratio": 0.2, "offset": 0.0}, {"ratio": 0.3}]}]})
    assert info.value.path == [0]


@pytest.mark.parametrize(
    "data, constraint",
    [
        ([], "type"),
        ({"tree": []}, "schema"),
        ({"d": 1, "tree": []}, "schema"),
        ({"d": 2, "tree": [{"offset": 0}]}, "schema"),
        ({"d": 2, "tree": [{"ratio": "x"}]}, "type"),
    ],
)
def test_malformed(data, constraint):
    with pytest.raises(SpecFormatError) as info:
        spec_from_dict(data)
    assert info.value.constraint == constraint
    assert set(info.value.to_dict()) >= {"path", "constraint", "values"}


def test_bad_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{")
    with pytest.raises(SpecFormatError) as info:
        load_spec(p)
    assert info.value.constraint == "json"


def test_probvector_json(asym):
    p = ProbVector.from_array(asym, [0.2, 0.3, 0.5])
    text = probvector_to_json(p)
    assert json.loads(text) == {"1.1": 0.2, "1.2": 0.3, "2.1": 0.5}
    assert probvector_from_json(asym, text).to_mapping() == p.to_mapping()


def test_dumps_handles_numpy_and_nan():
    out = json.loads(dumps({"a": np.float64(1.5), "b": np.array([1, 2]), "c": float("nan"), "d": np.bool_(True)}))
    assert out == {"a": 1.5, "b": [1, 2], "c": None, "d": True}


def test_boxes_csv():
    text = boxes_csv(np.array([[0.0, 0.5]]), np.array([[0.25, 0.5]]))
    rows = read_csv_rows(text)
    assert list(rows[0]) == ["corner_1", "corner_2", "edge_1", "edge_2"]
    assert float(rows[0]["corner_2"]) == 0.5
