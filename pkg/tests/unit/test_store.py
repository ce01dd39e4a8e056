import random
from unittest.mock import Mock

import pytest

from biparse.agreement import LanguageModels
from biparse.fixtures import pp_projection_models
from biparse.parser import EdgeFactoredModel
from biparse.projection import PathLengthModel
from biparse.store import (
    ModelNotFoundError,
    ModelStore,
    StoreError,
    dump_parser_model,
    dump_path_length_model,
    dump_path_predictor,
    load_parser_model,
    load_path_length_model,
    load_path_predictor,
    store_error_catcher,
)


@pytest.fixture
def random_model():
    rng = random.Random(8)
    weights = {f"hp&dp=T{i}|T{j}": rng.uniform(-1e3, 1e3) for i in range(10) for j in range(10)}
    weights["tiny"] = 1e-300
    weights["third"] = 1 / 3
    return EdgeFactoredModel("en", weights)


class TestTextFormats:
    def test_parser_header(self):
        text = dump_parser_model(EdgeFactoredModel("hi", {"b": 2.0, "a": -0.5}))
        assert text == "biparse-model v1 hi edge-v1\na\t-0.5\nb\t2\n"

    def test_parser_round_trip_is_bit_exact(self, random_model):
        loaded = load_parser_model(dump_parser_model(random_model))
        assert loaded == random_model
        assert all(loaded.weights[name] == value for name, value in random_model.weights.items())

    def test_zero_weights_are_not_written(self):
        assert dump_parser_model(EdgeFactoredModel("en", {"a": 0.0})) == "biparse-model v1 en edge-v1\n"

    def test_path_length_round_trip(self):
        model = PathLengthModel(({"bias": 4.0}, {"t1.form=waali": 3.0}, {}, {}, {"t.dist=5+": -1.25}))
        text = dump_path_length_model(model)
        assert text.splitlines()[1] == "1\tbias\t4"
        assert load_path_length_model(text) == model

    def test_path_predictor_round_trip(self):
        text = dump_path_predictor({"t.dist=1": 1.0}, 2)
        assert text.startswith("biparse-pathpred v1 k=2\n")
        assert load_path_predictor(text, 2) == {"t.dist=1": 1.0}

    @pytest.mark.parametrize("text, message", [
        ("", "expected 'biparse-model v1"),
        ("biparse-model v2 en edge-v1\n", "expected 'biparse-model v1"),
        ("biparse-model v1 en edge-v1\nfeature\n", "line 2: expected feature<TAB>weight"),
        ("biparse-model v1 en edge-v1\na\t1\nb\tlots\n", "line 3: weight 'lots' is not a number"),
    ])
    def test_malformed_parser_model(self, text, message):
        with pytest.raises(ValueError, match=message):
            load_parser_model(text)

    @pytest.mark.parametrize("text, message", [
        ("biparse-pathlen v1\n6\tbias\t1\n", "path length '6'"),
        ("biparse-pathlen v1\nbias\t1\n", "expected k<TAB>feature<TAB>weight"),
        ("biparse-model v1 en edge-v1\n", "expected header"),
    ])
    def test_malformed_path_length_model(self, text, message):
        with pytest.raises(ValueError, match=message):
            load_path_length_model(text)

    def test_predictor_for_other_length(self):
        with pytest.raises(ValueError, match="expected header"):
            load_path_predictor(dump_path_predictor({}, 3), 2)


class TestStoreErrorCatcher:
    @pytest.mark.parametrize("error, expected", [
        (FileNotFoundError("no such file"), ModelNotFoundError),
        (PermissionError("denied"), StoreError),
        (ValueError("bad header"), StoreError),
    ])
    def test_errors_are_wrapped(self, error, expected):
        func = Mock(side_effect=error, __name__="load_something")
        with pytest.raises(expected, match="Error in load_something"):
            store_error_catcher(func)()

    def test_other_errors_pass_through(self):
        func = Mock(side_effect=KeyError("k"), __name__="load_something")
        with pytest.raises(KeyError):
            store_error_catcher(func)()

    def test_result_is_returned(self):
        func = Mock(return_value=42, __name__="load_something")
        assert store_error_catcher(func)("a", key="b") == 42
        func.assert_called_once_with("a", key="b")


class TestModelStore:
    def test_save_and_load_language(self, tmp_path, random_model):
        projection, _ = pp_projection_models()
        store = ModelStore(tmp_path / "models")
        written = store.save_language("en", "hi", LanguageModels(random_model, projection))

        assert [path.name for path in written] == [
            "en.parser", "en-hi.pathlen", "en-hi.pathpred2", "en-hi.pathpred3", "en-hi.pathpred4", "en-hi.pathpred5",
        ]
        loaded = store.load_language("en", "hi")
        assert loaded.parser == random_model
        assert loaded.projection == projection

    def test_parser_only(self, tmp_path, random_model):
        store = ModelStore(tmp_path)
        store.save_parser(random_model)
        assert store.load_language("en", "hi", with_projection=False).projection.is_zero

    def test_missing_model(self, tmp_path):
        with pytest.raises(ModelNotFoundError, match="load_parser"):
            ModelStore(tmp_path).load_parser("en")
        with pytest.raises(ModelNotFoundError, match="load_projection"):
            ModelStore(tmp_path).load_projection("en", "hi")

    def test_malformed_header(self, tmp_path):
        (tmp_path / "en.parser").write_text("not a model\n", encoding="utf-8")
        with pytest.raises(StoreError, match="en.parser line 1"):
            ModelStore(tmp_path).load_parser("en")

    def test_language_mismatch(self, tmp_path):
        (tmp_path / "en.parser").write_text(dump_parser_model(EdgeFactoredModel("hi")), encoding="utf-8")
        with pytest.raises(StoreError, match="holds a model for 'hi'"):
            ModelStore(tmp_path).load_parser("en")
