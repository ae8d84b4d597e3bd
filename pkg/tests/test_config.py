import math

import pytest

from levelperc.attenuation import exponential, indicator, power_law, tabulated, truncated_power_law
from levelperc.config import (config_hash, emit_config, ensure_drained, kernel_from_config,
                              kernel_to_config, parse_config, take, take_bool,
                              take_float, take_floats, take_int)


class TestParse:
    def test_basic(self):
        cfg = parse_config("a = 1\n# comment\n\nb= two\nc =3.5 # trailing\n")
        assert cfg == {"a": "1", "b": "two", "c": "3.5"}

    def test_duplicate_key(self):
        with pytest.raises(ValueError, match="duplicate"):
            parse_config("a = 1\na = 2\n")

    def test_missing_equals(self):
        with pytest.raises(ValueError, match="key = value"):
            parse_config("just some words\n")

    def test_empty_key(self):
        with pytest.raises(ValueError, match="empty key"):
            parse_config("= 3\n")


class TestEmit:
    def test_sorted_and_canonical(self):
        text = emit_config({"b": "2", "a": "1"})
        assert text == "a = 1\nb = 2\n"
        assert parse_config(text) == {"a": "1", "b": "2"}

    def test_float_and_bool_formatting(self):
        text = emit_config({"x": 0.1, "flag": True})
        assert "x = 0.1" in text and "flag = true" in text

    def test_hash_is_content_hash(self):
        assert config_hash({"a": "1"}) == config_hash({"a": "1"})
        assert config_hash({"a": "1"}) != config_hash({"a": "2"})


class TestTakers:
    def test_take_removes(self):
        cfg = {"a": "1"}
        assert take(cfg, "a") == "1"
        assert cfg == {}
        assert take(cfg, "a", default="d") == "d"
        with pytest.raises(ValueError, match="required"):
            take(cfg, "a", required=True)

    def test_typed(self):
        cfg = {"f": "2.5", "i": "7", "b": "true", "v": "1.0, 2.0,3"}
        assert take_float(cfg, "f") == 2.5
        assert take_int(cfg, "i") == 7
        assert take_bool(cfg, "b") is True
        assert take_floats(cfg, "v") == (1.0, 2.0, 3.0)
        assert cfg == {}

    def test_typed_errors(self):
        with pytest.raises(ValueError, match="number"):
            take_float({"f": "abc"}, "f")
        with pytest.raises(ValueError, match="integer"):
            take_int({"i": "1.5"}, "i")
        with pytest.raises(ValueError, match="true/false"):
            take_bool({"b": "maybe"}, "b")

    def test_ensure_drained(self):
        ensure_drained({})
        with pytest.raises(ValueError, match="alpha, beta"):
            ensure_drained({"beta": "1", "alpha": "2"})


class TestKernelConfig:
    @pytest.mark.parametrize("spec", [
        indicator(radius=0.8, height=2.0),
        exponential(scale=1.3, height=0.5),
        exponential(scale=1.0, cutoff=4.0),
        power_law(scale=0.7, exponent=3.25, capped=False),
        truncated_power_law(scale=0.5, exponent=2.0, cutoff=2.5),
        tabulated([0.5, 1.0, 2.0], [2.0, 1.0, 0.0]),
    ])
    def test_round_trip(self, spec):
        text = emit_config(kernel_to_config(spec))
        back = kernel_from_config(parse_config(text))
        assert back == spec

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="kind"):
            kernel_from_config({"kernel.kind": "gaussian"})

    def test_irrelevant_key_rejected(self):
        cfg = {"kernel.kind": "indicator", "kernel.exponent": "3"}
        with pytest.raises(ValueError, match="exponent"):
            kernel_from_config(cfg)

    def test_leaves_other_keys(self):
        cfg = {"kernel.kind": "exponential", "other": "1"}
        kernel_from_config(cfg)
        assert cfg == {"other": "1"}
