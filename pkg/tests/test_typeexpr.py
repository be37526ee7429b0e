import warnings

import pytest

from strictagent import typeexpr as T
from strictagent.typeexpr import TypeExprError, UnknownTypeWarning, conforms, parse_type_expr, parse_type_prefix


@pytest.mark.parametrize("text,expected", [
    ("int", T.Int),
    ("float", T.Float),
    ("str", T.Str),
    ("bool", T.Bool),
    ("code", T.Code),
    ("dict", T.DictAny),
    ("list", T.ListOf(T.Any)),
    ("array", T.ListOf(T.Any)),
    ("List[int]", T.ListOf(T.Int)),
    ("Array[str]", T.ArrayOf(T.Str)),
    ("List[List[float]]", T.ListOf(T.ListOf(T.Float))),
    ("Dict['city', 'year']", T.DictWithKeys(["city", "year"])),
    ("Enum['Positive','Negative']", T.EnumOf(["Positive", "Negative"])),
])
def test_parse(text, expected):
    assert parse_type_expr(text) == expected


def test_array_equals_list():
    assert T.ArrayOf(T.Int) == T.ListOf(T.Int)
    assert str(T.ArrayOf(T.Int)) == "Array[int]"


def test_unknown_name_is_any_with_warning():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        assert parse_type_expr("widget") == T.Any
    assert any(issubclass(w.category, UnknownTypeWarning) for w in caught)


@pytest.mark.parametrize("bad", ["List[int", "List[int]]", "Enum[]", "Dict[]", ""])
def test_grammar_errors(bad):
    with pytest.raises((TypeExprError, ValueError)):
        parse_type_expr(bad)


def test_error_names_position():
    with pytest.raises(TypeExprError) as info:
        parse_type_expr("List[int")
    assert info.value.position is not None


def test_prefix():
    assert parse_type_prefix("int, must be positive") == T.Int
    assert parse_type_prefix("a sentence about things") is None


def test_render_roundtrip():
    for t in [T.ListOf(T.DictWithKeys(["a"])), T.EnumOf(["x", "y"]), T.ArrayOf(T.Code)]:
        assert parse_type_expr(str(t)) == t


def test_invariants():
    with pytest.raises(ValueError):
        T.DictWithKeys([])
    with pytest.raises(ValueError):
        T.EnumOf([])


@pytest.mark.parametrize("value,t,ok", [
    (1, T.Int, True), (True, T.Int, False), (1.5, T.Float, True), (float("nan"), T.Float, False),
    ("x", T.Code, True), ([1, 2], T.ListOf(T.Int), True), ([1, "a"], T.ListOf(T.Int), False),
    ({"a": 1}, T.DictWithKeys(["a"]), True), ({}, T.DictWithKeys(["a"]), False),
    ("A", T.EnumOf(["A"]), True), ("a", T.EnumOf(["A"]), False), (None, T.Any, True),
])
def test_conforms(value, t, ok):
    assert conforms(value, t) is ok
