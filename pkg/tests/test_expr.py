import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mshcap import expr
from mshcap.errors import ConfigError, EvalGuardError

# expressions spanning the whole grammar: literals, all variables, all
# operators and functions, precedence corners, nesting and whitespace
ROUND_TRIP_CASES = [
    "1",
    "1.5",
    "0.25",
    "1e3",
    "2.5e-2",
    "-1",
    "--1",
    "-(-1)",
    "x1",
    "y1",
    "x2",
    "y2",
    "r",
    "r1",
    "r2",
    "1 + 2",
    "1 - 2",
    "2 * 3",
    "8 / 4",
    "2 ^ 3",
    "2+3*4",
    "2*3+4",
    "(2+3)*4",
    "2^3^2",
    "(2^3)^2",
    "2 - 3 - 4",
    "2 - (3 - 4)",
    "12 / 3 / 2",
    "12 / (3 / 2)",
    "2 * -3",
    "-x1 + y1",
    "-(x1 + y1)",
    "-x1^2",
    "(-x1)^2",
    "x1^-2",
    "min(1, 2)",
    "max(-1, -2)",
    "abs(-3)",
    "exp(0)",
    "log(2.718281828459045)",
    "min(x1, max(y1, 0.5))",
    "exp(-r^2)",
    "log(1 + r1^2)",
    "-1 + 0.2*x1",
    "(x1 + y1) * (x1 - y1)",
    "x1^2 + y1^2",
    "1 / (1 + r^2)",
    "max(-1, -2) * exp(0)",
    "min(1, 2+3)",
    "abs(x1 - y1) / 2",
]


def test_corpus_is_large_enough():
    assert len(ROUND_TRIP_CASES) >= 50


@pytest.mark.parametrize("source", ROUND_TRIP_CASES)
def test_parse_print_parse_round_trip(source):
    first = expr.parse(source)
    printed = first.to_source()
    second = expr.parse(printed)
    assert first.tree == second.tree
    assert second.to_source() == printed


def _ev(source, **env):
    e = {k: np.asarray(v, dtype=float) for k, v in env.items()}
    if "x1" not in e:
        e["x1"] = np.asarray(0.0)
    return float(expr.parse(source).evaluate(e))


def test_precedence_values():
    assert _ev("2+3*4") == 14.0
    assert _ev("2^3^2") == 512.0
    assert _ev("(2^3)^2") == 64.0
    assert _ev("2*3+4") == 10.0
    assert _ev("2 - 3 - 4") == -5.0
    assert _ev("12 / 3 / 2") == 2.0
    assert _ev("-2^2") == -4.0


def test_examples_from_interface():
    assert _ev("min(1, 2+3)") == 1.0
    assert _ev("max(-1, -2) * exp(0)") == -1.0
    assert _ev("x1^2 + y1^2", x1=0.3, y1=0.4) == pytest.approx(0.25)


def test_vector_evaluation():
    e = expr.parse("x1 * y1 + 1")
    out = e.evaluate({"x1": np.array([1.0, 2.0]), "y1": np.array([3.0, 0.5])})
    assert np.allclose(out, [4.0, 2.0])


def test_constant_broadcasts_to_nodes():
    out = expr.parse("-1").evaluate({"x1": np.zeros(5)})
    assert out.shape == (5,)
    assert np.all(out == -1.0)


def test_guard_log_nonpositive():
    with pytest.raises(EvalGuardError):
        expr.parse("log(x1)").evaluate({"x1": np.array([1.0, -2.0])})


def test_guard_division_by_zero():
    with pytest.raises(EvalGuardError):
        expr.parse("1 / x1").evaluate({"x1": np.array([0.0])})


def test_guard_fractional_power():
    with pytest.raises(EvalGuardError):
        expr.parse("x1 ^ 0.5").evaluate({"x1": np.array([-1.0])})


def test_parse_errors_carry_position():
    with pytest.raises(ConfigError) as err:
        expr.parse("1 + * 2")
    assert err.value.kind == "parse"
    assert err.value.col is not None
    with pytest.raises(ConfigError):
        expr.parse("foo(1)")
    with pytest.raises(ConfigError):
        expr.parse("min(1)")
    with pytest.raises(ConfigError):
        expr.parse("(1 + 2")


def test_unknown_variable_at_eval():
    with pytest.raises(ConfigError):
        expr.parse("y2 + 1").evaluate({"x1": np.zeros(2)})


def test_variables_reported():
    assert expr.parse("min(x1, r2) - y1").variables() == {"x1", "r2", "y1"}


_leaf = st.sampled_from(["1", "2", "0.5", "x1", "y1", "r"])


@st.composite
def _expr_text(draw, depth=0):
    if depth > 3 or draw(st.booleans()):
        return draw(_leaf)
    op = draw(st.sampled_from(["+", "-", "*", "^"]))
    left = draw(_expr_text(depth + 1))
    right = draw(_expr_text(depth + 1))
    if op == "^":
        right = draw(st.sampled_from(["2", "3"]))
    text = f"{left} {op} {right}"
    if draw(st.booleans()):
        text = f"({text})"
    if draw(st.booleans()):
        text = f"min({text}, {draw(_leaf)})"
    return text


@settings(max_examples=120, deadline=None)
@given(_expr_text())
def test_round_trip_property(source):
    tree = expr.parse(source)
    assert expr.parse(tree.to_source()).tree == tree.tree
