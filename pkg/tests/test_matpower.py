"""Parser and case-model tests, including the serialize round-trip."""

from __future__ import annotations

import pytest

from evgridplan.matpower import (
    BusKind,
    CaseValidationError,
    MalformedBlock,
    MultipleSlackBuses,
    UnknownBusReference,
    UnsupportedCostModel,
    case_to_dict,
    format_case,
    parse_matpower_case,
)

TWO_BUS_TEXT = """
function mpc = tiny
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0  0 0 0 1 1 0 135 1 1.05 0.95;
    2 1 10 4 0 0 1 1 0 135 1 1.05 0.95;
];
mpc.gen = [
    1 20 0 50 -50 1 100 1 100 0;
];
mpc.branch = [
    1 2 0.01 0.1 0 250 250 250 0 0 1;
];
mpc.gencost = [
    2 0 0 3 0.01 2 0;
];
"""


def test_case30_counts(case30):
    # counts of the published 30-bus test case
    assert case30.n == 30
    assert len(case30.gens) == 6
    assert len(case30.branches) == 41
    assert case30.base_mva == 100.0


def test_case30_kinds(case30):
    kinds = {b.id: b.kind for b in case30.buses}
    assert kinds[1] is BusKind.SLACK
    assert kinds[2] is BusKind.GENERATOR
    assert kinds[3] is BusKind.LOAD
    assert sum(1 for b in case30.buses if b.kind is BusKind.SLACK) == 1


def test_case30_gencost_mapping(case30):
    by_bus = {g.bus: g for g in case30.gens}
    assert by_bus[1].a == 0.02 and by_bus[1].b == 2.0 and by_bus[1].c == 0.0
    assert by_bus[22].a == 0.0625


def test_two_bus_minimal():
    case = parse_matpower_case(TWO_BUS_TEXT)
    assert case.n == 2
    assert case.buses[1].pd_mw == 10.0
    assert case.slack_bus().id == 1


def test_two_slack_rows_rejected():
    text = TWO_BUS_TEXT.replace("2 1 10", "2 3 10")
    with pytest.raises(MultipleSlackBuses):
        parse_matpower_case(text)


def test_comments_and_semicolon_rows():
    text = TWO_BUS_TEXT.replace(
        "mpc.branch = [\n    1 2 0.01 0.1 0 250 250 250 0 0 1;",
        "mpc.branch = [ % inline comment\n    1 2 0.01 0.1 0 250 250 250 0 0 1; % tail",
    )
    case = parse_matpower_case(text)
    assert len(case.branches) == 1


class TestParseErrors:
    def test_missing_block(self):
        text = TWO_BUS_TEXT.replace("mpc.gencost", "mpc.other")
        with pytest.raises(MalformedBlock):
            parse_matpower_case(text)

    def test_unterminated_matrix(self):
        text = TWO_BUS_TEXT.replace("mpc.gencost = [\n    2 0 0 3 0.01 2 0;\n];", "mpc.gencost = [\n    2 0 0 3 0.01 2 0;")
        with pytest.raises(MalformedBlock):
            parse_matpower_case(text)

    def test_missing_base_mva(self):
        text = TWO_BUS_TEXT.replace("mpc.baseMVA = 100;", "")
        with pytest.raises(MalformedBlock):
            parse_matpower_case(text)

    def test_piecewise_cost_rejected(self):
        text = TWO_BUS_TEXT.replace("2 0 0 3 0.01 2 0;", "1 0 0 2 0 0 100 250;")
        with pytest.raises(UnsupportedCostModel):
            parse_matpower_case(text)

    def test_cubic_cost_rejected(self):
        text = TWO_BUS_TEXT.replace("2 0 0 3 0.01 2 0;", "2 0 0 4 0.001 0.01 2 0;")
        with pytest.raises(UnsupportedCostModel):
            parse_matpower_case(text)

    def test_gen_on_unknown_bus(self):
        text = TWO_BUS_TEXT.replace("1 20 0 50 -50", "9 20 0 50 -50")
        with pytest.raises((UnknownBusReference, CaseValidationError)):
            parse_matpower_case(text)

    def test_branch_to_unknown_bus(self):
        text = TWO_BUS_TEXT.replace("1 2 0.01", "1 7 0.01")
        with pytest.raises(UnknownBusReference):
            parse_matpower_case(text)

    def test_no_slack(self):
        text = TWO_BUS_TEXT.replace("1 3 0  0", "1 2 0  0")
        with pytest.raises(CaseValidationError):
            parse_matpower_case(text)

    def test_non_numeric_entry(self):
        text = TWO_BUS_TEXT.replace("0.01 0.1", "0.01 abc")
        with pytest.raises(MalformedBlock):
            parse_matpower_case(text)


def test_linear_cost_padded_to_quadratic():
    text = TWO_BUS_TEXT.replace("2 0 0 3 0.01 2 0;", "2 0 0 2 2.5 10;")
    case = parse_matpower_case(text)
    g = case.gens[0]
    assert (g.a, g.b, g.c) == (0.0, 2.5, 10.0)


def test_out_of_service_gen_dropped():
    text = TWO_BUS_TEXT.replace(
        "mpc.gen = [\n    1 20 0 50 -50 1 100 1 100 0;\n];",
        "mpc.gen = [\n    1 20 0 50 -50 1 100 1 100 0;\n    2 5 0 10 -10 1 100 0 10 0;\n];\n",
    ).replace(
        "mpc.gencost = [\n    2 0 0 3 0.01 2 0;\n];",
        "mpc.gencost = [\n    2 0 0 3 0.01 2 0;\n    2 0 0 3 0.02 3 0;\n];",
    )
    case = parse_matpower_case(text)
    assert len(case.gens) == 1


@pytest.mark.parametrize("fixture_name", ["case30", "case6"])
def test_roundtrip_identity(fixture_name, request):
    """parse -> format -> parse reproduces the GridCase exactly."""
    case = request.getfixturevalue(fixture_name)
    assert parse_matpower_case(format_case(case)) == case


def test_case_to_dict_is_json_friendly(case6):
    import json

    d = case_to_dict(case6)
    text = json.dumps(d)
    assert '"slack"' in text
    assert len(d["buses"]) == 6
