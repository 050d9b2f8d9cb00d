from rttcheck.automaton import (
    ACCEPT, compile_table, has_omega_token, initial_tokens, step_tokens,
)
from rttcheck.table import parse_table, validate

from conftest import asset_table


def compiled(text: str):
    table = parse_table(text)
    assert validate(table) == []
    return table, compile_table(table)


def tbl(rows: str) -> str:
    return f"""
table t
traces t
column in t::x : bool
column out t::y : bool
{rows}
"""


# --- structure ----------------------------------------------------------------

def test_bounded_row_becomes_a_copy_chain():
    _, auto = compiled(tbl(
        'row [1,2] { t::x = "-"; t::y = "-"; }\n'
        'row 1 { t::x = "-"; t::y = "-"; }'
    ))
    assert len(auto.states) == 3
    assert auto.stay[0] == (1,)          # second copy of row 0
    assert auto.stay[1] == ()
    assert auto.forward[0] == (2,)       # early exit into row 1
    assert auto.forward[1] == (2,)
    assert auto.initial == (0,)
    assert auto.exits == {2}
    assert not auto.skippable


def test_optional_row_is_skippable_at_entry_and_exit():
    _, auto = compiled(tbl(
        'row [0,1] { t::x = "-"; t::y = "-"; }\n'
        'row [1,-] { t::x = "-"; t::y = "-"; }'
    ))
    assert auto.initial == (0, 1)
    assert auto.stay[1] == (1,)          # unbounded rows idle on themselves
    assert auto.exits == {1}


def test_optional_group_is_bypassed():
    _, auto = compiled(tbl(
        'group [0,1] {\n  row 1 { t::x = "-"; t::y = "-"; }\n}\n'
        'row 1 { t::x = "-"; t::y = "-"; }'
    ))
    assert auto.initial == (0, 1)
    assert auto.forward[0] == (1,)
    assert auto.exits == {1}


def test_omega_group_loops_without_exits():
    _, auto = compiled(tbl(
        'group omega {\n'
        '  row 1 { t::x = "-"; t::y = "-"; }\n'
        '  row 1 { t::x = "-"; t::y = "-"; }\n}'
    ))
    assert auto.exits == frozenset()
    assert auto.forward[1] == (0,)       # back to the top of the loop
    assert all(s.omega for s in auto.states)


def test_repeating_group_back_edges():
    _, auto = compiled(tbl(
        'group [1,-] {\n'
        '  row 1 { t::x = "-"; t::y = "-"; }\n'
        '  row 1 { t::x = "-"; t::y = "-"; }\n}'
    ))
    assert auto.forward[1] == (0,)
    assert auto.exits == {1}
    assert not auto.skippable


def test_stamp_pair_automaton_shape():
    auto = compile_table(_validated(asset_table("stamp_pair.rtt")))
    assert len(auto.states) == 5
    assert auto.initial == (0, 1)        # first row may be skipped
    assert auto.exits == frozenset()     # the loop never ends
    assert all(s.omega for s in auto.states)
    assert auto.states[0].progress
    # Releasing the fault loops back to the start of the comparison.
    assert set(auto.forward[4]) == {0, 1}
    assert set(auto.forward[3]) == {4}


def _validated(table):
    assert validate(table) == []
    return table


# --- token stepping -----------------------------------------------------------

def val(x, y):
    return {("t", "x"): x, ("t", "y"): y}


def test_tokens_survive_and_spawn():
    _, auto = compiled(tbl(
        'row [1,-] { t::x = "FALSE"; t::y = "-"; }\n'
        'row 1 { t::x = "TRUE"; t::y = "TRUE"; }'
    ))
    tokens = initial_tokens(auto)
    res = step_tokens(auto, tokens, [val(False, False)], {})
    assert res.verdict == "continue"
    assert {t.sid for t in res.next_tokens} == {0, 1}


def test_uncovered_when_no_row_fires():
    _, auto = compiled(tbl('row 1 { t::x = "TRUE"; t::y = "-"; }'))
    res = step_tokens(auto, initial_tokens(auto), [val(False, True)], {})
    assert res.verdict == "uncovered"
    assert res.uncovered == (0,)


def test_violation_when_inputs_fire_and_outputs_fail():
    _, auto = compiled(tbl('row 1 { t::x = "TRUE"; t::y = "TRUE"; }'))
    res = step_tokens(auto, initial_tokens(auto), [val(True, False)], {})
    assert res.verdict == "violation"
    assert res.violated[0][0] == 0
    assert res.violated[0][1] == (("t", "y"),)


def test_accept_on_exit_state():
    _, auto = compiled(tbl('row 1 { t::x = "-"; t::y = "-"; }'))
    res = step_tokens(auto, initial_tokens(auto), [val(True, True)], {})
    assert res.verdict == "accept_end"
    assert res.any_accept


def test_mixed_deaths_prefer_violation():
    # One token misses its inputs, the other fails its outputs.
    _, auto = compiled(tbl(
        'row [0,1] { t::x = "TRUE"; t::y = "FALSE"; }\n'
        'row 1 { t::x = "FALSE"; t::y = "-"; }'
    ))
    res = step_tokens(auto, initial_tokens(auto), [val(True, True)], {})
    assert res.verdict == "violation"


def test_progress_prunes_lingering_tokens():
    _, auto = compiled(tbl(
        'row -p { t::x = "-"; t::y = "-"; }\n'
        'row 1 { t::x = "TRUE"; t::y = "-"; }'
    ))
    tokens = initial_tokens(auto)
    # While x stays FALSE the forward alternative cannot fire: lingering ok.
    res = step_tokens(auto, tokens, [val(False, False)], {})
    assert res.verdict == "continue"
    lingering = res.next_tokens
    assert {t.sid for t in lingering} == {0, 1}
    assert any(t.families == frozenset({frozenset({1})}) for t in lingering)
    # Once the alternative fires, the stale explanation is dropped; the
    # fresh token finishes the table on the same step.
    res2 = step_tokens(auto, lingering, [val(True, False)], {})
    assert res2.verdict == "accept_end"
    assert not res2.next_tokens


def test_progress_exit_counts_as_alternative():
    _, auto = compiled(tbl('row [1,-]p { t::x = "-"; t::y = "-"; }'))
    tokens = initial_tokens(auto)
    res = step_tokens(auto, tokens, [val(False, False)], {})
    assert res.verdict == "continue"
    tok = next(iter(res.next_tokens))
    assert tok.families == frozenset({frozenset({ACCEPT})})
    res2 = step_tokens(auto, res.next_tokens, [val(False, False)], {})
    assert res2.verdict == "accept_end"
    assert res2.pruned_accept


def test_omega_tokens_are_flagged():
    _, auto = compiled(tbl('row omega { t::x = "-"; t::y = "-"; }'))
    tokens = initial_tokens(auto)
    assert has_omega_token(auto, tokens)
    res = step_tokens(auto, tokens, [val(True, True)], {})
    assert res.verdict == "continue"
    assert has_omega_token(auto, res.next_tokens)
