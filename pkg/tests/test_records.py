import io
import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ilscale.flops import BC_RULE
from ilscale.records import (
    ExperimentRecord,
    RecordError,
    Setting,
    format_records,
    group_by_budget,
    parse_records,
    select_metric_records,
)


def rec(flops=1e13, params=10_000, samples=1.667e8, loss=1.2, setting="bc_loss", **kw):
    return ExperimentRecord(domain="t", setting=setting, flops=flops, params=params, samples=samples, loss=loss, **kw)


def test_parse_single_jsonl_line():
    line = json.dumps({"domain": "gridworld", "setting": "bc_loss", "flops": 1e13, "params": 1e4,
                       "samples": 1.667e8, "loss": 1.2})
    out = parse_records(line + "\n")
    assert len(out) == 1
    r = out[0]
    assert r.setting is Setting.BC_LOSS and r.params == 10_000 and r.loss == 1.2 and r.mean_return is None


def test_empty_stream():
    assert parse_records("") == []
    assert parse_records(io.StringIO(""), "csv") == []


def test_zero_params_names_line_and_field():
    good = json.dumps({"setting": "bc_loss", "flops": 1, "params": 1, "samples": 1, "loss": 1})
    bad = json.dumps({"setting": "bc_loss", "flops": 1, "params": 0, "samples": 1, "loss": 1})
    with pytest.raises(RecordError, match="params must be ≥ 1") as info:
        parse_records(good + "\n" + bad + "\n")
    assert info.value.line == 2 and info.value.field == "params"


def test_missing_metric_for_setting():
    line = json.dumps({"setting": "bc_return", "flops": 1, "params": 1, "samples": 1, "loss": 1})
    with pytest.raises(RecordError, match="mean_return"):
        parse_records(line)


def test_malformed_json_line():
    with pytest.raises(RecordError, match="line 1"):
        parse_records("{not json\n")


def test_non_numeric_field():
    line = json.dumps({"setting": "bc_loss", "flops": "lots", "params": 1, "samples": 1, "loss": 1})
    with pytest.raises(RecordError, match="flops") as info:
        parse_records(line)
    assert info.value.field == "flops"


def test_unknown_keys_go_to_meta():
    line = json.dumps({"setting": "bc_loss", "flops": 6, "params": 1, "samples": 1, "loss": 1, "width": 8,
                       "meta": {"run": "a"}})
    r = parse_records(line)[0]
    assert r.meta == {"run": "a", "width": "8"}


def test_nonpositive_return_is_flagged_not_rejected(caplog):
    line = json.dumps({"setting": "bc_return", "flops": 6, "params": 1, "samples": 1, "mean_return": -3.0})
    r = parse_records(line)[0]
    assert r.flagged
    assert "nonpositive mean_return" in caplog.text


def test_rule_check():
    r = rec(flops=6 * 10_000 * 2.0, samples=2.0)
    r.check_rule(BC_RULE)
    with pytest.raises(RecordError, match="disagree"):
        rec(flops=1e13, samples=2.0).check_rule(BC_RULE)


def test_group_example():
    records = [rec(flops=1e13), rec(flops=1.0000001e13), rec(flops=1e14)]
    groups = group_by_budget(records, rel_tol=0.01)
    assert [len(g) for g in groups] == [2, 1]
    assert groups[0].budget == pytest.approx(math.sqrt(1e13 * 1.0000001e13))


def test_group_rel_tol_range():
    with pytest.raises(ValueError, match="rel_tol out of range"):
        group_by_budget([rec()], rel_tol=0.6)


def test_group_mixed_settings():
    with pytest.raises(ValueError, match="mixed settings"):
        group_by_budget([rec(), rec(setting="bc_return", mean_return=1.0)])


def test_group_14_by_6_grid():
    records = [rec(flops=c, params=n) for c in (1e13, 1e14, 1e15, 1e16, 1e17, 1e18)
               for n in range(1000, 15000, 1000)]
    groups = group_by_budget(records)
    assert [len(g) for g in groups] == [14] * 6


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(1e3, 1e20), min_size=1, max_size=40), st.floats(1e-6, 0.49))
def test_grouping_is_sorted_partition(flops, tol):
    records = [rec(flops=f, params=i + 1) for i, f in enumerate(flops)]
    groups = group_by_budget(records, tol)
    members = [r for g in groups for r in g.records]
    assert sorted(id(r) for r in members) == sorted(id(r) for r in records)
    assert all(a.budget < b.budget for a, b in zip(groups, groups[1:]))
    for g in groups:
        assert all(abs(r.flops - g.budget) / g.budget <= tol for r in g.records)


def test_group_ties_keep_input_order():
    a, b = rec(params=1), rec(params=2)
    assert group_by_budget([b, a])[0].records == (b, a)


def test_select_metric_records():
    loss_only = rec()
    ret = rec(setting="bc_return", mean_return=2.0)
    assert select_metric_records([loss_only, ret], "loss") == [loss_only]
    assert select_metric_records([loss_only, ret], "return") == [ret]
    both = rec(mean_return=3.0)
    assert select_metric_records([both], "return") == [both]


finite = st.floats(1e-300, 1e300, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from(["bc_loss", "bc_return", "rl_return"]),
    finite, st.integers(1, 10**12), finite,
    st.floats(0, 1e6), st.floats(-1e6, 1e6), st.integers(-10**6, 10**6),
    st.dictionaries(st.text(min_size=1, max_size=5), st.text(max_size=5), max_size=3),
    st.sampled_from(["jsonl", "csv"]),
)
def test_round_trip(setting, flops, params, samples, loss, mean_return, seed, meta, fmt):
    r = ExperimentRecord("dom", setting, flops, params, samples, loss, mean_return, seed, meta)
    text = format_records([r], fmt)
    back = parse_records(text, fmt)
    assert back == [r]
    assert format_records(back, fmt) == text
