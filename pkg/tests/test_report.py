import json

import pytest
from hypothesis import given, strategies as st

from lmbench import reference
from lmbench.config import ExperimentConfig, config_hash
from lmbench.report import (Cell, Column, Table, ranks, table1, table1_reference, table2, table2_reference,
                            table3, to_markdown, transfer_finding, write_report)
from lmbench.store import DuplicateRunError, ResultsStore


def test_ranks_basic_and_direction():
    assert ranks([3.0, 1.0, 2.0], lower_is_better=True) == [None, "best", "second"]
    assert ranks([3.0, 1.0, 2.0], lower_is_better=False) == ["best", None, "second"]


def test_tie_for_best_bolds_all_underlines_none():
    assert ranks([1.0, 1.0, 2.0], True) == ["best", "best", None]
    # ties judged on displayed precision
    assert ranks([1.001, 1.004, 2.0], True) == ["best", "best", None]


def test_missing_cells():
    assert ranks([None, 2.0, None], True) == [None, "best", None]
    assert ranks([None, None], True) == [None, None]


@given(st.lists(st.one_of(st.none(), st.floats(0, 100, allow_nan=False)), max_size=12), st.booleans())
def test_ranks_properties(vals, lower):
    r = ranks(vals, lower)
    assert len(r) == len(vals)
    shown = [v for v in vals if v is not None]
    if shown:
        assert "best" in r
    assert r.count("second") <= len(vals)
    if r.count("best") > 1:
        assert "second" not in r


def test_markdown_markers_and_trace():
    t = Table("t", ["name"], [Column("x:mre", "MRE", True), Column("x:2mm", "SDR", False)])
    t.rows = [(["a"], {"x:mre": Cell(1.0, run_id="r1"), "x:2mm": Cell(90.0, run_id="r1")}),
              (["b"], {"x:mre": Cell(2.0, run_id="r2")}),
              (["c"], {"x:mre": Cell(3.0, run_id="r3"), "x:2mm": Cell(80.0, run_id="r3")})]
    md = to_markdown(t)
    assert "| a | **1.00** | **90.00** |" in md
    assert "| b | <u>2.00</u> | - |" in md
    assert "| c | 3.00 | <u>80.00</u> |" in md
    assert md.count("<!--") == 5


def test_reference_table1_markers():
    md = to_markdown(table1_reference())
    assert md.count("\n| ") == 8 + 1  # header + 8 rows
    assert "**0.50 ± 0.12**" in md  # Unet++/VGG19 best MRE
    assert "<u>0.60 ± 0.02</u>" in md
    assert "| DeepLabV3 | vgg19" not in md
    assert len(table1([]).rows) == 8


def test_reference_table2_shape():
    t = table2_reference()
    assert len(t.rows) == 10
    filled = sum(1 for _, c in t.rows for k in c if k.endswith(":mre"))
    assert filled == 15
    md = to_markdown(t)
    assert "**0.65**" in md and "**1.45**" in md and "**4.19**" in md


def test_empty_store_warns(tmp_path):
    for tmpl in ("table1", "table2", "table3"):
        res = write_report([], tmpl, tmp_path, with_plot=False)
        assert "warning" in res["markdown"]
        assert res["paths"]["csv"].exists()


def _row(run_id, command, dataset, mre, chain=None, **extra):
    return {"run_id": run_id, "command": command, "dataset": dataset, "chain": chain,
            "metrics": {"mre": mre, "sdr": {}}, **extra}


def test_table2_from_store_rows(tmp_path):
    rows = [_row(f"r{i}", "chain", sig.split(">")[-1], v[0], sig) for i, (sig, v) in
            enumerate(reference.TRANSFER.items())]
    t = table2(rows)
    assert len(t.rows) == 10 and not t.warnings
    res = write_report(rows, "table2", tmp_path, with_plot=True)
    assert res["paths"]["plot"].exists()
    assert "finding" in res["markdown"]


def test_transfer_finding():
    rows = [_row("a", "chain", "hand", 0.65, "imagenet>hand"),
            _row("b", "chain", "hand", 0.70, "imagenet>chest>hand"),
            _row("c", "chain", "head", 1.50, "imagenet>head"),
            _row("d", "chain", "head", 1.30, "imagenet>chest>head")]
    assert transfer_finding(rows) == []
    rows.append(_row("e", "chain", "hand", 0.40, "imagenet>head>hand"))
    assert transfer_finding(rows) == ["imagenet>head>hand"]
    assert transfer_finding([]) is None


def test_published_rows_satisfy_finding():
    rows = [_row(s, "chain", s.split(">")[-1], v[0], s) for s, v in reference.TRANSFER.items()]
    assert transfer_finding(rows) == []


def test_table1_and_table3_from_rows():
    rows = [{"run_id": "cv1", "command": "crossval", "dataset": "hand", "chain": None,
             "model": {"architecture": "unetpp", "encoder": "vgg19"},
             "metrics": {"mre": 0.5, "mre_std": 0.1, "sdr": {"2mm": 98.0}}}]
    md = to_markdown(table1(rows))
    assert "**0.50 ± 0.10**" in md and "cv1" in md
    t3 = to_markdown(table3([_row("t", "train", "hand", 0.7)]))
    assert "This pipeline" in t3 and "Lindner" in t3


def test_store_append_only(tmp_path):
    s = ResultsStore(tmp_path / "r.jsonl")
    s.append("a", "train", "h", "hand", {"mre": 1})
    with pytest.raises(DuplicateRunError):
        s.append("a", "train", "h", "hand", {"mre": 2})
    assert len(s) == 1 and s.has_config("train", "h") and not s.has_config("chain", "h")


def test_config_hash_key_order():
    a = {"seed": 1, "train": {"epochs": 2, "lr_init": 0.1}, "datasets": {"hand": {"root": "x"}}}
    b = json.loads(json.dumps({"datasets": {"hand": {"root": "x"}}, "train": {"lr_init": 0.1, "epochs": 2},
                               "seed": 1}))
    assert config_hash(a) == config_hash(b)
    ca = ExperimentConfig.from_dict(a)
    cb = ExperimentConfig.from_dict(b)
    assert ca.hash == cb.hash
    assert ca.with_overrides(output_dir="elsewhere").hash == ca.hash
    assert ca.with_overrides(seed=2).hash != ca.hash
