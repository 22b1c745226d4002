"""Markdown/CSV tables (model grid, transfer chains, prior-work comparison) from the results store."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import reference
from .datasets import SPECS
from .metrics import threshold_label
from .models import ARCHITECTURES, GRID_ENCODERS, UNSUPPORTED
from .transfer import ChainSpec, enumerate_chains

log = logging.getLogger(__name__)

DATASET_ORDER = ("chest", "head", "hand")
ARCH_NAMES = {"unet": "U-net", "unetpp": "U-net++", "deeplabv3": "DeepLabV3"}


@dataclass
class Cell:
    value: float
    std: Optional[float] = None
    run_id: Optional[str] = None


@dataclass
class Column:
    key: str
    title: str
    lower_is_better: bool


@dataclass
class Table:
    title: str
    label_titles: list[str]
    columns: list[Column]
    rows: list[tuple[list[str], dict]] = field(default_factory=list)  # (labels, {col key: Cell})
    warnings: list[str] = field(default_factory=list)

    def cells(self, key: str) -> list[Optional[Cell]]:
        return [cells.get(key) for _, cells in self.rows]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def ranks(values: list[Optional[float]], lower_is_better: bool) -> list[Optional[str]]:
    """'best'/'second' markers per entry, on values as displayed (2 decimals).

    A tie for best marks every tied entry best and nothing second.
    """
    shown = [None if v is None else round(v, 2) for v in values]
    distinct = sorted({v for v in shown if v is not None}, reverse=not lower_is_better)
    out: list[Optional[str]] = [None] * len(values)
    if not distinct:
        return out
    n_best = sum(v == distinct[0] for v in shown)
    for i, v in enumerate(shown):
        if v is None:
            continue
        if v == distinct[0]:
            out[i] = "best"
        elif n_best == 1 and len(distinct) > 1 and v == distinct[1]:
            out[i] = "second"
    return out


def to_markdown(table: Table) -> str:
    header = table.label_titles + [c.title for c in table.columns]
    lines = [f"### {table.title}", "", "| " + " | ".join(header) + " |",
             "|" + "|".join(["---"] * len(table.label_titles) + [":---:"] * len(table.columns)) + "|"]
    marks = {c.key: ranks([None if x is None else x.value for x in table.cells(c.key)], c.lower_is_better)
             for c in table.columns}
    trace = []
    for r, (labels, cells) in enumerate(table.rows):
        out = list(labels)
        for c in table.columns:
            cell = cells.get(c.key)
            if cell is None:
                out.append("-")
                continue
            text = _fmt(cell.value) + (f" ± {_fmt(cell.std)}" if cell.std is not None else "")
            mark = marks[c.key][r]
            if mark == "best":
                text = f"**{text}**"
            elif mark == "second":
                text = f"<u>{text}</u>"
            out.append(text)
            if cell.run_id:
                trace.append(f"<!-- {' / '.join(labels)} | {c.title}: run {cell.run_id} -->")
        lines.append("| " + " | ".join(out) + " |")
    if trace:
        lines.append("")
        lines.extend(trace)
    for w in table.warnings:
        lines.append(f"\n> warning: {w}")
    return "\n".join(lines) + "\n"


def to_csv(table: Table, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        head = list(table.label_titles)
        for c in table.columns:
            head += [c.title, f"{c.title} std", f"{c.title} run_id"]
        w.writerow(head)
        for labels, cells in table.rows:
            row = list(labels)
            for c in table.columns:
                cell = cells.get(c.key)
                row += ["", "", ""] if cell is None else [
                    repr(cell.value), "" if cell.std is None else repr(cell.std), cell.run_id or ""]
            w.writerow(row)
    return path


def dataset_columns(name: str, prefix: bool = True) -> list[Column]:
    spec = SPECS[name]
    unit = spec.metric_unit
    p = f"{name.capitalize()} " if prefix else ""
    cols = [Column(f"{name}:mre", f"{p}MRE ({unit})", True)]
    for t in spec.sdr_thresholds:
        lab = threshold_label(t, unit)
        cols.append(Column(f"{name}:{lab}", f"{p}SDR {lab} (%)", False))
    return cols


def metric_cells(name: str, metrics: dict, run_id: Optional[str] = None) -> dict:
    cells = {f"{name}:mre": Cell(metrics["mre"], metrics.get("mre_std"), run_id)}
    stds = metrics.get("sdr_std") or {}
    for lab, v in metrics.get("sdr", {}).items():
        cells[f"{name}:{lab}"] = Cell(v, stds.get(lab), run_id)
    return cells


def reference_cells(name: str, mre, sdrs, stds=None) -> dict:
    spec = SPECS[name]
    cells = {}
    if isinstance(mre, tuple):
        cells[f"{name}:mre"] = Cell(*mre)
    elif mre is not None:
        cells[f"{name}:mre"] = Cell(mre)
    for i, (t, v) in enumerate(zip(spec.sdr_thresholds, sdrs)):
        cells[f"{name}:{threshold_label(t, spec.metric_unit)}"] = Cell(v, stds[i] if stds else None)
    return cells


def _latest(rows: list[dict], key) -> dict:
    out = {}
    for r in rows:  # store order is chronological; later rows win
        out[key(r)] = r
    return out


def table1(rows: list[dict], dataset: str = "hand") -> Table:
    """Architecture x encoder grid from ``crossval`` rows."""
    t = Table(f"Models and encoder backbones ({dataset}, 5-fold CV)", ["Models", "Backbones"],
              dataset_columns(dataset, prefix=False))
    cv = [r for r in rows if r.get("command") == "crossval" and r.get("dataset") == dataset]
    if not cv:
        t.warnings.append("no crossval rows in store")
    latest = _latest(cv, lambda r: (r["model"]["architecture"], r["model"]["encoder"]))
    encoders = list(GRID_ENCODERS) + sorted({k[1] for k in latest if k[1] not in GRID_ENCODERS})
    for arch in ARCHITECTURES:
        for enc in encoders:
            row = latest.get((arch, enc))
            if (arch, enc) in UNSUPPORTED or (row is None and enc not in GRID_ENCODERS):
                continue
            cells = {} if row is None else metric_cells(dataset, row["metrics"], row["run_id"])
            t.rows.append(([ARCH_NAMES[arch], enc], cells))
    return t


def table1_reference() -> Table:
    t = Table("Models and encoder backbones (hand, published)", ["Models", "Backbones"],
              dataset_columns("hand", prefix=False))
    for arch in ARCHITECTURES:
        for enc in GRID_ENCODERS:
            if (arch, enc) in UNSUPPORTED:
                continue
            ref = reference.MODEL_GRID_HAND.get((arch, enc))
            cells = {} if ref is None else reference_cells(
                "hand", (ref[0], ref[1]), [s for s, _ in ref[2]], [d for _, d in ref[2]])
            t.rows.append(([ARCH_NAMES[arch], enc], cells))
    return t


def _chain_rows() -> list[ChainSpec]:
    """Transfer-table row order: baseline, one-stage sources, then two-stage sources."""
    seen, out = set(), []
    for n in (0, 1, 2):
        for ch in enumerate_chains(DATASET_ORDER, 3):
            if len(ch.sources) == n and ch.label not in seen:
                seen.add(ch.label)
                out.append(ch)
    return out


def table2(rows: list[dict]) -> Table:
    """Transfer chains: one row per source sequence, one column group per target."""
    cols = [c for d in DATASET_ORDER for c in dataset_columns(d)]
    t = Table("Transfer learning strategies", ["Model weights"], cols)
    chain_rows = [r for r in rows if r.get("command") == "chain" and r.get("chain")]
    if not chain_rows:
        t.warnings.append("no chain rows in store")
    latest = _latest(chain_rows, lambda r: r["chain"])
    for proto in _chain_rows():
        cells = {}
        for target in DATASET_ORDER:
            if target in proto.sources:
                continue
            sig = ">".join(("imagenet",) + proto.sources + (target,))
            if sig in latest:
                cells.update(metric_cells(target, latest[sig]["metrics"], latest[sig]["run_id"]))
        t.rows.append(([proto.label], cells))
    return t


def table2_reference() -> Table:
    cols = [c for d in DATASET_ORDER for c in dataset_columns(d)]
    t = Table("Transfer learning strategies (published)", ["Model weights"], cols)
    for proto in _chain_rows():
        cells = {}
        for target in DATASET_ORDER:
            sig = ">".join(("imagenet",) + proto.sources + (target,))
            if sig in reference.TRANSFER:
                mre, sdrs = reference.TRANSFER[sig]
                cells.update(reference_cells(target, mre, sdrs))
        t.rows.append(([proto.label], cells))
    return t


def table3(rows: list[dict]) -> Table:
    """Prior published methods next to this pipeline's ImageNet baselines."""
    cols = [c for d in DATASET_ORDER for c in dataset_columns(d)]
    t = Table("Comparison with published methods", ["Methods"], cols)
    for method, per_ds in reference.PRIOR_METHODS.items():
        cells = {}
        for ds, (mre, sdrs) in per_ds.items():
            cells.update(reference_cells(ds, mre, sdrs))
        t.rows.append(([method], cells))
    ours = {}
    base = [r for r in rows if (r.get("command") == "chain" and r.get("chain") == f"imagenet>{r.get('dataset')}")
            or r.get("command") in ("train", "eval")]
    latest = _latest(base, lambda r: r["dataset"])
    for ds in DATASET_ORDER:
        if ds in latest and latest[ds].get("metrics"):
            ours.update(metric_cells(ds, latest[ds]["metrics"], latest[ds]["run_id"]))
    if not ours:
        t.warnings.append("no baseline rows in store")
    t.rows.append((["This pipeline"], ours))
    return t


def transfer_finding(rows: list[dict], margin: float = 0.1,
                     exception: str = "imagenet>chest>head") -> Optional[list[str]]:
    """Chains that beat their target's ImageNet baseline MRE by more than ``margin``.

    Returns None when no baseline exists for any target, else the list of
    violating chain signatures (empty means the finding holds).
    """
    chain_rows = _latest([r for r in rows if r.get("command") == "chain" and r.get("chain")],
                         lambda r: r["chain"])
    baselines = {sig.split(">")[-1]: r["metrics"]["mre"] for sig, r in chain_rows.items()
                 if sig.count(">") == 1}
    if not baselines:
        return None
    bad = []
    for sig, r in chain_rows.items():
        target = sig.split(">")[-1]
        if sig.count(">") > 1 and sig != exception and target in baselines:
            if baselines[target] - r["metrics"]["mre"] > margin:
                bad.append(sig)
    return bad


TEMPLATES = {"table1": table1, "table2": table2, "table3": table3}


def plot(table: Table, path) -> Optional[Path]:
    """Bar chart of every MRE column of ``table``; one bar group per row."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    mre_cols = [c for c in table.columns if c.key.endswith(":mre")]
    labels = [" / ".join(lab) for lab, _ in table.rows]
    if not labels or not mre_cols:
        return None
    fig, axes = plt.subplots(1, len(mre_cols), figsize=(4 * len(mre_cols), 0.4 * len(labels) + 2),
                             squeeze=False)
    for ax, col in zip(axes[0], mre_cols):
        vals = [c.value if c else float("nan") for c in table.cells(col.key)]
        ax.barh(range(len(labels)), vals)
        ax.set_yticks(range(len(labels)), labels, fontsize=7)
        ax.invert_yaxis()
        ax.set_title(col.title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def write_report(rows: list[dict], template: str, out_dir, with_plot: bool = True) -> dict:
    if template not in TEMPLATES:
        raise ValueError(f"unknown template {template!r}; choose from {sorted(TEMPLATES)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = TEMPLATES[template](rows)
    md = to_markdown(table)
    if template == "table2":
        finding = transfer_finding(rows)
        if finding is not None:
            status = "holds" if not finding else f"violated by {', '.join(finding)}"
            md += f"\nIn-domain transfer finding (no chain beats baseline MRE by > 0.1, except imagenet>chest>head): {status}\n"
    for w in table.warnings:
        log.warning("%s: %s", template, w)
    paths = {"markdown": out_dir / f"{template}.md", "csv": out_dir / f"{template}.csv"}
    paths["markdown"].write_text(md, encoding="utf-8")
    to_csv(table, paths["csv"])
    if with_plot:
        p = plot(table, out_dir / f"{template}_mre.png")
        if p:
            paths["plot"] = p
    return {"table": table, "paths": paths, "markdown": md}
