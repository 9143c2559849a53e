"""Table emission (TSV + JSON), bar charts and the run manifest."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ReportError

MANIFEST = "manifest.json"


@dataclass
class Table:
    name: str
    columns: list
    rows: list  # list of lists, first cell is the row label
    meta: dict = field(default_factory=dict)
    chart: bool = False

    def __post_init__(self):
        if not re.fullmatch(r"[A-Za-z0-9_.-]+", self.name):
            raise ReportError(self.name, "table names may only use letters, digits, '_', '-' and '.'")
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ReportError(self.name, f"row {row!r} has {len(row)} cells, expected {len(self.columns)}")


def _cell(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def table_to_tsv(table: Table) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter="\t", lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def read_tsv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh, delimiter="\t"))


def _json_safe(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def table_to_json(table: Table) -> str:
    body = {"name": table.name, "columns": table.columns,
            "rows": [[_json_safe(v) for v in row] for row in table.rows], "meta": table.meta, "chart": table.chart}
    return json.dumps(body, indent=1, sort_keys=True, ensure_ascii=False) + "\n"


def _write(path: Path, data) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(data, bytes):
            path.write_bytes(data)
        else:
            path.write_text(data, encoding="utf-8")
    except OSError as exc:
        raise ReportError(path, str(exc)) from exc
    return path


def bar_chart(table: Table) -> bytes:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = [str(r[0]) for r in table.rows]
    series = table.columns[1:]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * len(labels) * max(1, len(series))), 3.2))
    width = 0.8 / max(1, len(series))
    for k, col in enumerate(series):
        vals = [float(r[k + 1]) if isinstance(r[k + 1], (int, float)) else 0.0 for r in table.rows]
        ax.bar([i + k * width for i in range(len(labels))], vals, width, label=str(col))
    ax.set_xticks([i + width * (len(series) - 1) / 2 for i in range(len(labels))])
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_title(table.name)
    if len(series) > 1:
        ax.legend(fontsize=7)
    fig.tight_layout()
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=80, metadata={"Software": None})
    plt.close(fig)
    return buf.getvalue()


def emit_report(tables, out_dir) -> list:
    """Write ``tables/<name>.tsv`` and ``.json`` (and ``figures/<name>.png`` for chart
    tables) under ``out_dir``. Returns the written paths in a stable order."""
    tables = list(tables)
    if not tables:
        raise ReportError(out_dir, "nothing to report")
    names = [t.name for t in tables]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ReportError(out_dir, f"duplicate table names: {dupes}")
    out = Path(out_dir)
    written = []
    for t in sorted(tables, key=lambda t: t.name):
        written.append(_write(out / "tables" / f"{t.name}.tsv", table_to_tsv(t)))
        written.append(_write(out / "tables" / f"{t.name}.json", table_to_json(t)))
        if t.chart:
            written.append(_write(out / "figures" / f"{t.name}.png", bar_chart(t)))
    return written


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(run_dir, extra: dict | None = None) -> Path:
    """List every file under ``run_dir`` (except the manifest itself) with its sha256."""
    run_dir = Path(run_dir)
    artifacts = {}
    for p in sorted(run_dir.rglob("*")):
        if p.is_file() and p.name != MANIFEST:
            rel = p.relative_to(run_dir).as_posix()
            artifacts[rel] = {"sha256": sha256_file(p), "bytes": p.stat().st_size}
    body = {"format": "culgen-run/1", "artifacts": artifacts, **(extra or {})}
    return _write(run_dir / MANIFEST, json.dumps(body, indent=1, sort_keys=True) + "\n")


def verify_manifest(run_dir) -> list:
    """Return the artifacts whose hash no longer matches (empty when the run is intact)."""
    run_dir = Path(run_dir)
    body = json.loads((run_dir / MANIFEST).read_text(encoding="utf-8"))
    bad = []
    for rel, info in body["artifacts"].items():
        p = run_dir / rel
        if not p.is_file() or sha256_file(p) != info["sha256"]:
            bad.append(rel)
    return bad


# -- converters from in-memory results -------------------------------------------------


def win_table(wt, name: str | None = None, raw: bool = False) -> Table:
    rows_src = wt.raw_rows if raw else wt.rows
    name = name or f"wins_{wt.attribute}_{wt.modality}_{wt.judge_id}" + ("_raw" if raw else "")
    rows = [[topic] + [rows_src[topic][v] for v in wt.values] for topic in rows_src]
    meta = {"judge": wt.judge_id, "modality": wt.modality, "attribute": wt.attribute,
            "normalisation": "all verdicts" if raw else "valid verdicts of complete pairs",
            "excluded_invalid": wt.excluded_invalid, "excluded_incomplete": wt.excluded_incomplete,
            "n_verdicts": wt.n_verdicts}
    return Table(re.sub(r"[^A-Za-z0-9_.-]", "-", name), ["topic"] + list(wt.values), rows, meta, chart=True)


def distribution_table(dt, source: str, name: str | None = None) -> Table:
    name = name or f"demographics_{dt.axis}_{source}"
    labels = list(dt.labels)
    rows = [[topic] + [dt.rows[topic][l] for l in labels] for topic in dt.rows]
    meta = {"axis": dt.axis, "source": source, "counts": {t: dict(c) for t, c in dt.counts.items()},
            "excluded": dt.excluded}
    return Table(re.sub(r"[^A-Za-z0-9_.-]", "-", name), ["topic"] + labels, rows, meta, chart=True)


def ablation_table(rows, name: str = "alignment") -> Table:
    body = [[r.variant, r.average, r.ar_score, r.country_score, r.n] for r in rows]
    return Table(name, ["variant", "average", "ar", "country", "n"], body,
                 {"scorer_note": "toy embedding scorer unless configured otherwise"})


def counts_table(counts: dict, name: str = "country_distribution") -> Table:
    return Table(name, ["country", "count"], [[k, v] for k, v in counts.items()], chart=True)


def metrics_table(metrics: dict, name: str = "annotation_metrics") -> Table:
    return Table(name, ["metric", "value"], [[k, v] for k, v in metrics.items()])


def save_table(table: Table, results_dir) -> Path:
    """Stash a table for a later ``report`` run."""
    return _write(Path(results_dir) / f"{table.name}.json", table_to_json(table))


def load_tables(results_dir) -> list:
    out = []
    for p in sorted(Path(results_dir).glob("*.json")):
        body = json.loads(p.read_text(encoding="utf-8"))
        rows = [[float("nan") if v is None else v for v in row] for row in body["rows"]]
        out.append(Table(body["name"], body["columns"], rows, body.get("meta", {}), body.get("chart", False)))
    return out
