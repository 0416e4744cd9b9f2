"""
Formatting helpers for displaying tables in the terminal.
Used by the CLI to show manifests, selected subsets, metrics reports and
score heatmaps.
"""

import json
from typing import Dict, List, Sequence, Tuple

from rich.console import Console
from rich.table import Table

from business.models.metrics import MetricsReport

console = Console()


# ---------Dataset manifest display----------------------------------------------------------
def display_manifest_table(result: Dict):
    """Show record counts and the published-statistics check."""
    m = result["manifest"]
    check = result["check"]

    table = Table(title=f"Dataset: {m['event_name']}")
    table.add_column("Metric", style="cyan")
    table.add_column("Value", justify="right", style="green")
    table.add_row("Records", str(m["n_records"]))
    table.add_row("Evacuation rate", f"{m['evacuation_rate']:.2%}")
    table.add_row("Variables", str(m["n_variables"]))
    for name, size in result.get("sizes", {}).items():
        table.add_row(f"{name.title()} partition", str(size))
    if check.get("published"):
        table.add_row("Matches published count", _yes_no(check["n_records_match"]))
        table.add_row("Matches published rate", _yes_no(check["rate_match"]))
    console.print(table)

    for note in check.get("notes", []):
        console.print(f"[yellow]{note}[/yellow]")


def _yes_no(flag) -> str:
    return "[green]yes[/green]" if flag else "[red]no[/red]"


# ---------Variable subsets display----------------------------------------------------------
def display_subsets_table(result: Dict):
    """Show the selected variables per perception indicator."""
    subsets = result.get("subsets", [])
    if not subsets:
        console.print("[yellow]No subsets selected[/yellow]")
        return

    table = Table(title="Selected Variables")
    table.add_column("Indicator", style="cyan")
    table.add_column("Theta", justify="right", style="yellow")
    table.add_column("Coverage", justify="right", style="green")
    table.add_column("Variables", style="magenta")

    for s in subsets:
        table.add_row(s["indicator"], f"{s['theta']:.3f}", f"{s['coverage']:.3f}", ", ".join(s["selected"]))

    console.print(table)
    console.print(f"\n[bold green]Utilized ratio: {result['utilized_ratio']:.2%}[/bold green]")


# ----------Metrics display-----------------------------------------------------------
def display_metrics_table(entries: Sequence[Tuple[str, MetricsReport]], title: str = "Evaluation"):
    """One row per (method, class) with the shared summary columns."""
    if not entries:
        console.print("[yellow]No metrics available[/yellow]")
        return

    table = Table(title=title)
    table.add_column("Method", style="cyan")
    table.add_column("Class", style="blue")
    for name in ("Precision", "Recall", "F1", "Accuracy", "Macro F1", "Weighted F1"):
        table.add_column(name, justify="right", style="green")

    for label, report in entries:
        for cls, m in report.per_class.items():
            table.add_row(
                label, cls,
                f"{m.precision:.3f}", f"{m.recall:.3f}", f"{m.f1:.3f}",
                f"{report.accuracy:.3f}", f"{report.macro_f1:.3f}", f"{report.weighted_f1:.3f}",
            )

    console.print(table)
    if len(entries) == 1 and entries[0][1].mse:
        for kind, value in entries[0][1].mse.items():
            console.print(f"[dim]{kind.title()} score MSE:[/dim] {value:.3f}")


# -----------Score heatmap display---------------------------------------------------------------------
def display_heatmap_table(matrix: List[List[int]], title: str):
    """Actual scores down, predicted scores across; the diagonal is highlighted."""
    table = Table(title=title)
    table.add_column("actual \\ predicted", style="cyan")
    for p in range(1, 6):
        table.add_column(str(p), justify="right")

    for a, row in enumerate(matrix):
        cells = [f"[bold green]{n}[/bold green]" if a == p else str(n) for p, n in enumerate(row)]
        table.add_row(str(a + 1), *cells)

    console.print(table)


# ---------Audit and errors display-----------------------------------------------------
def display_audit_table(rows: List[Dict]):
    """Published precision/recall against the F1 recomputed from them."""
    table = Table(title="Published F1 Audit")
    table.add_column("Method", style="cyan")
    table.add_column("Class", style="blue")
    table.add_column("Published F1", justify="right")
    table.add_column("Recomputed F1", justify="right")
    table.add_column("Consistent", justify="center")

    for r in rows:
        table.add_row(r["method"], r["class"], f"{r['published_f1']:.3f}",
                      f"{r['recomputed_f1']:.3f}", _yes_no(r["consistent"]))

    console.print(table)


def print_error(error: Dict):
    """Machine-readable error JSON on stdout."""
    console.print_json(json.dumps(error, sort_keys=True))
