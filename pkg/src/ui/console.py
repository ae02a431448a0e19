"""
Rich console rendering of reports, breakdowns and training progress
"""

from contextlib import contextmanager
from typing import Any, Dict, Iterator, Optional

from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.progress import BarColumn, MofNCompleteColumn, Progress, SpinnerColumn, TextColumn, TimeElapsedColumn
from rich.table import Table

from src.core.logger import get_logger
from src.eval.metrics import ErrorBreakdown
from src.eval.report import ReportTable

logger = get_logger(__name__)


class ReportConsole:
    """User-facing output; logging stays on the logger"""

    def __init__(self, console: Optional[Console] = None, err_console: Optional[Console] = None):
        self.console = console or Console()
        self.err_console = err_console or Console(stderr=True)
        self.colors = {
            "primary": "#00D4AA",
            "secondary": "#FF6B6B",
            "accent": "#4ECDC4",
            "warning": "#FFD93D",
            "muted": "#A0A0A0",
        }

    def show_table(self, table: ReportTable) -> None:
        """Median rate per cell, failed seeds in the last column"""
        view = Table(title=f"WER: {table.title}", box=box.ROUNDED, show_header=True)
        view.add_column("Row", style=self.colors["primary"])
        for column in table.columns:
            view.add_column(column, justify="right")
        view.add_column("Failed seeds", style=self.colors["secondary"])

        for row in table.rows:
            cells = []
            for column in table.columns:
                value = table.median(row, column)
                cells.append("-" if value is None else f"{100 * value:.1f}")
            failed = " ".join(str(s) for s in sorted(table.failures[row.label]))
            view.add_row(row.label, *cells, failed)

        self.console.print(view)
        self.console.print(
            f"[{self.colors['muted']}]Medians over seeds {', '.join(map(str, table.seeds))}; "
            f"values in %[/{self.colors['muted']}]"
        )
        self.console.print()

    def show_breakdown(self, breakdown: ErrorBreakdown) -> None:
        self.console.print_json(data=breakdown.to_dict())

    def show_summary(self, title: str, items: Dict[str, Any]) -> None:
        """Key/value panel, e.g. paths written by a command"""
        grid = Table(show_header=False, box=None)
        grid.add_column("Key", style=self.colors["accent"])
        grid.add_column("Value")
        for key, value in items.items():
            grid.add_row(key, str(value))
        self.console.print(Panel(grid, title=title, border_style=self.colors["primary"], padding=(1, 2)))

    def show_error(self, error: str) -> None:
        panel = Panel(
            f"[{self.colors['secondary']}]Error: {error}[/{self.colors['secondary']}]",
            title="Error",
            border_style=self.colors["secondary"],
            padding=(1, 2),
        )
        self.err_console.print(panel)

    @contextmanager
    def progress(self, description: str, total: Optional[int]) -> Iterator[Any]:
        """Progress bar on stderr; yields a callable advancing it by one"""
        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            BarColumn(),
            MofNCompleteColumn(),
            TimeElapsedColumn(),
            console=self.err_console,
            transient=True,
        ) as bar:
            task = bar.add_task(description, total=total)
            yield lambda *_: bar.advance(task)
