from typing import Any, Dict, Iterable, List, Optional

import pyfiglet
from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.text import Text
from .config import (
    APP_NAME,
    APP_SLOGAN,
    APP_VERSION,
    STYLE_PRIMARY,
    STYLE_SECONDARY,
    STYLE_ERROR,
    STYLE_PANEL_BORDER,
    STYLE_SUCCESS,
)

# Global Console Instance; stderr so that stdout can carry JSON results
console = Console(stderr=True)


def print_header(detail: Optional[str] = None):
    """
    Banner for long-running commands: figlet logo plus a panel with version,
    slogan and an optional run description (grid size, seed).
    """
    ascii_text = Text(pyfiglet.figlet_format(APP_NAME, font="slant"), style=STYLE_PRIMARY)
    subtitle = f"[bold {STYLE_SECONDARY}]v{APP_VERSION}[/] | {APP_SLOGAN}"
    if detail:
        subtitle += f"\n[dim]{detail}[/]"
    panel = Panel(
        subtitle,
        title=f"[bold {STYLE_PRIMARY}]{APP_NAME}[/]",
        border_style=STYLE_PANEL_BORDER,
        expand=False,
    )

    console.print(ascii_text)
    console.print(panel)
    console.print()


def print_step(title: str, content: str = ""):
    """
    Prints a step header before a computation starts.

    Args:
        title (str): Step title, e.g. "Bootstrapping".
        content (str): Parameters of the step, shown dimmed.
    """
    console.print(f"\n[bold {STYLE_SECONDARY}]➤ {title}[/]")
    if content:
        console.print(f"  [dim]{content}[/]")


def print_success(message: str):
    console.print(f"[bold {STYLE_SUCCESS}]✔ {message}[/]")


def print_error(message: str, hint: Optional[str] = None):
    """Error line for a failed command; ``hint`` is printed dimmed underneath."""
    console.print(f"[{STYLE_ERROR}]✘ {message}[/]")
    if hint:
        console.print(f"  [dim]{hint}[/]")


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.4g}"
    if value is None:
        return "-"
    return str(value)


def print_table(title: str, rows: Iterable[Dict[str, Any]], columns: Optional[List[str]] = None):
    """
    Renders a list of flat dicts as a Rich table.

    Args:
        title (str): Table title.
        rows (Iterable[dict]): One dict per row.
        columns (list): Column order; defaults to the keys of the first row.
    """
    rows = list(rows)
    if not rows:
        console.print(f"[dim]{title}: no rows[/]")
        return
    columns = columns or list(rows[0].keys())
    table = Table(title=title, border_style=STYLE_PANEL_BORDER, title_style=f"bold {STYLE_PRIMARY}")
    for col in columns:
        table.add_column(col, justify="right" if col != columns[0] else "left")
    for row in rows:
        table.add_row(*[_cell(row.get(col)) for col in columns])
    console.print(table)
