"""
Convert metric, efficiency and benchmark reports to Markdown format
"""

from typing import Any, Dict, List


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    if value is None:
        return "-"
    return str(value)


def _table(rows: List[List[Any]], header: List[str]) -> List[str]:
    md = [f"| {' | '.join(header)} |", f"|{'|'.join('---' for _ in header)}|"]
    for row in rows:
        md.append(f"| {' | '.join(_fmt(cell) for cell in row)} |")
    md.append("")
    return md


def report_to_markdown(report: Dict[str, Any], title: str = "Report") -> str:
    """
    Render a JSON report as Markdown.

    Scalars go into one summary table; nested dictionaries get their own
    section; lists of dictionaries become tables with one row per entry.

    Args:
        report: Report dictionary as emitted by the CLI
        title: Document heading

    Returns:
        Markdown formatted string
    """
    md = [f"# {title}", ""]

    scalars = [[key, value] for key, value in report.items() if not isinstance(value, (dict, list))]
    if scalars:
        md += _table(scalars, ["Metric", "Value"])

    for key, value in report.items():
        if isinstance(value, dict):
            md.append(f"## {key}")
            md.append("")
            flat = [[k, v] for k, v in value.items() if not isinstance(v, (dict, list))]
            md += _table(flat, ["Field", "Value"])
            for sub_key, sub_value in value.items():
                if isinstance(sub_value, dict):
                    md.append(f"### {sub_key}")
                    md.append("")
                    md += _table([[k, v] for k, v in sub_value.items()], ["Field", "Value"])
        elif isinstance(value, list) and value and isinstance(value[0], dict):
            header = list(value[0].keys())
            md.append(f"## {key}")
            md.append("")
            md += _table([[entry.get(h) for h in header] for entry in value], header)
        elif isinstance(value, list):
            md.append(f"**{key}:** {', '.join(_fmt(v) for v in value)}")
            md.append("")

    return "\n".join(md).rstrip() + "\n"
