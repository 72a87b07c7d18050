"""Export service for separation reports (CSV, Excel, PDF)."""

import logging
from pathlib import Path
from typing import Dict, Optional, Tuple

import pandas as pd
from reportlab.lib.pagesizes import landscape, letter
from reportlab.lib.styles import getSampleStyleSheet
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from src.core.interfaces import ReportExporter

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
REPORT_COLUMNS = [
    "schema_version",
    "scenario_id",
    "snr_db",
    "speaker",
    "method",
    "sir_db",
    "sdr_db",
    "sir_improvement_db",
    "sdr_improvement_db",
    "stoi",
]


def empty_report() -> pd.DataFrame:
    return pd.DataFrame(columns=REPORT_COLUMNS)


def _ensure_parent(output_path: str) -> Path:
    output_file = Path(output_path)
    output_file.parent.mkdir(parents=True, exist_ok=True)
    return output_file


class CsvExportService:
    """Writes the normative report CSV."""

    @staticmethod
    def export(df: pd.DataFrame, output_path: str) -> str:
        """Export a report to CSV with the fixed column order.

        Args:
            df: Report rows (missing columns are left empty)
            output_path: Output CSV file path

        Returns:
            Path to created CSV file
        """
        output_file = _ensure_parent(output_path)
        report = df.reindex(columns=REPORT_COLUMNS)
        report.to_csv(output_file, index=False, float_format="%.6f", lineterminator="\n")
        print(f"✓ CSV report created: {output_path}")
        return str(output_file.absolute())


class ExcelExportService:
    """Writes the report and its summary to an Excel workbook."""

    def __init__(self, summary: Optional[pd.DataFrame] = None):
        self.summary = summary

    def export(self, df: pd.DataFrame, output_path: str) -> str:
        """Export a report to Excel ("report" sheet, plus "summary" when given).

        Returns:
            Path to created Excel file
        """
        output_file = _ensure_parent(output_path)
        with pd.ExcelWriter(output_file, engine="openpyxl") as writer:
            df.reindex(columns=REPORT_COLUMNS).to_excel(writer, sheet_name="report", index=False)
            if self.summary is not None:
                self.summary.to_excel(writer, sheet_name="summary", index=False)
        print(f"✓ Excel file created: {output_path}")
        return str(output_file.absolute())


class PDFExportService:
    """Renders the report summary as a PDF table."""

    def __init__(self, title: str = "Separation Report"):
        self.title = title

    def export(self, df: pd.DataFrame, output_path: str) -> str:
        """Export a table to PDF.

        Args:
            df: Table to render, usually the per-method summary
            output_path: Output PDF file path

        Returns:
            Path to created PDF file
        """
        output_file = _ensure_parent(output_path)
        doc = SimpleDocTemplate(str(output_file), pagesize=landscape(letter))
        styles = getSampleStyleSheet()
        elements = [Paragraph(self.title, styles["Title"]), Spacer(1, 12)]

        data = [df.columns.tolist()]
        for _, row in df.iterrows():
            data.append([f"{val:.2f}" if isinstance(val, float) else str(val) for val in row.values])

        table = Table(data)
        table.setStyle(TableStyle([
            ("BACKGROUND", (0, 0), (-1, 0), "#4472C4"),
            ("TEXTCOLOR", (0, 0), (-1, 0), "#FFFFFF"),
            ("ALIGN", (0, 0), (-1, -1), "CENTER"),
            ("FONTNAME", (0, 0), (-1, 0), "Helvetica-Bold"),
            ("FONTSIZE", (0, 0), (-1, -1), 9),
            ("GRID", (0, 0), (-1, -1), 0.5, "#000000"),
            ("ROWBACKGROUNDS", (0, 1), (-1, -1), ["#FFFFFF", "#E8E8E8"]),
        ]))
        elements.append(table)
        doc.build(elements)
        print(f"✓ PDF file created: {output_path}")
        return str(output_file.absolute())


def export_report(
    report: pd.DataFrame,
    summary: pd.DataFrame,
    output_dir: Path,
    excel: bool = False,
    pdf: bool = False,
) -> Dict[str, str]:
    """Write report.csv and, on request, report.xlsx and summary.pdf.

    Returns:
        Mapping of format name to written path
    """
    exporters: Dict[str, Tuple[ReportExporter, pd.DataFrame, str]] = {"csv": (CsvExportService(), report, "report.csv")}
    if excel:
        exporters["excel"] = (ExcelExportService(summary), report, "report.xlsx")
    if pdf:
        exporters["pdf"] = (PDFExportService(), summary, "summary.pdf")
    written = {}
    for name, (exporter, table, filename) in exporters.items():
        written[name] = exporter.export(table, str(output_dir / filename))
    return written
