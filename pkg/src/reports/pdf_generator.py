"""
PDF datasheet for a characterization report
"""
import io
from typing import List, Optional
from xml.sax.saxutils import escape

from reportlab.lib import colors
from reportlab.lib.enums import TA_CENTER
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import PageBreak, Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from src.models.experiment import DetectorSetup
from src.models.report import CharacterizationReport, Estimate

NOT_AVAILABLE = "n/a"


def _fmt(value: Optional[float], scale: float = 1.0, unit: str = "", digits: int = 3) -> str:
    if value is None:
        return NOT_AVAILABLE
    return f"{value * scale:.{digits}g}{(' ' + unit) if unit else ''}"


def _fmt_estimate(estimate: Optional[Estimate]) -> str:
    if estimate is None:
        return NOT_AVAILABLE
    return f"{estimate.value:.3f} ± {estimate.stderr:.3f}"


class DatasheetGenerator:
    def __init__(self):
        self.styles = getSampleStyleSheet()
        self._create_custom_styles()

    def _create_custom_styles(self):
        """Create custom styles for the datasheet"""
        self.styles.add(ParagraphStyle(
            name="SheetTitle",
            parent=self.styles["Title"],
            fontSize=22,
            spaceAfter=24,
            alignment=TA_CENTER,
            textColor=colors.HexColor("#2C3E50"),
        ))

        self.styles.add(ParagraphStyle(
            name="SectionHeader",
            parent=self.styles["Heading1"],
            fontSize=15,
            spaceAfter=10,
            spaceBefore=18,
            textColor=colors.HexColor("#34495E"),
        ))

        self.styles.add(ParagraphStyle(
            name="Detail",
            parent=self.styles["Normal"],
            fontSize=10,
            spaceAfter=5,
            leftIndent=16,
        ))

        self.styles.add(ParagraphStyle(
            name="Footer",
            parent=self.styles["Normal"],
            fontSize=8,
            alignment=TA_CENTER,
            textColor=colors.grey,
        ))

    def generate_datasheet(self, report: CharacterizationReport, setup: DetectorSetup) -> bytes:
        """Render the report as PDF bytes; identical inputs give identical bytes"""
        buffer = io.BytesIO()
        doc = SimpleDocTemplate(
            buffer,
            pagesize=A4,
            rightMargin=72,
            leftMargin=72,
            topMargin=72,
            bottomMargin=72,
            title=f"{setup.name} characterization",
            invariant=True,
        )

        story = []
        story.extend(self._create_title_page(report, setup))
        story.append(PageBreak())
        story.extend(self._create_efficiency_section(report))
        story.extend(self._create_response_section(report))
        story.extend(self._create_noise_section(report))
        story.extend(self._create_appendix(report))

        doc.build(story)

        buffer.seek(0)
        return buffer.getvalue()

    def _metric_table(self, rows: List[List[str]]) -> Table:
        table = Table(rows, colWidths=[3.2 * inch, 2.6 * inch])
        table.setStyle(TableStyle([
            ("BACKGROUND", (0, 0), (0, -1), colors.HexColor("#3498DB")),
            ("TEXTCOLOR", (0, 0), (0, -1), colors.white),
            ("TEXTCOLOR", (1, 0), (1, -1), colors.black),
            ("ALIGN", (0, 0), (-1, -1), "LEFT"),
            ("FONTNAME", (0, 0), (0, -1), "Helvetica-Bold"),
            ("FONTNAME", (1, 0), (1, -1), "Helvetica"),
            ("FONTSIZE", (0, 0), (-1, -1), 10),
            ("GRID", (0, 0), (-1, -1), 1, colors.HexColor("#BDC3C7")),
            ("VALIGN", (0, 0), (-1, -1), "MIDDLE"),
        ]))
        return table

    def _create_title_page(self, report: CharacterizationReport, setup: DetectorSetup) -> List:
        story = []

        story.append(Paragraph("BALANCED HOMODYNE DETECTOR", self.styles["SheetTitle"]))
        story.append(Paragraph(f"<b>{escape(setup.name)}</b>", self.styles["Heading1"]))
        story.append(Spacer(1, 20))

        key_metrics = [
            ["Wavelength", _fmt(setup.lo.wavelength, 1e6, "µm")],
            ["Repetition rate", _fmt(setup.lo.repetition_rate, 1e-6, "MHz")],
            ["Total efficiency", _fmt(report.eta_tot, 100, "%")],
            ["3 dB bandwidth", _fmt(report.bandwidth_3db, 1e-6, "MHz")],
            ["CMRR", _fmt(report.cmrr_db, unit="dB")],
            ["Shot-noise clearance", _fmt(report.clearance_db, unit="dB")],
            ["Saturation onset", _fmt(report.saturation_onset, 1e3, "mW")],
            ["Seed", str(report.seed) if report.seed is not None else NOT_AVAILABLE],
        ]
        key_table = Table(key_metrics, colWidths=[3 * inch, 2.5 * inch])
        key_table.setStyle(TableStyle([
            ("BACKGROUND", (0, 0), (-1, -1), colors.HexColor("#ECF0F1")),
            ("ALIGN", (0, 0), (-1, -1), "LEFT"),
            ("FONTNAME", (0, 0), (0, -1), "Helvetica-Bold"),
            ("FONTSIZE", (0, 0), (-1, -1), 12),
            ("GRID", (0, 0), (-1, -1), 1, colors.HexColor("#BDC3C7")),
            ("ROWBACKGROUNDS", (0, 0), (-1, -1), [colors.white, colors.HexColor("#F8F9FA")]),
        ]))
        story.append(key_table)
        story.append(Spacer(1, 30))

        if report.unavailable:
            story.append(Paragraph(
                f"<i>{len(report.unavailable)} figures could not be extracted from this run; "
                "see the appendix.</i>",
                self.styles["Normal"],
            ))
        return story

    def _create_efficiency_section(self, report: CharacterizationReport) -> List:
        story = [Paragraph("EFFICIENCY", self.styles["SectionHeader"])]
        rows = [
            ["DC efficiency, plus arm", _fmt_estimate(report.eta_total_plus)],
            ["DC efficiency, minus arm", _fmt_estimate(report.eta_total_minus)],
            ["Quantum efficiency", _fmt(report.eta_qe)],
            ["Coupling efficiency", _fmt(report.eta_coup)],
            ["Clearance efficiency", _fmt(report.eta_snr)],
            ["Total efficiency", _fmt(report.eta_tot)],
        ]
        if report.eta_tot_prospective is not None:
            rows.append([
                f"Total efficiency at coupling {report.prospective_coupling:.2f}",
                _fmt(report.eta_tot_prospective),
            ])
        story.append(self._metric_table(rows))
        story.append(Spacer(1, 16))
        return story

    def _create_response_section(self, report: CharacterizationReport) -> List:
        story = [Paragraph("FREQUENCY RESPONSE AND LINEARITY", self.styles["SectionHeader"])]

        fit = report.butterworth
        rows = [
            ["Butterworth p", _fmt(fit.shape.p if fit else None)],
            ["Butterworth f*", _fmt(fit.shape.f_star if fit else None, 1e-6, "MHz")],
            ["Fit R²", _fmt(fit.r_squared if fit else None, digits=4)],
            ["3 dB bandwidth (from DC)", _fmt(report.bandwidth_3db, 1e-6, "MHz")],
            ["3 dB bandwidth (from peak)", _fmt(report.bandwidth_3db_from_peak, 1e-6, "MHz")],
        ]
        for label, bandwidth in sorted(report.closed_form_bandwidth.items()):
            rows.append([f"Closed-form bandwidth ({label})", _fmt(bandwidth, 1e-6, "MHz")])

        linearity = report.linearity
        if linearity is not None:
            rows.extend([
                ["Noise slope", f"{linearity.slope:.4g} V²/Hz/W"],
                ["Linearity R²", _fmt(linearity.r_squared, digits=4)],
                ["Fitted / excluded points", f"{len(linearity.fitted_points)} / {len(linearity.excluded_points)}"],
                ["Shot-noise limited", "yes" if linearity.shot_noise_limited else "no"],
            ])
        rows.append(["Saturation onset", _fmt(report.saturation_onset, 1e3, "mW")])
        story.append(self._metric_table(rows))
        story.append(Spacer(1, 16))
        return story

    def _create_noise_section(self, report: CharacterizationReport) -> List:
        story = [Paragraph("NOISE AND COMMON-MODE REJECTION", self.styles["SectionHeader"])]
        rows = [
            ["CMRR (raw)", _fmt(report.cmrr_raw_db, unit="dB")],
            ["CMRR", _fmt(report.cmrr_db, unit="dB")],
            ["Clearance", _fmt(report.clearance_db, unit="dB")],
            ["Clearance frequency", _fmt(report.clearance_freq, 1e-6, "MHz")],
            ["Clearance LO power", _fmt(report.clearance_power, 1e3, "mW")],
            ["Electronic noise", _fmt(report.electronic_noise_density, 1e12, "pA/rtHz")],
            ["SNEP", _fmt(report.snep, 1e6, "µW")],
        ]
        story.append(self._metric_table(rows))
        story.append(Spacer(1, 16))
        return story

    def _create_appendix(self, report: CharacterizationReport) -> List:
        story = [PageBreak(), Paragraph("APPENDIX", self.styles["SectionHeader"])]

        story.append(Paragraph("<b>Conventions</b>", self.styles["Normal"]))
        for key, value in sorted(report.conventions.items()):
            story.append(Paragraph(f"• {escape(key)}: {escape(value)}", self.styles["Detail"]))

        if report.unavailable:
            story.append(Spacer(1, 10))
            story.append(Paragraph("<b>Unavailable figures</b>", self.styles["Normal"]))
            story.append(Paragraph(escape(", ".join(report.unavailable)), self.styles["Detail"]))

        if report.warnings:
            story.append(Spacer(1, 10))
            story.append(Paragraph("<b>Warnings</b>", self.styles["Normal"]))
            for warning in report.warnings:
                story.append(Paragraph(f"• {escape(warning)}", self.styles["Detail"]))

        story.append(Spacer(1, 30))
        story.append(Paragraph("Generated by homodyne-twin", self.styles["Footer"]))
        return story
