"""
Report generator for GaitForge runs
"""

from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from src.autograd.gradcheck import GradCheckReport
from src.evaluation.retrieval import EvalReport, ShuffleAblation
from src.models.backbone import BackboneConfig, StageShape
from src.models.profiler import FlopReport, format_count
from src.utils.exceptions import ReportGenerationError
from src.utils.logger import get_logger

logger = get_logger(__name__)


def _metric(value: float) -> str:
    return f"{value:.4f}"


class ReportGenerator:
    """Generates markdown reports for GaitForge commands"""

    def __init__(self):
        """Initialize report generator"""
        self.start_time = datetime.now()

    def _header(self, title: str) -> List[str]:
        duration = (datetime.now() - self.start_time).total_seconds()
        return [
            f"# GaitForge - {title}",
            "",
            f"**Run Date:** {self.start_time.strftime('%Y-%m-%d %H:%M:%S')}",
            f"**Duration:** {duration:.2f} seconds",
            "",
        ]

    @staticmethod
    def _status(parts: List[str], errors: Optional[Sequence[str]], warnings: Optional[Sequence[str]]) -> None:
        if warnings:
            parts.append("## Warnings")
            parts.append("")
            parts.extend(f"> {warning}" for warning in warnings)
            parts.append("")
        if errors:
            parts.append("## Errors")
            parts.append("")
            parts.extend(f"> {error}" for error in errors)
            parts.append("")
        parts.append("## Status")
        parts.append("")
        if errors:
            parts.append("**FAILED**")
        elif warnings:
            parts.append("**COMPLETED WITH WARNINGS**")
        else:
            parts.append("**SUCCESS**")
        parts.append("")

    def generate_inspect_report(
        self,
        config: BackboneConfig,
        shapes: Sequence[StageShape],
        params: int,
        params_with_head: Optional[int],
        flops: FlopReport
    ) -> str:
        """
        Model summary: configuration, stage shapes, parameter and FLOP counts

        Args:
            config: Backbone configuration
            shapes: Planned per-stage output shapes
            params: Backbone parameter count
            params_with_head: Parameter count including the head (None when no head was built)
            flops: FLOP report

        Returns:
            Markdown report string
        """
        try:
            parts = self._header(f"Model Inspection ({config.family.value})")
            parts += [
                "## Configuration",
                "",
                f"- **Family:** {config.family.value}",
                f"- **Base channels (C):** {config.base_channels}",
                f"- **Block counts:** {list(config.block_counts)}",
                f"- **Depth:** {config.depth} layers",
                f"- **Parts:** {config.part_count}",
                f"- **Drop path:** {_metric(config.drop_path_rate)}",
                "",
                "## Stage Shapes",
                "",
                "| Stage | Output shape |",
                "|---|---|",
            ]
            parts += [f"| {stage.name} | {' x '.join(str(d) for d in stage.shape)} |" for stage in shapes]
            parts += [
                "",
                "## Size",
                "",
                f"- **Parameters (backbone):** {params} ({format_count(params)})",
                *([f"- **Parameters (with head):** {params_with_head} ({format_count(params_with_head)})"]
                  if params_with_head is not None else []),
                f"- **FLOPs per silhouette:** {flops.total} ({format_count(flops.total)}, {flops.convention})",
                "",
                "| Stage | FLOPs | Share |",
                "|---|---|---|",
            ]
            total = max(flops.total, 1)
            parts += [f"| {name} | {value} | {_metric(value / total)} |" for name, value in flops.per_stage.items()]
            parts.append("")
            return "\n".join(parts)
        except Exception as e:
            logger.error(f"Failed to generate inspect report: {str(e)}")
            raise ReportGenerationError(f"Report generation failed: {str(e)}")

    def generate_eval_report(
        self,
        report: EvalReport,
        checkpoint: Optional[Path] = None,
        errors: Optional[List[str]] = None,
        warnings: Optional[List[str]] = None
    ) -> str:
        """
        Retrieval metrics of one gallery/probe evaluation

        Returns:
            Markdown report string
        """
        try:
            logger.info("Generating evaluation report")
            parts = self._header("Evaluation Report")
            if checkpoint is not None:
                parts += [f"**Checkpoint:** `{checkpoint}`", ""]
            parts += ["## Metrics", ""]
            parts += [f"- **Rank-{k}:** {_metric(v)}" for k, v in report.rank_k.items()]
            parts += [
                f"- **mAP:** {_metric(report.mean_ap)}",
                f"- **Probes evaluated:** {report.num_probes}",
                f"- **Probes excluded (subject absent from gallery):** {len(report.excluded_probes)}",
                f"- **Identical-view exclusion:** {'on' if report.exclude_identical_view else 'off'}",
                "",
            ]
            warnings = list(warnings or [])
            if report.excluded_probes:
                warnings.append(f"{len(report.excluded_probes)} probes had no valid gallery entry of their subject")
            self._status(parts, errors, warnings)
            return "\n".join(parts)
        except Exception as e:
            logger.error(f"Failed to generate report: {str(e)}")
            raise ReportGenerationError(f"Report generation failed: {str(e)}")

    def generate_ablation_report(self, ablation: ShuffleAblation, checkpoint: Optional[Path] = None) -> str:
        """Intact versus shuffled probe accuracy"""
        try:
            parts = self._header("Frame-Shuffle Ablation")
            if checkpoint is not None:
                parts += [f"**Checkpoint:** `{checkpoint}`", ""]
            parts += [
                "## Results",
                "",
                "| Probes | Rank-1 | mAP |",
                "|---|---|---|",
                f"| intact | {_metric(ablation.accuracy)} | {_metric(ablation.intact.mean_ap)} |",
                f"| shuffled | {_metric(ablation.shuffled_accuracy)} | {_metric(ablation.shuffled.mean_ap)} |",
                "",
                f"- **Delta (intact - shuffled):** {_metric(ablation.delta)}",
                "",
            ]
            return "\n".join(parts)
        except Exception as e:
            logger.error(f"Failed to generate ablation report: {str(e)}")
            raise ReportGenerationError(f"Report generation failed: {str(e)}")

    def generate_patch_report(self, fractions: Dict[int, float], frames: int) -> str:
        """Dumb-patch fraction per patch size"""
        parts = self._header("Dumb-Patch Analysis")
        parts += [
            f"**Frames analyzed:** {frames}",
            "",
            "| Patch size | Dumb fraction |",
            "|---|---|",
        ]
        parts += [f"| {size}x{size} | {_metric(value)} |" for size, value in sorted(fractions.items())]
        parts.append("")
        return "\n".join(parts)

    def generate_gradcheck_report(self, results: Dict[str, GradCheckReport]) -> str:
        """Pass/fail table of gradient checks"""
        parts = self._header("Gradient Verification")
        parts += [
            "| Case | Max relative error | Tolerance | Coordinates | Result |",
            "|---|---|---|---|---|",
        ]
        for name, result in results.items():
            verdict = "pass" if result.passed else "FAIL"
            parts.append(
                f"| {name} | {result.max_relative_error:.4e} | {result.tolerance:.0e} "
                f"| {result.checked_coordinates} | {verdict} |"
            )
        parts.append("")
        failed = [name for name, result in results.items() if not result.passed]
        self._status(parts, [f"Gradient check failed: {name}" for name in failed], None)
        return "\n".join(parts)

    def save_report(self, report: str, output_path: Path) -> None:
        """
        Save report to file

        Args:
            report: Report content
            output_path: Path to save report
        """
        try:
            output_path.parent.mkdir(parents=True, exist_ok=True)
            with open(output_path, 'w', encoding='utf-8') as f:
                f.write(report)
            logger.info(f"Report saved to {output_path}")
        except Exception as e:
            logger.error(f"Failed to save report: {str(e)}")
            raise ReportGenerationError(f"Failed to save report: {str(e)}")
