"""
Export of run metrics: per-node MSE curves as CSV and a JSON run summary
"""
import json
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, Optional, Union

import numpy as np

from ..exceptions import ExportError, InvalidInputError
from ..utils.logger import get_logger

if TYPE_CHECKING:
    from .harness import RunMetrics

CSV_HEADER = "k,node,mse,stderr"


def _fmt(value: float) -> str:
    # 17 significant digits recover every double exactly
    return f"{float(value):.17g}"


def _json_safe(value: Any) -> Any:
    """Replace inf/nan (including numpy scalars) with None so the document is strict JSON"""
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, (float, np.floating)):
        return float(value) if np.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def dumps_json(document: Dict[str, Any]) -> str:
    """Sorted, indented, strict JSON with a trailing newline"""
    return json.dumps(_json_safe(document), sort_keys=True, indent=2, allow_nan=False) + "\n"


class MetricsFormatService:
    """Converts RunMetrics to the supported file formats"""

    def __init__(self):
        self.logger = get_logger("format_service")
        self.supported_formats = ["csv", "json-summary"]
        self.file_names = {"csv": "mse.csv", "json-summary": "summary.json"}

    def validate_format(self, format_type: str) -> bool:
        return format_type in self.supported_formats

    def to_csv(self, metrics: "RunMetrics") -> str:
        """
        One row per (k, node) with node 1..N, then a `network` row per k

        Returns:
            CSV text with a trailing newline; header only for empty metrics
        """
        lines = [CSV_HEADER]
        mse = np.asarray(metrics.mse)
        if mse.size == 0:
            return CSV_HEADER + "\n"
        stderr = np.asarray(metrics.stderr)
        for k in range(mse.shape[0]):
            for i in range(mse.shape[1]):
                lines.append(f"{k},{i + 1},{_fmt(mse[k, i])},{_fmt(stderr[k, i])}")
            lines.append(f"{k},network,{_fmt(metrics.network_mse[k])},{_fmt(metrics.network_stderr[k])}")
        return "\n".join(lines) + "\n"

    def summary(self, metrics: "RunMetrics") -> Dict[str, Any]:
        gains = metrics.gains
        summary: Dict[str, Any] = {
            "scenario": metrics.scenario,
            "config": metrics.config,
            "seeds": {"master_seed": metrics.master_seed, "replicates": list(range(metrics.replicates))},
            "horizon": metrics.horizon,
            "final_mse": metrics.final_mse(),
            "initial_network_mse": float(metrics.network_mse[0]) if len(metrics.network_mse) else None,
            "a3c_bound": gains.a3c_bound if gains is not None else None,
            "kappa_star": gains.kappa_star if gains is not None else None,
            "kappa": gains.kappa if gains is not None else None,
            "gain_assumptions": gains.model_dump(mode="json") if gains is not None else None,
            "artifact_choice": metrics.artifact_choice,
            "parameter_source": "simulator choice" if metrics.artifact_choice else "configuration",
            "conditions": None,
            "verdicts": {},
        }
        if metrics.conditions is not None:
            summary["conditions"] = metrics.conditions.model_dump(mode="json")
            summary["verdicts"] = {q: r.verdict for q, r in metrics.conditions.reports.items()}
            if metrics.conditions.corollary1 is not None:
                summary["verdicts"]["stationary_graph"] = metrics.conditions.corollary1.verdict
        if gains is not None:
            summary["verdicts"]["gain_size"] = gains.a3c
        return summary

    def to_json_summary(self, metrics: "RunMetrics") -> str:
        return dumps_json(self.summary(metrics))

    def export(self, metrics: "RunMetrics", format_type: str, path: Union[str, Path]) -> Path:
        """
        Write metrics in the given format

        Args:
            metrics: Aggregated run metrics
            format_type: 'csv' or 'json-summary'
            path: Target file

        Returns:
            Path of the written file
        """
        if not self.validate_format(format_type):
            raise InvalidInputError(f"Unsupported format: {format_type}. Supported: {self.supported_formats}")
        content = self.to_csv(metrics) if format_type == "csv" else self.to_json_summary(metrics)
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(content)
        except OSError as e:
            self.logger.error(f"Failed to write {format_type} to {path}: {e}")
            raise ExportError(str(path), e) from e
        self.logger.info(f"Wrote {format_type} to {path}")
        return path

    def write_all(self, metrics: "RunMetrics", directory: Union[str, Path]) -> Dict[str, Path]:
        directory = Path(directory)
        return {fmt: self.export(metrics, fmt, directory / name) for fmt, name in self.file_names.items()}


# Global format service instance
_format_service: Optional[MetricsFormatService] = None


def get_format_service() -> MetricsFormatService:
    global _format_service
    if _format_service is None:
        _format_service = MetricsFormatService()
    return _format_service


def export(metrics: "RunMetrics", format_type: str, path: Union[str, Path]) -> Path:
    return get_format_service().export(metrics, format_type, path)
