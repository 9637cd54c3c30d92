"""
Export module for tables and curves.

Every tabular result (analysis sweeps, loss curves, evaluation scores,
ablations, gradient checks) goes through a pandas DataFrame so the console
table and the CSV file always carry the same header row.
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import pandas as pd

from config.constants import get_config
from .files import atomic_write_text

config = get_config()


def rows_to_frame(rows: Sequence[Dict[str, object]],
                  columns: Optional[Sequence[str]] = None) -> pd.DataFrame:
    frame = pd.DataFrame(list(rows))
    if columns is not None:
        frame = frame.reindex(columns=list(columns))
    return frame


def format_table(frame: pd.DataFrame, float_digits: int = 3) -> str:
    """Fixed-width console rendering."""
    if frame.empty:
        return "(no rows)"
    return frame.to_string(index=False, float_format=lambda v: f"{v:.{float_digits}f}")


def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Atomically write a CSV with a header row."""
    path = atomic_write_text(path, frame.to_csv(index=False))
    print(f"💾 Table saved to: {path}")
    return path


def loss_curve_frame(curve: pd.DataFrame) -> pd.DataFrame:
    return curve.reindex(columns=list(config.output.loss_curve_columns))


def eval_frame(names: Sequence[str], scores: Sequence[float],
               baseline_scores: Optional[Sequence[float]] = None) -> pd.DataFrame:
    """Per-sample PSNR plus a mean row; the baseline column is empty when absent."""
    baseline = list(baseline_scores) if baseline_scores is not None else [float('nan')] * len(scores)
    frame = pd.DataFrame({'sample': list(names), 'psnr': list(scores), 'baseline_psnr': baseline},
                         columns=list(config.output.eval_columns))
    summary = pd.DataFrame([{'sample': 'mean', 'psnr': frame['psnr'].mean(),
                             'baseline_psnr': frame['baseline_psnr'].mean()}])
    return pd.concat([frame, summary], ignore_index=True)


def print_table(title: str, frame: pd.DataFrame) -> None:
    print(f"\n📊 {title}")
    print(format_table(frame))


def export_table(title: str, rows: List[Dict[str, object]],
                 output_path: Optional[Union[str, Path]] = None) -> pd.DataFrame:
    """Print ``rows`` as a table and optionally save them as CSV."""
    frame = rows_to_frame(rows)
    print_table(title, frame)
    if output_path:
        write_csv(frame, output_path)
    return frame
