"""CSV ingestion into per-site design matrices.

The loader is deliberately small: one flat CSV, one response column, one
site-label column, shared covariate columns, and optional site-specific
covariate columns.  Rows with missing cells among the columns a site
actually uses are dropped (and counted); cells that are present but not
numeric are an error that names the offending row and column.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DataFormatError


@dataclass(frozen=True)
class DataSource:
    """Description of a flat CSV with per-site observations.

    ``site_specific`` is either the string "auto" (for each site keep every
    remaining column that has at least one value at that site), or a mapping
    from site label to the list of that site's extra covariate columns, or
    None for no site-specific covariates.
    """

    path: str
    response: str
    site_col: str
    common_cols: Sequence[str]
    site_specific: Union[str, dict, None] = "auto"
    family: str = "logistic"

    def __post_init__(self):
        if len(self.common_cols) == 0:
            raise ValueError("need at least one common covariate column")
        if isinstance(self.site_specific, str) and self.site_specific != "auto":
            raise ValueError("site_specific must be 'auto', a mapping, or None")


@dataclass(frozen=True)
class LoadedSite:
    label: str
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple
    n_dropped: int


def _parse_cell(raw: str, line_num: int, column: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise DataFormatError(
            f"unparseable value {raw!r} at line {line_num}, column {column!r}"
        ) from None


def load_dataset(source: DataSource) -> list[LoadedSite]:
    """Load and split a CSV into per-site pools, in order of first appearance.

    Each site's design matrix is ``[intercept, common columns..., specific
    columns...]``; the shared-coefficient selector for every site is
    positions ``1..len(common_cols)``.
    """
    try:
        fh = open(source.path, newline="")
    except OSError as exc:
        raise DataFormatError(f"cannot read {source.path}: {exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataFormatError(f"{source.path} has no header row")
        header = list(reader.fieldnames)
        required = [source.response, source.site_col, *source.common_cols]
        missing = [c for c in required if c not in header]
        if missing:
            raise DataFormatError(
                f"{source.path} is missing required columns: {', '.join(missing)}"
            )
        if isinstance(source.site_specific, dict):
            for site, cols in source.site_specific.items():
                absent = [c for c in cols if c not in header]
                if absent:
                    raise DataFormatError(
                        f"site {site!r} names absent columns: {', '.join(absent)}"
                    )
        rows_by_site: dict[str, list] = {}
        for row in reader:
            label = row.get(source.site_col)
            if label is None or label == "":
                raise DataFormatError(
                    f"missing site label at line {reader.line_num}"
                )
            rows_by_site.setdefault(label, []).append((reader.line_num, row))

    if not rows_by_site:
        raise DataFormatError(f"{source.path} contains no data rows")

    auto_pool = [
        c
        for c in header
        if c not in (source.response, source.site_col) and c not in source.common_cols
    ]

    sites = []
    for label in rows_by_site:
        rows = rows_by_site[label]
        if source.site_specific == "auto":
            specific = [
                c for c in auto_pool if any(r.get(c) not in (None, "") for _, r in rows)
            ]
        elif isinstance(source.site_specific, dict):
            specific = list(source.site_specific.get(label, ()))
        else:
            specific = []
        used = [source.response, *source.common_cols, *specific]
        kept_values = []
        n_dropped = 0
        for line_num, row in rows:
            cells = [row.get(c) for c in used]
            if any(c in (None, "") for c in cells):
                n_dropped += 1
                continue
            kept_values.append(
                [_parse_cell(raw, line_num, col) for raw, col in zip(cells, used)]
            )
        if not kept_values:
            raise DataFormatError(f"site {label!r} has no complete rows")
        values = np.asarray(kept_values, dtype=np.float64)
        y = values[:, 0]
        if source.family == "logistic" and not np.all((y == 0.0) | (y == 1.0)):
            bad = y[(y != 0.0) & (y != 1.0)][0]
            raise DataFormatError(
                f"response column {source.response!r} must be binary 0/1 for the "
                f"logistic family; site {label!r} contains {bad!r}"
            )
        X = np.empty((values.shape[0], values.shape[1]))
        X[:, 0] = 1.0
        X[:, 1:] = values[:, 1:]
        sites.append(
            LoadedSite(
                label=label,
                X=X,
                y=y,
                feature_names=("intercept", *source.common_cols, *specific),
                n_dropped=n_dropped,
            )
        )
    return sites
