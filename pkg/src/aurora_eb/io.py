"""CSV input/output and JSON scenario configuration."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from .core import ReplicateMatrix, validate_matrix
from .errors import Empty, InvalidConfig, ParseError, RaggedRows
from .estimators import DEFAULT_TRIM, MethodOptions, trim_count
from .regressors import DEFAULT_K_MAX
from .simlab import (
    HeteroLikelihood,
    LocationLikelihood,
    NormalPrior,
    ParetoLikelihood,
    PointPrior,
    ScenarioConfig,
    ThreePointPrior,
    UniformPrior,
)


@dataclass(frozen=True)
class ReplicateTable:
    matrix: ReplicateMatrix
    ids: list[str] | None
    header: list[str] | None


def fmt(x: float) -> str:
    """Shortest decimal text that reads back to the same double."""
    return repr(float(x))


def parse_replicates(text: str | TextIO, has_header: bool = False, id_column: bool = False,
                     allow_b2: bool = False) -> ReplicateTable:
    """Parse comma-separated replicates, one unit per line.

    Blank lines are skipped. Line and column numbers in errors are 1-based.
    """
    stream = io.StringIO(text) if isinstance(text, str) else text
    header = None
    ids: list[str] = []
    rows: list[list[float]] = []
    width = None
    for lineno, cells in enumerate(csv.reader(stream), start=1):
        if not cells or all(not c.strip() for c in cells):
            continue
        if has_header and header is None:
            header = [c.strip() for c in cells]
            continue
        if id_column:
            ids.append(cells[0].strip())
            cells = cells[1:]
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise RaggedRows(f"expected {width} values, found {len(cells)}", lineno)
        row = []
        for col, c in enumerate(cells, start=1 + int(id_column)):
            try:
                row.append(float(c))
            except ValueError:
                raise ParseError(f"not a number: {c.strip()!r}", lineno, col) from None
        rows.append(row)
    if not rows:
        raise Empty("no data rows")
    matrix = validate_matrix(np.array(rows, dtype=np.float64), allow_b2=allow_b2)
    if header is not None and id_column:
        header = header[1:]
    return ReplicateTable(matrix, ids if id_column else None, header)


def read_replicates_csv(path, has_header: bool = False, id_column: bool = False,
                        allow_b2: bool = False) -> ReplicateTable:
    with open(path, newline="") as fh:
        return parse_replicates(fh, has_header, id_column, allow_b2)


def write_table(out: TextIO, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_estimates(out: TextIO, columns: dict[str, np.ndarray], ids: Sequence[str] | None = None,
                    id_name: str = "unit_id") -> None:
    """One row per unit in input order; units without IDs are numbered from 0."""
    n = len(next(iter(columns.values())))
    ids = [str(i) for i in range(n)] if ids is None else list(ids)
    names = list(columns)
    rows = ([ids[i]] + [float(columns[m][i]) for m in names] for i in range(n))
    write_table(out, [id_name] + names, rows)


def read_estimates(text: str) -> tuple[list[str], dict[str, np.ndarray]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    ids, vals = [], []
    for row in reader:
        if row:
            ids.append(row[0])
            vals.append([float(v) for v in row[1:]])
    arr = np.array(vals, dtype=np.float64).reshape(len(vals), len(header) - 1)
    return ids, {name: arr[:, c] for c, name in enumerate(header[1:])}


# --------------------------------------------------------------------------
# scenario config documents

_TOP_KEYS = {"n", "B", "reps", "seed", "prior", "likelihood", "methods", "options"}
_REQUIRED = ("n", "B", "prior", "likelihood", "methods")
DEFAULT_REPS = 100
DEFAULT_SEED = 0

_PRIORS = {
    "normal": (NormalPrior, {"mean": 0.0, "var": 1.0}),
    "three_point": (ThreePointPrior, {"var": 1.0}),
    "uniform": (UniformPrior, {"low": 0.0, "high": 1.0}),
    "point": (PointPrior, {"value": 0.0}),
}
_LIKELIHOODS = {
    "normal": (lambda **kw: LocationLikelihood("normal", **kw), {"var": 1.0}),
    "laplace": (lambda **kw: LocationLikelihood("laplace", **kw), {"var": 1.0}),
    "rectangular": (lambda **kw: LocationLikelihood("rectangular", **kw), {"var": 1.0}),
    "pareto": (ParetoLikelihood, {"alpha": 3.0}),
    "hetero": (HeteroLikelihood, {"base": "normal", "var_low": 0.1, "var_high": 1.0,
                                  "mean_link": "independent"}),
}
_OPTION_DEFAULTS = {
    "sigma2": None,
    "k_max": DEFAULT_K_MAX,
    "trim": DEFAULT_TRIM,
    "center": "grand_mean",
    "positive_part": True,
    "holdout": 1,
    "knn_jitter": None,
}


def _check_type(value, kinds, path: str):
    if isinstance(value, bool) and bool not in kinds:
        raise InvalidConfig(f"expected {' or '.join(k.__name__ for k in kinds)}, got a boolean", path)
    if not isinstance(value, kinds):
        raise InvalidConfig(f"expected {' or '.join(k.__name__ for k in kinds)}, "
                            f"got {type(value).__name__}", path)
    if isinstance(value, float) and not math.isfinite(value):
        raise InvalidConfig("must be finite", path)
    return value


def _integer(value, path: str, lo: int) -> int:
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    _check_type(value, (int,), path)
    if value < lo:
        raise InvalidConfig(f"must be >= {lo}, got {value}", path)
    return value


def _family(doc, table, path: str) -> tuple[str, dict]:
    if not isinstance(doc, dict):
        raise InvalidConfig("expected an object", path)
    if "type" not in doc:
        raise InvalidConfig("missing key", f"{path}.type")
    kind = doc["type"]
    if kind not in table:
        raise InvalidConfig(f"unknown type {kind!r}; expected one of {', '.join(table)}", f"{path}.type")
    defaults = table[kind][1]
    params = dict(defaults)
    for k, v in doc.items():
        if k == "type":
            continue
        if k not in defaults:
            raise InvalidConfig("unknown key", f"{path}.{k}")
        kinds = (str,) if isinstance(defaults[k], str) else (int, float)
        _check_type(v, kinds, f"{path}.{k}")
        params[k] = v if kinds == (str,) else float(v)
    return kind, params


def _build(table, kind, params, path):
    try:
        return table[kind][0](**params)
    except InvalidConfig as exc:
        # re-anchor the error under this section's path
        sub = exc.path.split(".", 1)[1] if exc.path and "." in exc.path else None
        msg = str(exc).split(": ", 1)[-1]
        raise InvalidConfig(msg, f"{path}.{sub}" if sub else path) from None


def _options(doc, path: str) -> dict:
    if not isinstance(doc, dict):
        raise InvalidConfig("expected an object", path)
    opts = dict(_OPTION_DEFAULTS)
    for k, v in doc.items():
        p = f"{path}.{k}"
        if k not in opts:
            raise InvalidConfig("unknown key", p)
        if k in ("k_max", "holdout"):
            opts[k] = _integer(v, p, 1)
        elif k == "positive_part":
            opts[k] = _check_type(v, (bool,), p)
        elif k == "center":
            if v not in ("zero", "grand_mean"):
                raise InvalidConfig(f"must be 'zero' or 'grand_mean', got {v!r}", p)
            opts[k] = v
        elif v is None and k in ("sigma2", "knn_jitter"):
            opts[k] = None
        else:
            opts[k] = float(_check_type(v, (int, float), p))
            if k in ("sigma2", "knn_jitter") and not opts[k] > 0:
                raise InvalidConfig(f"must be > 0, got {v}", p)
    try:
        trim_count(10, opts["trim"])
    except ValueError as exc:
        raise InvalidConfig(str(exc), f"{path}.trim") from None
    return opts


def parse_config(doc: dict, seed_override: int | None = None) -> tuple[ScenarioConfig, dict]:
    """Validate a config document; returns the config and the resolved document
    with every default filled in."""
    if not isinstance(doc, dict):
        raise InvalidConfig("top level must be an object", "$")
    for k in doc:
        if k not in _TOP_KEYS:
            raise InvalidConfig("unknown key", k)
    for k in _REQUIRED:
        if k not in doc:
            raise InvalidConfig("missing key", k)
    n = _integer(doc["n"], "n", 1)
    B = _integer(doc["B"], "B", 2)
    reps = _integer(doc.get("reps", DEFAULT_REPS), "reps", 1)
    seed = _integer(doc.get("seed", DEFAULT_SEED), "seed", 0)
    if seed_override is not None:
        seed = seed_override
    pk, pp = _family(doc["prior"], _PRIORS, "prior")
    lk, lp = _family(doc["likelihood"], _LIKELIHOODS, "likelihood")
    prior = _build(_PRIORS, pk, pp, "prior")
    likelihood = _build(_LIKELIHOODS, lk, lp, "likelihood")
    methods = doc["methods"]
    if not isinstance(methods, list) or not methods:
        raise InvalidConfig("expected a non-empty list of method names", "methods")
    for i, m in enumerate(methods):
        _check_type(m, (str,), f"methods[{i}]")
    opts = _options(doc.get("options", {}), "options")
    try:
        trim_count(B, opts["trim"])
    except ValueError as exc:
        raise InvalidConfig(str(exc), "options.trim") from None
    options = MethodOptions(sigma2=opts["sigma2"], k_max=opts["k_max"], trim=opts["trim"],
                            center=opts["center"], positive_part=opts["positive_part"],
                            knn_jitter=opts["knn_jitter"], seed=seed, holdout=opts["holdout"])
    if options.holdout > B:
        raise InvalidConfig(f"must be <= B={B}, got {options.holdout}", "options.holdout")
    config = ScenarioConfig(n, B, reps, seed, prior, likelihood, tuple(methods), options)
    resolved_opts = dict(opts)
    resolved_opts["sigma2"] = config.resolved_options().sigma2
    resolved = {
        "n": n, "B": B, "reps": reps, "seed": seed,
        "prior": {"type": pk, **pp},
        "likelihood": {"type": lk, **lp},
        "methods": list(methods),
        "options": resolved_opts,
    }
    return config, resolved


def load_config(path, seed_override: int | None = None) -> tuple[ScenarioConfig, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    return parse_config(doc, seed_override)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def report_rows(report) -> list[dict]:
    return [{"method": r.method, "mse": r.mse, "se": r.se, "reps": r.reps,
             "se_flag": "single_rep" if r.se_degenerate else ""} for r in report.results]


def write_report_csv(out: TextIO, report) -> None:
    rows = report_rows(report)
    write_table(out, ["method", "mse", "se", "reps", "se_flag"],
                ([r["method"], r["mse"], r["se"], r["reps"], r["se_flag"]] for r in rows))


def report_json(report) -> str:
    return dump_json({"results": report_rows(report)})

