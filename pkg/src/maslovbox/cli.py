"""Command line front end: ``morse run <config>`` and ``morse sweep <config>``.

Exit codes: 0 success, 2 configuration error, 3 violated assumption,
4 numerical failure, 5 methods disagree or an invariant check failed.

Result documents are deterministic: keys are sorted and floats are written
with ten significant digits.  Wall-clock timings go to a separate
``timings.json`` so that ``result.json`` is byte-identical between runs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .errors import (
    AmbiguousCountError,
    AssumptionViolation,
    ConfigError,
    MaslovError,
    NumericalFailure,
    TransversalityError,
    UnconvergedError,
)
from .fd_oracle import fd_count
from .morse import METHODS, MorseReport, morse_all

log = logging.getLogger("maslovbox")

EXIT_OK, EXIT_CONFIG, EXIT_ASSUMPTION, EXIT_NUMERICAL, EXIT_DISAGREE = 0, 2, 3, 4, 5
DEFECT_LIMIT = 1e-8


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, NumericalFailure):
        return EXIT_NUMERICAL
    if isinstance(exc, (AssumptionViolation, MaslovError)):
        return EXIT_ASSUMPTION
    raise exc


# -- deterministic serialisation ----------------------------------------------


def clean(obj):
    """Plain-Python, fixed-precision copy of a result structure."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return str(x)
        return float(f"{x:.10g}") if x != 0 else 0.0
    if isinstance(obj, (complex, np.complexfloating)):
        return f"{complex(obj).real:.10g}{complex(obj).imag:+.10g}j"
    return obj


def dumps(doc) -> str:
    return json.dumps(clean(doc), sort_keys=True, indent=2) + "\n"


# -- one run ------------------------------------------------------------------


def _invariants(reports: dict) -> dict:
    out = {}
    for name, rep in reports.items():
        if not isinstance(rep, MorseReport):
            continue
        if rep.box is not None and rep.box.closed:
            out[f"{name}_loop_sum_zero"] = rep.box.loop_sum == 0
            out[f"{name}_left_shelf_empty"] = rep.box.indices["left"] == 0
        out[f"{name}_lagrangian_defect_ok"] = rep.diagnostics.get("lagrangian_defect", 0.0) <= DEFECT_LIMIT
        out[f"{name}_unitarity_defect_ok"] = rep.diagnostics.get("unitarity_defect", 0.0) <= DEFECT_LIMIT
    t0, tp = reports.get("target0"), reports.get("targetplus")
    if isinstance(t0, MorseReport) and isinstance(tp, MorseReport) and not t0.degenerate_lambda0:
        # l1(0) against l2(.) versus l1(.) against l2+: opposite indices
        out["right_shelf_identity"] = t0.shelves["right"] == -tp.shelves["right"]
    return out


def _oracle(system, lambda0: float) -> dict:
    try:
        res = fd_count(system, lambda0)
    except AmbiguousCountError as exc:
        return {"status": "ambiguous", "message": str(exc), "lambda0": lambda0}
    except UnconvergedError as exc:
        return {"status": "unconverged", "message": str(exc), "lambda0": lambda0}
    return {
        "status": "ok",
        "count": res.count,
        "lambda0": lambda0,
        "eigenvalues": res.extrapolated[: res.count],
        "L": res.L,
        "N": res.N,
        "margin": res.margin,
    }


def run_cell(cfg: RunConfig, out_dir: Optional[Path] = None, prefix: str = "") -> tuple[dict, int, float]:
    """Run every configured method on one problem.

    Returns ``(document, exit_code, seconds)``.
    """
    t_start = time.perf_counter()
    doc = {"version": __version__, "schema_version": 1, "problem": cfg.problem, "lambda0": cfg.lambda0, "methods": {}}
    try:
        system = cfg.build_system()
        maslov = [m for m in cfg.methods if m in METHODS]
        reports = morse_all(system, cfg.lambda0, maslov, cfg.morse_options()) if maslov else {}
    except (MaslovError, ValueError) as exc:
        if not isinstance(exc, MaslovError):
            exc = ConfigError(str(exc))
        code = exit_code_for(exc)
        doc.update(status="error", error={"type": type(exc).__name__, "message": str(exc)})
        return doc, code, time.perf_counter() - t_start
    for name, rep in reports.items():
        if isinstance(rep, MorseReport):
            doc["methods"][name] = rep.as_dict()
        else:
            pair = getattr(rep, "pair", None) if isinstance(rep, TransversalityError) else None
            doc["methods"][name] = {"status": "skipped", "reason": str(rep), "pair": pair}
    counts = {name: rep.morse_index for name, rep in reports.items() if isinstance(rep, MorseReport)}
    if "oracle" in cfg.methods:
        lam = cfg.lambda0
        shifted = [r.lambda_eff for r in reports.values() if isinstance(r, MorseReport) and r.lambda_eff != r.lambda0]
        if shifted:
            lam = min(shifted)
        try:
            doc["oracle"] = _oracle(system, lam)
        except MaslovError as exc:
            doc["oracle"] = {"status": "error", "message": str(exc)}
        if doc["oracle"].get("status") == "ok":
            counts["oracle"] = doc["oracle"]["count"]
    inv = _invariants(reports)
    agree = len(set(counts.values())) <= 1
    doc["counts"] = counts
    doc["agreement"] = agree
    doc["invariants"] = inv
    doc["morse_index"] = next(iter(counts.values())) if agree and counts else None
    ok = agree and all(inv.values())
    doc["status"] = "ok" if ok else ("disagreement" if not agree else "invariant_failure")
    if out_dir is not None and cfg.trajectories:
        for name, rep in reports.items():
            if isinstance(rep, MorseReport) and rep.box is not None:
                for shelf in ("bottom", "right", "top", "left"):
                    res = getattr(rep.box, shelf)
                    if res is not None:
                        res.path.to_csv(out_dir / f"{prefix}traj_{name}_{shelf}.csv")
    return doc, (EXIT_OK if ok else EXIT_DISAGREE), time.perf_counter() - t_start


# -- sweep ----------------------------------------------------------------------

SHELF_COLUMNS = [f"{m}_{s}" for m in ("target0", "targetplus") for s in ("bottom", "right", "top", "left")]


def _row(index: int, overrides: dict, keys: list, doc: dict) -> dict:
    row = {"index": index}
    for k in keys:
        row[k] = overrides.get(k)
    row["status"] = doc.get("status")
    row["morse_index"] = doc.get("morse_index")
    for m in METHODS:
        r = doc.get("methods", {}).get(m, {})
        row[f"morse_{m}"] = r.get("morse_index", "")
    row["oracle_count"] = doc.get("oracle", {}).get("count", doc.get("oracle", {}).get("status", ""))
    for col in SHELF_COLUMNS:
        m, s = col.split("_")
        row[col] = ((doc.get("methods", {}).get(m, {}) or {}).get("shelves", {}) or {}).get(s, "")
    row["corollary_correction"] = doc.get("methods", {}).get("corollary", {}).get("correction", "")
    flags = []
    for m, r in sorted(doc.get("methods", {}).items()):
        flags += [f"{m}: {f}" for f in r.get("flags", [])]
    if "error" in doc:
        flags.append(doc["error"]["message"])
    row["flags"] = "; ".join(flags)
    return row


def _worker(args):
    cfg, out_dir, prefix = args
    logging.getLogger("maslovbox").setLevel(logging.ERROR)
    return run_cell(cfg, out_dir, prefix)


def run_sweep(cfg: RunConfig, jobs: int = 1, keep_going: bool = False, out_dir: Optional[Path] = None):
    """Run the grid; returns ``(rows, documents, exit_code, timings)`` in grid order."""
    grid = cfg.grid() if cfg.sweep else []
    if cfg.sweep and any(len(v) == 0 for v in cfg.sweep.values()):
        grid = []
    keys = list(cfg.sweep)
    tasks = [(cfg.cell(ov), out_dir, f"cell{i:04d}_") for i, ov in enumerate(grid)]
    rows, docs, timings = [], [], []
    code = EXIT_OK

    def consume(i, result):
        nonlocal code
        doc, c, secs = result
        rows.append(_row(i, grid[i], keys, doc))
        docs.append(doc)
        timings.append(secs)
        if c != EXIT_OK and code == EXIT_OK:
            code = c
        return c == EXIT_OK or keep_going

    if jobs <= 1:
        for i, t in enumerate(tasks):
            if not consume(i, _worker(t)):
                break
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_worker, t) for t in tasks]
            for i, fut in enumerate(futures):
                if not consume(i, fut.result()):
                    for f in futures[i + 1 :]:
                        f.cancel()
                    break
    return rows, docs, code, timings


def _write_table(rows: list, keys: list, stream) -> None:
    cols = ["index"] + keys + ["status", "morse_index"] + [f"morse_{m}" for m in METHODS] + ["oracle_count"] + SHELF_COLUMNS + ["corollary_correction", "flags"]
    w = csv.DictWriter(stream, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)


# -- entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="morse", description="Morse indices of half-line Sturm-Liouville systems via Maslov boxes.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run the configured problem once"), ("sweep", "run the configured parameter grid")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", help="YAML configuration file")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")
        p.add_argument("--tol", type=float, metavar="V", help="truncation settle tolerance (overrides tolerances.settle)")
        p.add_argument("--jobs", type=int, default=1, help="parallel sweep cells (default 1)")
        p.add_argument("--keep-going", action="store_true", help="continue a sweep past failing cells")
        p.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        if args.tol is not None:
            if not args.tol > 0:
                raise ConfigError("--tol must be positive")
            cfg.tolerances["settle"] = args.tol
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg.output_dir
    out_dir = Path(out) if out else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    if args.command == "run":
        doc, code, secs = run_cell(cfg, out_dir)
        text = dumps(doc)
        if out_dir is not None:
            (out_dir / "result.json").write_text(text)
            (out_dir / "timings.json").write_text(dumps({"seconds": secs}))
        else:
            sys.stdout.write(text)
        _report(doc, code)
        return code

    rows, docs, code, timings = run_sweep(cfg, args.jobs, args.keep_going, out_dir)
    keys = list(cfg.sweep)
    if out_dir is not None:
        with open(out_dir / "sweep.csv", "w", newline="") as fh:
            _write_table(rows, keys, fh)
        (out_dir / "sweep.json").write_text(dumps(docs))
        (out_dir / "timings.json").write_text(dumps({"seconds": timings}))
    else:
        buf = io.StringIO()
        _write_table(rows, keys, buf)
        sys.stdout.write(buf.getvalue())
    print(f"{len(rows)} cell(s), exit {code}", file=sys.stderr)
    return code


def _report(doc: dict, code: int) -> None:
    if doc.get("status") == "error":
        print(f"error ({doc['error']['type']}): {doc['error']['message']}", file=sys.stderr)
    else:
        counts = ", ".join(f"{k}={v}" for k, v in sorted(doc.get("counts", {}).items()))
        print(f"Morse index: {doc.get('morse_index')}  [{counts}]  status={doc['status']}", file=sys.stderr)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
