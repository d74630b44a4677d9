"""Command-line harness.

Exit codes: 0 all checks pass, 1 a check fails, 2 invalid configuration,
3 an iterative norm did not converge.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .arrays import (
    ArrayAssignment,
    distinctness_array,
    evaluate_f,
    find_violation,
    ksum_array,
    read_array_file,
    array_from_tuples,
)
from .construction import build_gamma_tilde, column_symbols, legal_mask, make_instance
from .hamming import make_eigenbasis
from .operators import InvalidParameterError, TooLargeError
from .reduction import certify_reduction
from .spectral import DEFAULT_MAX_ITER, DEFAULT_SEED, DEFAULT_TOL, choose_mode, lemma_bounds

log = logging.getLogger(__name__)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NOCONV = 0, 1, 2, 3
# the symmetric reduction works on (|D| x |D|) dense matrices
REDUCTION_CAP = 2**24
SCALING_COLUMNS = [
    "n", "k", "q", "mode", "witness", "norm_gamma", "norm_gamma_tilde_1",
    "max_delta_norm", "ratio", "certified_bound", "legal_fraction",
    "runtime_ms", "pass", "error",
]


@dataclass
class RunConfig:
    n: int
    k: int
    q: int
    array: str = "ksum"
    t: int = 0
    mode: str = "auto"
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    seed: int = DEFAULT_SEED
    array_file: str | None = None


class ConfigError(Exception):
    pass


def _build_array(cfg: RunConfig):
    """Return ``(array or None, diagnostic or None)``; raise ConfigError on bad input."""
    if cfg.array == "ksum":
        try:
            return ksum_array(cfg.q, cfg.k, cfg.t), None
        except InvalidParameterError as exc:
            raise ConfigError(str(exc)) from None
    if cfg.array == "distinctness":
        if cfg.k != 2:
            raise ConfigError("the distinctness array has k = 2")
        return distinctness_array(cfg.q), None
    if cfg.array == "file":
        if not cfg.array_file:
            raise ConfigError("--array-file is required with --array file")
        try:
            tuples = read_array_file(cfg.array_file, cfg.q, cfg.k)
        except (OSError, InvalidParameterError) as exc:
            raise ConfigError(str(exc)) from None
        problem = find_violation(tuples, cfg.k, cfg.q)
        if problem is not None:
            return None, problem
        return array_from_tuples(tuples, cfg.k, cfg.q), None
    raise ConfigError(f"unknown array kind {cfg.array!r}")


def _validate(cfg: RunConfig) -> None:
    if cfg.k < 1 or cfg.n < cfg.k:
        raise ConfigError(f"need n >= k >= 1, got n={cfg.n}, k={cfg.k}")
    if cfg.q < 2:
        raise ConfigError(f"need q >= 2, got q={cfg.q}")
    if cfg.mode not in ("dense", "structured", "auto"):
        raise ConfigError(f"unknown mode {cfg.mode!r}")
    if not cfg.tol > 0 or cfg.max_iter < 1:
        raise ConfigError("tol must be positive and max_iter at least 1")


def _reduction_section(inst) -> dict:
    mask = legal_mask(inst)
    gt_op = build_gamma_tilde(inst)
    labels_0 = column_symbols(inst.n, inst.q)[mask.legal]
    labels_1 = np.unique(gt_op.row_symbols(), axis=0)
    size = len(labels_0) + len(labels_1)
    if size * size > REDUCTION_CAP:
        return {"skipped": f"symmetric matrix would be {size}x{size}"}
    g = gt_op.dense()[:, mask.legal]
    rows = gt_op.row_symbols()
    f_values = np.array(
        [evaluate_f(tuple(x), inst.assignment, inst.n, inst.k) for x in np.vstack([labels_0, labels_1])]
    )
    cert = certify_reduction(g, rows, labels_0, f_values=f_values)
    out = asdict(cert)
    out["passed"] = cert.passed
    return out


def cmd_verify(cfg: RunConfig) -> tuple[dict | None, int, str]:
    """Run the full verification; returns ``(report, exit code, diagnostic)``."""
    t0 = time.perf_counter()
    try:
        _validate(cfg)
        array, problem = _build_array(cfg)
    except ConfigError as exc:
        return None, EXIT_CONFIG, str(exc)
    report: dict = {
        "tool": {"name": "ksum-adversary", "version": __version__},
        "config": asdict(cfg),
        "array": {"valid": problem is None, "diagnostic": problem},
    }
    if problem is not None:
        report["summary"] = {"passed": False, "failed_checks": ["array"], "converged": True}
        report["timings"] = {"total_s": time.perf_counter() - t0}
        return report, EXIT_FAIL, f"not an orthogonal array: {problem}"
    report["array"]["size"] = len(array)

    inst = make_instance(cfg.n, cfg.k, cfg.q, ArrayAssignment(uniform=array))
    try:
        mode = choose_mode(inst, cfg.mode)
        legal_mask(inst)
    except (TooLargeError, InvalidParameterError) as exc:
        return None, EXIT_CONFIG, str(exc)

    t1 = time.perf_counter()
    lemmas = lemma_bounds(inst, mode, tol=cfg.tol, max_iter=cfg.max_iter, seed=cfg.seed)
    t2 = time.perf_counter()
    report["mode"] = mode
    report["lemmas"] = lemmas.to_dict()
    report["lemmas"]["flags"] = lemmas.flags
    failed = [name for name, ok in lemmas.flags.items() if not ok]

    if mode == "dense":
        report["adversary_value"] = {
            "norm": lemmas.norm_gamma,
            "max_delta_norm": lemmas.max_norm_gamma_delta,
            "ratio": lemmas.ratio,
        }
        reduction = _reduction_section(inst)
        report["reduction"] = reduction
        if not reduction.get("skipped") and not reduction["passed"]:
            failed.append("reduction")
    else:
        report["adversary_value"] = None
        report["reduction"] = {"skipped": "structured mode"}
    t3 = time.perf_counter()

    converged = lemmas.converged
    report["summary"] = {"passed": not failed and converged, "failed_checks": failed, "converged": converged}
    report["timings"] = {"lemmas_s": t2 - t1, "reduction_s": t3 - t2, "total_s": t3 - t0}
    if not converged:
        return report, EXIT_NOCONV, "an iterative norm did not converge"
    if failed:
        return report, EXIT_FAIL, "failed: " + ", ".join(failed)
    return report, EXIT_OK, "all checks passed"


def _q_for(n: int, k: int, q_rule: str) -> int:
    if q_rule == "nk":
        return n**k
    return int(q_rule)


def scaling_row(n: int, k: int, q: int, mode: str = "auto", tol: float = DEFAULT_TOL,
                max_iter: int = DEFAULT_MAX_ITER, seed: int = DEFAULT_SEED) -> dict:
    row = {c: "" for c in SCALING_COLUMNS}
    row.update(n=n, k=k, q=q)
    t0 = time.perf_counter()
    try:
        inst = make_instance(n, k, q)
        rep = lemma_bounds(inst, mode, tol=tol, max_iter=max_iter, seed=seed)
    except (InvalidParameterError, TooLargeError, MemoryError) as exc:
        row.update(mode=mode, runtime_ms=round(1000 * (time.perf_counter() - t0), 3),
                   **{"pass": False, "error": str(exc)})
        return row
    dense = rep.mode == "dense"
    row.update(
        mode=rep.mode,
        witness=rep.witness_value,
        norm_gamma=rep.norm_gamma,
        norm_gamma_tilde_1=rep.norm_gamma_tilde_1,
        max_delta_norm=rep.max_norm_gamma_delta if dense else "",
        ratio=rep.ratio if dense else "",
        certified_bound=rep.certified_ratio_lower_bound,
        legal_fraction=rep.legal_fraction,
        runtime_ms=round(1000 * (time.perf_counter() - t0), 3),
        **{"pass": rep.all_passed and rep.converged,
           "error": "" if rep.converged else "iterative norm did not converge"},
    )
    return row


def cmd_scaling(k: int, n_list: list[int], q_rule: str, out, mode: str = "auto",
                tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                seed: int = DEFAULT_SEED) -> list[dict]:
    """One CSV row per ``n``; failures are recorded in the row and the run goes on."""
    rows = []
    for n in n_list:
        try:
            q = _q_for(n, k, q_rule)
        except ValueError:
            raise ConfigError(f"q rule must be 'nk' or an integer, got {q_rule!r}") from None
        rows.append(scaling_row(n, k, q, mode, tol, max_iter, seed))
        log.info("n=%d q=%d done in %s ms", n, q, rows[-1]["runtime_ms"])
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SCALING_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return rows


def cmd_oa_check(path, q: int, k: int) -> tuple[int, str]:
    try:
        tuples = read_array_file(path, q, k)
    except (OSError, InvalidParameterError) as exc:
        return EXIT_CONFIG, f"parse error: {exc}"
    problem = find_violation(tuples, k, q)
    if problem is None:
        return EXIT_OK, f"orthogonal array: {len(tuples)} tuples, k={k}, q={q}"
    return EXIT_FAIL, f"not an orthogonal array: {problem}"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ksum-adversary", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="construct an instance and check every inequality")
    v.add_argument("--n", type=int, required=True)
    v.add_argument("--k", type=int, required=True)
    v.add_argument("--q", type=int, required=True)
    v.add_argument("--array", choices=["ksum", "distinctness", "file"], default="ksum")
    v.add_argument("--t", type=int, default=0, help="k-sum target in Z_q")
    v.add_argument("--mode", choices=["dense", "structured", "auto"], default="auto")
    v.add_argument("--tol", type=float, default=DEFAULT_TOL)
    v.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    v.add_argument("--seed", type=int, default=DEFAULT_SEED)
    v.add_argument("--array-file")
    v.add_argument("--out", help="also write the JSON report here")

    s = sub.add_parser("scaling", help="tabulate bounds over several n")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--n", type=int, nargs="*", default=[], dest="n_list")
    s.add_argument("--q-rule", default="nk", help="'nk' for q = n^k, or a fixed integer")
    s.add_argument("--out", required=True)
    s.add_argument("--mode", choices=["dense", "structured", "auto"], default="auto")
    s.add_argument("--tol", type=float, default=DEFAULT_TOL)
    s.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)

    o = sub.add_parser("oa-check", help="verify an orthogonal array file")
    o.add_argument("file")
    o.add_argument("--q", type=int, required=True)
    o.add_argument("--k", type=int, required=True)

    b = sub.add_parser("basis-dump", help="print the eigenbasis of J_q as JSON")
    b.add_argument("--q", type=int, required=True)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "verify":
            cfg = RunConfig(args.n, args.k, args.q, args.array, args.t, args.mode,
                            args.tol, args.max_iter, args.seed, args.array_file)
            report, code, message = cmd_verify(cfg)
            if report is not None:
                text = json.dumps(report, indent=2)
                print(text)
                if args.out:
                    Path(args.out).write_text(text + "\n")
            print(message, file=sys.stderr)
            return code
        if args.command == "scaling":
            rows = cmd_scaling(args.k, args.n_list, args.q_rule, args.out, args.mode,
                               args.tol, args.max_iter, args.seed)
            print(f"wrote {len(rows)} rows to {args.out}", file=sys.stderr)
            return EXIT_OK
        if args.command == "oa-check":
            code, message = cmd_oa_check(args.file, args.q, args.k)
            print(message)
            return code
        if args.command == "basis-dump":
            basis = make_eigenbasis(args.q)
            print(json.dumps({"q": basis.q, "columns": basis.vectors.T.tolist()}, indent=2))
            return EXIT_OK
    except (ConfigError, InvalidParameterError, TooLargeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
