"""Command-line front end: ``realsep bounds | reproduce | scan | survey``.

Exit codes
----------
0  success
1  at least one reproduction target failed
2  bad input (unparsable witness, invalid config or flags)
3  SDP solver failure (a partial report is still printed)
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, search, witness
from .config import DEFAULTS, Defaults, load_config
from .moments import RelaxationLevel, real_bound
from .sdp import OPTIMAL, Tolerances

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3

logger = logging.getLogger("realsep")


class InputError(ValueError):
    """Raised for user input that cannot be used; maps to exit code 2."""


# ---------------------------------------------------------------------------
# manifest


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None
    version: str = __version__
    started: float = field(default_factory=time.time)
    seconds: float = 0.0
    outputs: dict = field(default_factory=dict)

    def add_output(self, path) -> None:
        p = Path(path)
        self.outputs[p.name] = {"path": str(p), "sha256": sha256_file(p)}

    def write(self, path) -> None:
        """Atomic write: temporary file in the target directory, then rename."""
        self.seconds = time.time() - self.started
        path = Path(path)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".manifest-", suffix=".json")
        with os.fdopen(fd, "w") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=2)
        os.replace(tmp, path)


# ---------------------------------------------------------------------------
# input helpers


def _parse_level(text) -> RelaxationLevel:
    try:
        if isinstance(text, (tuple, list)):
            parts = [int(v) for v in text]
        else:
            parts = [int(v) for v in str(text).split(",")]
        if len(parts) == 1:
            parts *= 2
        return RelaxationLevel(*parts)
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad relaxation level {text!r}: {exc}") from None


def _parse_floats(text: str, n: int, what: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise InputError(f"{what} must be {n} comma-separated numbers") from None
    if len(vals) != n:
        raise InputError(f"{what} must be {n} comma-separated numbers")
    return vals


def _load_f(args) -> np.ndarray:
    if (args.f is None) == (args.family is None):
        raise InputError("give exactly one of --f or --family")
    try:
        if args.family is not None:
            return witness.FamilyParams.normalized(*_parse_floats(args.family, 3, "--family")).matrix()
        return np.asarray(witness.FMatrix.load(args.f).entries)
    except InputError:
        raise
    except (OSError, ValueError) as exc:
        raise InputError(str(exc)) from None


def _sign(args):
    if args.sign is None:
        return witness.RESOLVED_SIGN_TABLE
    s = _parse_floats(args.sign, 3, "--sign")
    if any(v not in (-1.0, 1.0) for v in s):
        raise InputError("--sign entries must be +1 or -1")
    return witness.sign_table_from_pattern(*(int(v) for v in s))


def _tol(cfg: Defaults) -> Tolerances:
    return Tolerances(gap=cfg.sdp_gap, feas=cfg.sdp_feas, max_iter=cfg.sdp_max_iter)


def _config(args) -> Defaults:
    try:
        return load_config(args.config) if args.config else DEFAULTS
    except (OSError, ValueError, TypeError) as exc:
        raise InputError(f"config: {exc}") from None


def _out_dir(args) -> Path:
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


# ---------------------------------------------------------------------------
# bounds


def cmd_bounds(args) -> int:
    cfg = _config(args)
    f = _load_f(args)
    sign = _sign(args)
    level = _parse_level(args.level if args.level is not None else cfg.level)
    rep = witness.compute_bounds(f, sign, level=level, seed=args.seed,
                                 per_block_ppt=args.per_block_ppt, tol=_tol(cfg))
    print(f"F_c   = {rep.F_c:.9f}")
    print(f"F_q   = {rep.F_q:.9f}  ({rep.F_q_rule}; see-saw attains {rep.settings_value:.9f})")
    print(f"F_r   = {rep.F_r:.9f}  (level {level.n_A},{level.n_C}; status {rep.sdp_status}; "
          f"gap {rep.sdp_gap:.2e}; certified <= {rep.F_r_certified:.9f})")
    if rep.ratio_qr is not None:
        print(f"F_q/F_r = {rep.ratio_qr:.9f}")
    if args.json:
        Path(args.json).write_text(rep.to_json())
    return EXIT_OK if rep.sdp_status == OPTIMAL else EXIT_SOLVER


# ---------------------------------------------------------------------------
# reproduce

F_MINUS2 = np.array([[-2.0, 3, 3], [3, -2, 3], [3, 3, -2]])
F_NEAR = np.array([[3, -5.009, -4.99], [-5.01, 2.6, -5.09], [-5.11, -5, 3]])
F_TETRA = witness.TETRAHEDRON.matrix()


@dataclass
class Check:
    target: str
    value: float
    expected: str
    passed: bool
    seconds: float = 0.0
    detail: str = ""


def _near(target, value, ref, tol, detail="") -> Check:
    return Check(target, float(value), f"{ref} +- {tol}", bool(abs(value - ref) <= tol),
                 detail=detail or f"gap {value - ref:+.3e}")


def _fr(f, level=(2, 2)):
    return real_bound(f, witness.RESOLVED_SIGN_TABLE, RelaxationLevel(*level),
                      raise_on_failure=False)


def _check_fr(target, f, ref, tol) -> Check:
    rb = _fr(f)
    c = _near(target, rb.value, ref, tol)
    c.passed &= rb.status == OPTIMAL
    c.detail += f"; status {rb.status}; duality gap {rb.gap:.1e}"
    return c


def _check_level3() -> Check:
    lo, hi = _fr(F_MINUS2, (2, 2)), _fr(F_MINUS2, (3, 3))
    diff = hi.value - lo.value
    return Check("fr-level3", hi.value, "|F_r(3,3) - F_r(2,2)| < 1e-6",
                 abs(diff) < 1e-6 and hi.status == lo.status == OPTIMAL,
                 detail=f"(2,2) {lo.value:.9f}, (3,3) {hi.value:.9f}, change {diff:+.3e}")


def _check_seesaw(target, f, ref) -> Check:
    res = witness.optimize_settings(f)
    return _near(target, res.value, ref, 1e-6)


def _check_ratio_ascent() -> Check:
    res = search.refine_ratio(F_NEAR, search.ScanConfig(ascent_iters=2))
    return Check("ratio-106594", res.ratio, ">= 1.060", res.ratio >= 1.060,
                 detail=f"{res.steps} ascent steps; F_r {res.F_r:.6f}")


def _check_ratio_tetra() -> Check:
    return _near("ratio-tetra", 4.0 / _fr(F_TETRA).value, 1.0705, 0.005)


def _check_scan(seed=0) -> Check:
    cands = search.ratio_scan(search.ScanConfig(samples=100, seed=seed, refine_top=0))
    best = max((c.ratio for c in cands if c.ratio is not None), default=math.nan)
    return Check("scan-max", best, "<= 1.071", bool(best <= 1.071),
                 detail=f"{sum(c.ratio is None for c in cands)} failed solves")


def _check_survey(points=400, seed=0) -> Check:
    pts = search.survey(search.SurveyConfig(points=points, seed=seed))
    s = search.summarize_survey(pts)
    return Check("survey-400", s.both_large, "0 both-large points", s.both_large == 0,
                 detail=f"{s.points} points; separated fraction {s.separated_fraction:.3f}; "
                        f"{s.not_converged} not converged; {s.note}")


TARGETS = {
    "fc-12": lambda: _near("fc-12", witness.classical_bound(F_MINUS2)[0], 12.0, 1e-9),
    "fc-tetra": lambda: _near("fc-tetra", witness.classical_bound(F_TETRA)[0], 2 * math.sqrt(3), 1e-9),
    "fc-21607": lambda: _near("fc-21607", witness.classical_bound(F_NEAR)[0], 21.607, 0.005),
    "fq-3sqrt22": lambda: _near("fq-3sqrt22", witness.complex_bound_columns(F_MINUS2),
                                3 * math.sqrt(22), 1e-9),
    "fq-tetra": lambda: _near("fq-tetra", witness.complex_bound(F_TETRA)[0], 4.0, 1e-9),
    "fq-2303": lambda: _near("fq-2303", witness.complex_bound_columns(F_NEAR), 23.03, 0.01),
    "seesaw-12": lambda: _check_seesaw("seesaw-12", F_MINUS2, 3 * math.sqrt(22)),
    "seesaw-tetra": lambda: _check_seesaw("seesaw-tetra", F_TETRA, 4.0),
    "seesaw-near": lambda: _check_seesaw("seesaw-near", F_NEAR, witness.complex_bound_columns(F_NEAR)),
    "fr-13677": lambda: _check_fr("fr-13677", F_MINUS2, 13.677, 0.02),
    "fr-37367": lambda: _check_fr("fr-37367", F_TETRA, 3.7367, 0.02),
    "fr-21607": lambda: _check_fr("fr-21607", F_NEAR, 21.607, 0.05),
    "fr-level3": _check_level3,
    "ratio-106594": _check_ratio_ascent,
    "ratio-tetra": _check_ratio_tetra,
    "scan-max": _check_scan,
    "survey-400": _check_survey,
}
SLOW_TARGETS = {"fr-level3", "scan-max", "survey-400"}


def cmd_reproduce(args) -> int:
    if args.target == "all":
        names = [t for t in TARGETS if not (args.skip_slow and t in SLOW_TARGETS)]
    elif args.target in TARGETS:
        names = [args.target]
    else:
        raise InputError(f"unknown target {args.target!r}; choose from all, {', '.join(TARGETS)}")
    results = []
    for name in names:
        t0 = time.time()
        c = TARGETS[name]()
        c.seconds = time.time() - t0
        results.append(c)
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.target:<13} {c.value:.9g}  "
              f"(expected {c.expected}; {c.detail}; {c.seconds:.1f}s)", flush=True)
    if args.json:
        Path(args.json).write_text(json.dumps([dataclasses.asdict(c) for c in results], indent=2))
    return EXIT_OK if all(c.passed for c in results) else EXIT_FAIL


# ---------------------------------------------------------------------------
# scan and survey


def cmd_scan(args) -> int:
    cfg = _config(args)
    try:
        scfg = search.ScanConfig(
            samples=cfg.scan_samples if args.samples is None else args.samples,
            low=cfg.scan_low, high=cfg.scan_high, step=cfg.scan_step, fd_eps=cfg.scan_fd_eps,
            seed=cfg.seed if args.seed is None else args.seed,
            level=tuple(cfg.level) if args.level is None else _level_tuple(args.level),
            refine_top=cfg.scan_refine_top if args.refine_top is None else args.refine_top)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = _out_dir(args)
    manifest = RunManifest("scan", dataclasses.asdict(scfg), scfg.seed)
    cands = search.ratio_scan(scfg, threads=args.threads)
    csv_path, json_path = out / "scan.csv", out / "scan.json"
    search.write_scan_csv(cands, csv_path)
    ok = [c for c in cands if c.ratio is not None]
    summary = {"config": dataclasses.asdict(scfg), "samples": len(cands), "failed": len(cands) - len(ok),
               "best_ratio": ok[0].ratio if ok else None, "best_f": ok[0].f if ok else None}
    json_path.write_text(json.dumps(summary, indent=2))
    for p in (csv_path, json_path):
        manifest.add_output(p)
    manifest.write(out / "manifest.json")
    best = summary["best_ratio"]
    print(f"{len(cands)} samples, {summary['failed']} failed solves, best ratio "
          f"{best if best is None else f'{best:.9f}'}")
    return EXIT_OK


def _level_tuple(text) -> tuple:
    lv = _parse_level(text)
    return (lv.n_A, lv.n_C)


def cmd_survey(args) -> int:
    cfg = _config(args)
    points = cfg.survey_full_points if args.full else (
        cfg.survey_points if args.points is None else args.points)
    try:
        scfg = search.SurveyConfig(points=points, seed=cfg.seed if args.seed is None else args.seed,
                                   restarts=cfg.survey_restarts if args.restarts is None else args.restarts,
                                   threshold=cfg.survey_threshold)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = _out_dir(args)
    manifest = RunManifest("survey", dataclasses.asdict(scfg), scfg.seed)
    pts = []
    if points:
        t0 = time.time()
        pts.append(search._survey_one((scfg, 0)))
        per = time.time() - t0
        print(f"estimated runtime {per * points / max(1, args.threads) / 60:.1f} min "
              f"for {points} points", flush=True)
        rest = search._map(search._survey_one, [(scfg, i) for i in range(1, points)], args.threads)
        pts.extend(rest)
    csv_path, json_path = out / "survey.csv", out / "survey.json"
    search.write_survey_csv(pts, csv_path)
    summary = search.summarize_survey(pts, scfg.threshold)
    json_path.write_text(json.dumps({"config": dataclasses.asdict(scfg), **summary.to_dict()},
                                    indent=2))
    for p in (csv_path, json_path):
        manifest.add_output(p)
    manifest.write(out / "manifest.json")
    print(f"{summary.points} points, {summary.both_large} with both |a_i|, |c_i| > "
          f"{summary.threshold}; {summary.not_converged} not converged ({summary.note})")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="realsep", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bounds", help="classical, real and complex bounds of a witness")
    b.add_argument("--f", help="witness file (JSON rows or CSV), 3 x 3 or 3 x 4")
    b.add_argument("--family", help="alpha,beta,gamma of the four-setting family")
    b.add_argument("--level", help="relaxation level, e.g. 2 or 2,2")
    b.add_argument("--sign", help="override the sign pattern s_zero,s_same,s_other")
    b.add_argument("--per-block-ppt", action="store_true",
                   help="impose the transpose constraint on every outcome block")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--json", help="write the full report here")
    b.add_argument("--config")
    b.set_defaults(func=cmd_bounds)

    r = sub.add_parser("reproduce", help="check the published numbers")
    r.add_argument("target", nargs="?", default="all")
    r.add_argument("--skip-slow", action="store_true")
    r.add_argument("--json")
    r.set_defaults(func=cmd_reproduce)

    s = sub.add_parser("scan", help="random scan of the complex/real ratio")
    s.add_argument("--samples", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--level")
    s.add_argument("--refine-top", type=int)
    s.add_argument("--threads", type=int, default=search.default_threads())
    s.add_argument("--out-dir", default="scan-out")
    s.add_argument("--config")
    s.set_defaults(func=cmd_scan)

    v = sub.add_parser("survey", help="two-setting complexness survey")
    v.add_argument("--points", type=int)
    v.add_argument("--full", action="store_true", help="full-scale run (40000 points)")
    v.add_argument("--seed", type=int)
    v.add_argument("--restarts", type=int)
    v.add_argument("--threads", type=int, default=search.default_threads())
    v.add_argument("--out-dir", default="survey-out")
    v.add_argument("--config")
    v.set_defaults(func=cmd_survey)
    return p


def _glue_negative_values(argv: list[str]) -> list[str]:
    """Let ``--family -0.5,0.5,0.5`` through: argparse would read the value as a flag."""
    out, i = [], 0
    while i < len(argv):
        if argv[i] in ("--family", "--sign") and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_glue_negative_values(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s:%(name)s:%(message)s")
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
