"""Command line entry point: ``circlekam <experiment> --config run.yaml``."""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from pathlib import Path

from . import __version__
from . import config as C
from .cohomology import ResonanceError
from .experiments import REGISTRY, FieldError, Outcome, _fmt

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def load_config(text: str, source: str, expected: str | None = None) -> tuple[str, dict, dict]:
    """Parse and validate a config; returns ``(experiment, resolved, build)``.

    ``expected`` is the subcommand name; the file's ``experiment`` key must
    agree with it or be absent.
    """
    data, lines = C.load_yaml(text, source)
    if data is None or data == {}:
        data = {}
    if not isinstance(data, dict):
        raise C.ConfigError("expected a mapping at the top level", line=1, source=source)
    name = data.get("experiment", expected)
    if name is None:
        raise C.ConfigError(f"missing required key (one of: {', '.join(REGISTRY)})", "experiment", 1, source)
    if name not in REGISTRY:
        raise C.ConfigError(f"unknown experiment {name!r} (one of: {', '.join(REGISTRY)})", "experiment",
                            lines.get(("experiment",)), source)
    if expected is not None and name != expected:
        raise C.ConfigError(f"config is for {name!r} but the subcommand is {expected!r}", "experiment",
                            lines.get(("experiment",)), source)
    exp = REGISTRY[name]
    resolved = C.validate(data, exp.schema, lines, source)
    build = _build(exp, resolved, lines, source)
    return name, resolved, build


def _build(exp, resolved, lines, source):
    try:
        return exp.build(resolved)
    except FieldError as exc:
        path = exc.path
        line = None
        for cut in range(len(path), -1, -1):
            line = lines.get(tuple(path[:cut]))
            if line is not None:
                break
        raise C.ConfigError(str(exc), C._path_str(path), line, source) from None


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def render(name: str, resolved: dict, outcome: Outcome) -> dict[str, str]:
    """Every output file as text, keyed by file name."""
    files = {f"{t}.csv": _csv(*tab) for t, tab in outcome.tables.items()}
    files.update(outcome.texts)
    summary = [f"experiment: {name}", f"seed: {resolved['seed']}"]
    summary += [f"note: {n}" for n in outcome.notes]
    summary += [c.line() for c in outcome.checks]
    summary.append(f"RESULT: {'PASS' if outcome.passed else 'FAIL'}")
    files["summary.txt"] = "\n".join(summary) + "\n"
    manifest = {
        "experiment": name,
        "seed": resolved["seed"],
        "config": resolved,
        "version": __version__,
        "result": "PASS" if outcome.passed else "FAIL",
        "files": {k: hashlib.sha256(v.encode()).hexdigest() for k, v in sorted(files.items())},
    }
    files["manifest.json"] = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    return files


def execute(name: str, resolved: dict, build: dict, threads: int = 1) -> Outcome:
    return REGISTRY[name].run(resolved, build, threads)


def write(out_dir: Path, files: dict[str, str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for fname, text in files.items():
        (out_dir / fname).write_text(text, encoding="utf-8", newline="")


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise C.ConfigError(exc.strerror or str(exc), source=path) from None


def _u64(text: str) -> int:
    try:
        return C.u64(int(text, 0))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _threads(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return n


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="circlekam", description="Random circle diffeomorphism experiments.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="list experiments and their config keys")
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("--config", required=True)
    for name, exp in REGISTRY.items():
        e = sub.add_parser(name, help=exp.summary)
        e.add_argument("--config", required=True, help="YAML config")
        e.add_argument("--seed", type=_u64, help="master seed (overrides the config)")
        e.add_argument("--out", default=f"out/{name}", help="output directory")
        e.add_argument("--threads", type=_threads, default=1, help="worker threads; results do not depend on it")
    return p


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    if args.command == "list":
        for name, exp in REGISTRY.items():
            print(f"{name}: {exp.summary}")
            print(C.describe(exp.schema, 1))
        return EXIT_PASS
    try:
        if args.command == "validate":
            name, resolved, _ = load_config(_read(args.config), args.config)
            print(f"{args.config}: ok ({name})")
            return EXIT_PASS
        name, resolved, build = load_config(_read(args.config), args.config, args.command)
        if args.seed is not None:
            resolved["seed"] = args.seed
        outcome = execute(name, resolved, build, args.threads)
    except C.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ResonanceError, ValueError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    files = render(name, resolved, outcome)
    write(Path(args.out), files)
    sys.stdout.write(files["summary.txt"])
    return EXIT_PASS if outcome.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
