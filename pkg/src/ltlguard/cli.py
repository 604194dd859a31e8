"""Command line entry point: translate, compile, monitor, simulate.

Exit codes are a stable contract: 0 on success (and fully safe traces),
1 on operational errors (bad files, missing fixtures, pipeline failures),
2 when the constraints themselves are the problem (a violation in the
trace, or an unsatisfiable constraint set).

File formats:

* vocabulary: JSON object {"objects": [names...], "predicates": {name: arity}};
  the predicates field is optional and defaults to the standard household set.
* constraints: JSON list [{"nl": text, "ltl": prefix formula, "verified": bool}];
  entries without "ltl" go through the translation pipeline.
* trace: JSONL, one record {"action": str, "state": {proposition: bool}} per
  line; the first record is the initial observation, the rest are steps.
* task suite: JSON list of task objects as produced by fixtures.dump_fixture_file.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .automaton import (
    Classification,
    automaton_to_dot,
    automaton_to_json,
)
from .errors import LtlGuardError, UnsatisfiableConstraintsError
from .explain import reprompt_message
from .fixtures import builtin_suite, load_fixture_file
from .harness import (
    AGENT_MODES,
    CONSTRAINT_SOURCES,
    compute_metrics,
    run_episode,
)
from .llm import BackendConfig, HttpChatBackend, MockBackend, RecordReplayBackend
from .ltl import STANDARD_PREDICATES, Vocabulary, parse_prefix
from .monitor import iter_trace_records, open_session
from .translate import (
    Constraint,
    approve,
    assemble_constraint_set,
    constraints_from_json,
    constraints_to_json,
    translate_constraint,
    verification_review,
)

OK, OPERATIONAL_ERROR, UNSAFE = 0, 1, 2


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument(
        "--live", action="store_true",
        help="call a live chat-completion endpoint (token read from env)",
    )
    group.add_argument(
        "--mock", metavar="DIR",
        help="serve recorded replies from DIR, fall back to templates on misses",
    )
    group.add_argument(
        "--replay", metavar="DIR",
        help="serve recorded replies from DIR, fail on any miss",
    )
    parser.add_argument(
        "--endpoint", default="https://api.openai.com/v1/chat/completions",
        help="chat endpoint for --live",
    )
    parser.add_argument("--model", default="gpt-4", help="model name for --live")
    parser.add_argument(
        "--auth-env", default="LTLGUARD_API_TOKEN",
        help="environment variable holding the API token for --live",
    )


def _backend(args):
    if args.live:
        return HttpChatBackend(
            BackendConfig(
                endpoint=args.endpoint, model=args.model, auth_env=args.auth_env
            )
        )
    if args.mock:
        fixtures = {}
        for path in sorted(Path(args.mock).glob("*.json")):
            fixtures[path.stem] = json.loads(path.read_text())["reply"]
        return MockBackend(fixtures, strict=False)
    if args.replay:
        return RecordReplayBackend(args.replay, mode="replay")
    return None


def _load_vocabulary(path: str) -> Vocabulary:
    data = json.loads(Path(path).read_text())
    predicates = data.get("predicates") or STANDARD_PREDICATES
    return Vocabulary(dict(predicates), tuple(data.get("objects", ())))


def _emit(args, payload: dict, text_lines: list[str]) -> None:
    if args.json:
        print(json.dumps(payload, indent=1))
    else:
        for line in text_lines:
            print(line)


# --- translate -----------------------------------------------------------------


def cmd_translate(args) -> int:
    vocabulary = _load_vocabulary(args.vocabulary)
    backend = _backend(args)
    entries = json.loads(Path(args.constraints).read_text())
    if not isinstance(entries, list):
        print("error: constraints file must be a JSON list", file=sys.stderr)
        return OPERATIONAL_ERROR

    constraints, failures, lines = [], [], []
    for k, entry in enumerate(entries):
        nl = entry.get("nl", "")
        try:
            if entry.get("ltl"):
                constraint = Constraint(
                    id=k, nl_text=nl, formula=parse_prefix(entry["ltl"], vocabulary),
                    verified=bool(entry.get("verified", False)),
                )
            else:
                constraint = translate_constraint(
                    nl, vocabulary, backend, constraint_id=k
                )
        except LtlGuardError as exc:
            failures.append({"index": k, "nl": nl, "error": str(exc)})
            continue
        if args.approve_all or entry.get("verified"):
            constraint = approve(constraint)
        constraints.append(constraint)
        review = verification_review(constraint)
        lines.append(f"[{k}] {review.nl_text}")
        lines.append(f"    LTL: {review.formula_text}")
        for gloss in review.gloss:
            lines.append(f"    {gloss}")

    rendered = constraints_to_json(constraints)
    if args.output:
        Path(args.output).write_text(rendered)
        lines.append(f"wrote {len(constraints)} constraints to {args.output}")
    else:
        lines.append(rendered)
    for failure in failures:
        print(
            f"error: entry {failure['index']} ({failure['nl']!r}): {failure['error']}",
            file=sys.stderr,
        )
    _emit(
        args,
        {
            "translated": json.loads(rendered),
            "failures": failures,
        },
        lines,
    )
    return OPERATIONAL_ERROR if failures else OK


# --- compile -------------------------------------------------------------------


def cmd_compile(args) -> int:
    vocabulary = _load_vocabulary(args.vocabulary)
    backend = _backend(args)
    constraints = constraints_from_json(
        Path(args.constraints).read_text(), vocabulary, backend
    )
    cs = assemble_constraint_set(constraints, strict=args.strict)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files, lines = [], []
    for constraint, auto in zip(cs.constraints, cs.automata):
        stem = f"constraint_{constraint.id}"
        (out_dir / f"{stem}.json").write_text(automaton_to_json(auto))
        (out_dir / f"{stem}.dot").write_text(
            automaton_to_dot(auto, name=stem)
        )
        files.extend([str(out_dir / f"{stem}.json"), str(out_dir / f"{stem}.dot")])
        lines.append(
            f"[{constraint.id}] {len(auto.accepting)} states, "
            f"{int(auto.dead.sum())} dead: {constraint.nl_text}"
        )

    payload = {"constraints": len(cs.constraints), "files": files}
    if cs.is_empty:
        lines.append("product: empty constraint set")
        payload.update({"product_states": 0, "dead_states": 0, "initial": "ACCEPTING"})
        _emit(args, payload, lines)
        return OK

    table = cs.dead_table
    initial = table.classify_index(table.initial_index)
    lines.append(
        f"product: {len(table.reachable)} states, {int(table.dead.sum())} dead, "
        f"alphabet {len(table.alphabet)}, initial {initial.name}"
    )
    payload.update(
        {
            "product_states": len(table.reachable),
            "dead_states": int(table.dead.sum()),
            "alphabet": len(table.alphabet),
            "initial": initial.name,
        }
    )
    if initial is Classification.DEAD:
        lines.append("warning: constraint set is initially unsatisfiable")
        _emit(args, payload, lines)
        return UNSAFE
    _emit(args, payload, lines)
    return OK


# --- monitor -------------------------------------------------------------------


def cmd_monitor(args) -> int:
    vocabulary = _load_vocabulary(args.vocabulary)
    backend = _backend(args)
    constraints = constraints_from_json(
        Path(args.constraints).read_text(), vocabulary, backend
    )
    cs = assemble_constraint_set(constraints, strict=args.strict)

    records = []
    with open(args.trace) as handle:
        for lineno, action, assignment in iter_trace_records(handle):
            records.append((lineno, action, assignment))
    if not records:
        print("error: empty trace file", file=sys.stderr)
        return OPERATIONAL_ERROR

    verdicts, lines = [], []
    _, _, initial = records[0]
    try:
        session = open_session(cs, initial)
    except UnsatisfiableConstraintsError as exc:
        print(f"unsatisfiable: {exc}", file=sys.stderr)
        return UNSAFE

    code = OK
    for lineno, action, assignment in records[1:]:
        verdict = session.check_action(assignment, action)
        if verdict.is_safe:
            session.commit(assignment, action)
            verdicts.append({"line": lineno, "action": action, "verdict": "safe"})
            lines.append(f"line {lineno}: safe      {action}")
            continue
        message = reprompt_message(session, verdict.report, backend)
        verdicts.append(
            {
                "line": lineno,
                "action": action,
                "verdict": "violation",
                "attributed": list(verdict.report.attributed_constraints),
                "message": message,
            }
        )
        lines.append(f"line {lineno}: VIOLATION {action}")
        lines.append(f"  {message}")
        code = UNSAFE
        break

    if code == OK:
        final = session.check_termination()
        if final.is_safe:
            lines.append("termination: safe")
            verdicts.append({"verdict": "termination_safe"})
        else:
            message = reprompt_message(session, final.report, backend)
            lines.append("termination: VIOLATION (pending obligations)")
            lines.append(f"  {message}")
            verdicts.append(
                {
                    "verdict": "termination_violation",
                    "attributed": list(final.report.attributed_constraints),
                    "message": message,
                }
            )
            code = UNSAFE

    _emit(args, {"verdicts": verdicts, "safe": code == OK}, lines)
    return code


# --- simulate ------------------------------------------------------------------


def cmd_simulate(args) -> int:
    backend = _backend(args)
    tasks = load_fixture_file(args.suite) if args.suite else builtin_suite()

    def one(task):
        return run_episode(
            task,
            args.mode,
            backend=backend,
            constraint_source=args.source,
            retry_cap=args.retry_cap,
        )

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(one, tasks))
    else:
        results = [one(task) for task in tasks]

    lines = [f"mode: {args.mode}  source: {args.source}  seed: {args.seed}"]
    rows = []
    for task, r in zip(tasks, results):
        rows.append(
            {
                "task": task.name,
                "constraints": len(task.constraints),
                "success": r.success,
                "safe": r.safe,
                "aborted": r.aborted,
                "violations": r.violations,
                "actions": list(r.actions),
            }
        )
        lines.append(
            f"  {task.name:24s} success={int(r.success)} safe={int(r.safe)} "
            f"aborted={int(r.aborted)} violations={r.violations}"
        )

    regular = [r for t, r in zip(tasks, results) if not t.abortion]
    abortion = [r for t, r in zip(tasks, results) if t.abortion]
    m = compute_metrics(regular)
    lines.append(
        f"episodes: {m.episodes}  success_rate: {m.success_rate:.1%}  "
        f"safety_rate: {m.safety_rate:.1%}"
    )
    payload = {
        "mode": args.mode,
        "source": args.source,
        "seed": args.seed,
        "episodes": rows,
        "success_rate": m.success_rate,
        "safety_rate": m.safety_rate,
    }
    if abortion:
        ma = compute_metrics(abortion)
        lines.append(
            f"abortion fixtures: {ma.aborted}/{ma.episodes} aborted, "
            f"safety_rate: {ma.safety_rate:.1%}"
        )
        payload["abortion"] = {
            "episodes": ma.episodes,
            "aborted": ma.aborted,
            "safety_rate": ma.safety_rate,
        }
    _emit(args, payload, lines)
    return OK


# --- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ltlguard",
        description="Translate, compile, monitor and simulate temporal safety constraints.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "translate", help="translate natural-language constraints to formulas"
    )
    p.add_argument("constraints", help="constraints JSON file")
    p.add_argument("--vocabulary", required=True, help="vocabulary JSON file")
    p.add_argument("--output", help="write the filled constraints file here")
    p.add_argument(
        "--approve-all", action="store_true",
        help="mark every translated constraint as expert-verified",
    )
    p.add_argument("--json", action="store_true", help="machine-readable output")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("compile", help="compile constraints to automata and DOT")
    p.add_argument("constraints", help="constraints JSON file")
    p.add_argument("--vocabulary", required=True, help="vocabulary JSON file")
    p.add_argument("--out-dir", default="automata", help="output directory")
    p.add_argument(
        "--strict", action="store_true",
        help="refuse constraints that are not expert-verified",
    )
    p.add_argument("--json", action="store_true", help="machine-readable output")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("monitor", help="replay a trace file and emit verdicts")
    p.add_argument("constraints", help="constraints JSON file")
    p.add_argument("trace", help="trace JSONL file")
    p.add_argument("--vocabulary", required=True, help="vocabulary JSON file")
    p.add_argument(
        "--strict", action="store_true",
        help="refuse constraints that are not expert-verified",
    )
    p.add_argument("--json", action="store_true", help="machine-readable output")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("simulate", help="run the scripted evaluation suite")
    p.add_argument("--suite", help="task suite JSON file (default: builtin)")
    p.add_argument(
        "--mode", choices=AGENT_MODES, default="safety_chip", help="agent mode"
    )
    p.add_argument(
        "--source", choices=CONSTRAINT_SOURCES, default="expert_verified",
        help="where episode constraints come from",
    )
    p.add_argument("--seed", type=int, default=0, help="report reproducibility seed")
    p.add_argument("--jobs", type=int, default=1, help="parallel episode workers")
    p.add_argument("--retry-cap", type=int, default=5, help="violation retry cap")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    # argparse exits with 2 on usage errors; 2 is reserved for violations here
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return OK if exc.code == 0 else OPERATIONAL_ERROR
    try:
        return args.func(args)
    except UnsatisfiableConstraintsError as exc:
        print(f"unsatisfiable: {exc}", file=sys.stderr)
        return UNSAFE
    except LtlGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return OPERATIONAL_ERROR
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return OPERATIONAL_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return OPERATIONAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
