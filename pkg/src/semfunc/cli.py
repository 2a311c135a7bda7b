"""Command-line interface: ``semfunc <command> [options]``.

Exit codes: 0 success, 1 bad input or usage, 2 internal failure.  Every
command prints a human-readable summary; ``--json PATH`` additionally writes
a machine-readable report (sorted keys, no timings) so that repeated runs
with the same inputs produce identical files.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from .checks import all_passed, run_oracle_checks
from .corpus import (
    NOUN,
    VERB,
    build_vocabulary,
    load_relpron,
    load_similarity_dataset,
    load_triples,
    tag,
    write_relpron,
    write_similarity_dataset,
    write_triples,
)
from .errors import SemfuncError, TractabilityError
from .evaluation import evaluate_relpron, evaluate_similarity
from .inference import RelpronProperty, implication_score, relpron_score, similarity
from .model import SpaceConfig, load_model, save_model
from .oracle import DEFAULT_BUDGET
from .training import TrainingConfig, initialize_model, train

log = logging.getLogger("semfunc")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _plain(obj):
    """Non-finite floats become null so the report is strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _write_json(path, doc) -> None:
    if path is None:
        return
    text = json.dumps(_plain(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def _noun(word):
    return tag(word, NOUN)


# --- commands -----------------------------------------------------------------


def cmd_train(args) -> int:
    corpus = load_triples(args.corpus)
    vocab = build_vocabulary(corpus.records, args.min_count, args.keep_intransitives)
    config = TrainingConfig(
        space=SpaceConfig(args.dims, args.card),
        learning_rate=args.lr,
        link_learning_rate=args.link_lr,
        epochs=args.epochs,
        negative_samples=args.neg,
        l2_strength=args.l2,
        frequency_smoothing=args.alpha,
        seed=args.seed,
        minibatch=args.minibatch,
        gain=args.gain,
    )
    model = initialize_model(vocab, config)
    model, diags = train(model, vocab.triples, config, progress=lambda d: log.info(d.log_line()))
    save_model(model, args.out)
    print(f"vocabulary {len(vocab)} predicates, {len(vocab.triples)} triples "
          f"({vocab.dropped} dropped, {len(corpus.malformed)} malformed lines)")
    for d in diags:
        print(f"epoch {d.epoch}: train objective {d.mean_objective:.4f}  held-out {d.heldout_objective:.4f}")
    print(f"model written to {args.out}")
    _write_json(args.json, {
        "command": "train",
        "vocabulary": len(vocab),
        "triples": len(vocab.triples),
        "dropped": vocab.dropped,
        "malformed": len(corpus.malformed),
        "epochs": [
            {"epoch": d.epoch, "objective": d.mean_objective, "heldout": d.heldout_objective}
            for d in diags
        ],
    })
    return 0


def cmd_query_sim(args) -> int:
    model = load_model(args.model)
    a, b = _noun(args.a), _noun(args.b)
    value = similarity(model, a, b)
    print(f"{value:.6f}")
    _write_json(args.json, {"command": "query-sim", "a": a, "b": b, "similarity": value})
    return 0


def cmd_query_impl(args) -> int:
    model = load_model(args.model)
    a, b = _noun(args.a), _noun(args.b)
    value = implication_score(model, a, b)
    print(f"{value:.6f}")
    _write_json(args.json, {"command": "query-impl", "a": a, "b": b, "implication": value})
    return 0


def cmd_query_relpron(args) -> int:
    model = load_model(args.model)
    prop = RelpronProperty(_noun(args.hypernym), tag(args.verb, VERB), _noun(args.arg), args.role.upper())
    term = _noun(args.term)
    value = relpron_score(model, term, prop)
    print(f"{value:.6f}")
    _write_json(args.json, {
        "command": "query-relpron",
        "term": term,
        "hypernym": prop.hypernym,
        "verb": prop.verb,
        "argument": prop.argument,
        "role": prop.term_role,
        "score": value,
    })
    return 0


def _emit_report(args, command, report) -> int:
    print(report.summary())
    doc = {"command": command, **report.as_dict()}
    _write_json(args.json, doc)
    return 0


def cmd_eval_sim(args) -> int:
    model = load_model(args.model)
    pairs = load_similarity_dataset(args.dataset, model)
    return _emit_report(args, "eval-sim", evaluate_similarity(model, pairs))


def cmd_eval_relpron(args) -> int:
    model = load_model(args.model)
    entries = load_relpron(args.dataset, model)
    return _emit_report(args, "eval-relpron", evaluate_relpron(model, entries, args.split))


def cmd_oracle_check(args) -> int:
    model = load_model(args.model)
    try:
        results = run_oracle_checks(model, args.budget, args.max_predicates)
    except TractabilityError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    width = max(len(r.suite) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        extra = f"  {r.detail}" if r.detail else ""
        print(f"{r.suite:<{width}}  {status}  {r.failures}/{r.checked} failed{extra}")
    ok = all_passed(results)
    print("all suites passed" if ok else "some suites failed")
    _write_json(args.json, {
        "command": "oracle-check",
        "passed": ok,
        "suites": [r.as_dict() for r in results],
    })
    return 0


def cmd_synth(args) -> int:
    from .synthetic import SyntheticWorld

    world = SyntheticWorld()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_triples(world.generate(args.triples, args.seed), out / "triples.tsv")
    write_similarity_dataset(world.similarity_pairs(), out / "similarity.tsv")
    write_relpron(world.relpron_entries(), out / "relpron.tsv")
    print(f"wrote triples.tsv, similarity.tsv and relpron.tsv to {out}")
    return 0


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="semfunc", description="Functional distributional semantics toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, fn, help):
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(func=fn)
        sp.add_argument("--json", metavar="PATH", help="also write a machine-readable report")
        return sp

    defaults = TrainingConfig()
    sp = command("train", cmd_train, "train a model on a triple corpus")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out", required=True, help="where to write the model")
    sp.add_argument("--dims", type=int, default=defaults.space.dims)
    sp.add_argument("--card", type=int, default=defaults.space.cardinality)
    sp.add_argument("--lr", type=float, default=defaults.learning_rate)
    sp.add_argument("--link-lr", type=float, default=None,
                    help="step size for link weights and node bias (default: --lr)")
    sp.add_argument("--epochs", type=int, default=defaults.epochs)
    sp.add_argument("--neg", type=int, default=defaults.negative_samples)
    sp.add_argument("--l2", type=float, default=defaults.l2_strength)
    sp.add_argument("--alpha", type=float, default=defaults.frequency_smoothing)
    sp.add_argument("--seed", type=int, default=defaults.seed)
    sp.add_argument("--minibatch", type=int, default=defaults.minibatch)
    sp.add_argument("--gain", type=float, default=defaults.gain)
    sp.add_argument("--min-count", type=int, default=1)
    sp.add_argument("--keep-intransitives", action=argparse.BooleanOptionalAction, default=True)

    for name, fn, help in (
        ("query-sim", cmd_query_sim, "similarity of two nouns"),
        ("query-impl", cmd_query_impl, "degree to which noun a implies noun b"),
    ):
        sp = command(name, fn, help)
        sp.add_argument("--model", required=True)
        sp.add_argument("a")
        sp.add_argument("b")

    sp = command("query-relpron", cmd_query_relpron, "score a term against a relative-clause property")
    sp.add_argument("--model", required=True)
    for flag in ("--term", "--hypernym", "--verb", "--arg"):
        sp.add_argument(flag, required=True)
    sp.add_argument("--role", required=True, type=str.upper, choices=("SBJ", "OBJ"))

    sp = command("eval-sim", cmd_eval_sim, "Spearman correlation on a similarity dataset")
    sp.add_argument("--model", required=True)
    sp.add_argument("--dataset", required=True)

    sp = command("eval-relpron", cmd_eval_relpron, "MAP on a RELPRON-format dataset")
    sp.add_argument("--model", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--split", choices=("dev", "test"), default=None)

    sp = command("oracle-check", cmd_oracle_check, "compare a small model against exact inference")
    sp.add_argument("--model", required=True)
    sp.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    sp.add_argument("--max-predicates", type=int, default=6)

    sp = sub.add_parser("synth", help="write the synthetic benchmark corpus and datasets")
    sp.set_defaults(func=cmd_synth)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--triples", type=int, default=50000)
    sp.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return 0 if e.code in (0, None) else 1
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (SemfuncError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - last-resort guard for the exit code contract
        log.exception("internal failure")
        print(f"internal error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
