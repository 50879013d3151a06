"""Command-line entry point: ingest -> train -> fine-tune -> simulate -> report.

Every command writes a JSON manifest next to its main output holding the
resolved configuration and SHA-256 hashes of inputs and outputs;
``lemsim replay MANIFEST`` re-runs it. Failures print one JSON object on
stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

from . import __version__

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger("lemsim")

MANIFEST_SUFFIX = ".manifest.json"


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # noqa: D401 - argparse hook
        _emit_error("UsageError", message, self.prog)
        raise SystemExit(2)


def _emit_error(kind: str, message: str, command: str | None) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "command": command}) + "\n")


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _parse_id(text: str) -> Any:
    """Team and player ids are ints in the public feed; anything else stays a string."""
    t = text.strip()
    if t.lstrip("-").isdigit():
        return int(t)
    return t


def _pairs(items: Sequence[str] | None, flag: str) -> list[tuple[str, str]]:
    out = []
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep or not name or not value:
            raise CliError(f"{flag} expects NAME=PATH, got {item!r}")
        out.append((name, value))
    return out


def _suffixed(path: str, k: int, repeats: int) -> str:
    if repeats == 1:
        return path
    p = Path(path)
    return str(p.with_name(f"{p.stem}_r{k:02d}{p.suffix}"))


# -- commands ---------------------------------------------------------------
# Each handler returns (input paths, output paths) for the manifest.


def cmd_ingest(args: argparse.Namespace) -> tuple[list[str], list[str]]:
    from .ingest import export_csv, parse_events, parse_matches, write_corpus

    matches = None
    inputs = [args.events]
    if args.matches:
        matches = parse_matches(Path(args.matches).read_bytes())
        inputs.append(args.matches)
    corpus = parse_events(Path(args.events).read_bytes(), league=args.league, season=args.season,
                          matches=matches, on_unknown=args.on_unknown)
    write_corpus(corpus, args.out)
    outputs = [args.out]
    if args.csv:
        export_csv(corpus, args.csv)
        outputs.append(args.csv)
    print(json.dumps({"matches": len(corpus), "events": corpus.n_events, "dropped": dict(corpus.dropped)}))
    return inputs, outputs


def _load_corpora(paths: Sequence[str]):
    from .ingest import read_corpus

    corpora = [read_corpus(p) for p in paths]
    return corpora[0].merge(*corpora[1:])


def cmd_synth(args: argparse.Namespace) -> tuple[list[str], list[str]]:
    from .ingest import to_wyscout_records, write_corpus
    from .synthetic import demo_styles, generate_corpus

    styles = demo_styles()
    names = list(styles)
    assignment = {team: styles[names[k % len(names)]] for k, team in enumerate(args.teams)}
    corpus = generate_corpus(assignment, args.n_events, args.seed, teams=args.teams, league=args.league,
                             season=args.season)
    outputs = []
    if args.out:
        write_corpus(corpus, args.out)
        outputs.append(args.out)
    if args.wyscout_dir:
        d = Path(args.wyscout_dir)
        d.mkdir(parents=True, exist_ok=True)
        events, matches = to_wyscout_records(corpus)
        (d / "events.json").write_text(json.dumps(events))
        (d / "matches.json").write_text(json.dumps(matches))
        outputs += [str(d / "events.json"), str(d / "matches.json")]
    if not outputs:
        raise CliError("synth needs --out and/or --wyscout-dir")
    print(json.dumps({"matches": len(corpus), "events": corpus.n_events,
                      "styles": {str(t): names[k % len(names)] for k, t in enumerate(args.teams)}}))
    return [], outputs


def cmd_train(args: argparse.Namespace) -> tuple[list[str], list[str]]:
    from .cascade import save_cascade
    from .ingest import Corpus, split_corpus
    from .train import STAGES, train_base

    corpus = _load_corpora(args.corpus)
    if args.train:
        train, val, _ = split_corpus(corpus, args.train, args.val or ())
    else:
        if args.val:
            raise CliError("--val needs --train selectors")
        train, val = corpus, Corpus((), corpus.vocabulary_version)
    stages = tuple(args.stages) if args.stages else STAGES
    cascade, history = train_base(train, val if len(val) else None, epochs=args.epochs, seed=args.seed,
                                  time_bin_seconds=args.time_bin_seconds, stages=stages)
    save_cascade(cascade, args.out)
    outputs = [args.out]
    if args.history:
        Path(args.history).write_text(json.dumps(history, indent=2) + "\n")
        outputs.append(args.history)
    return list(args.corpus), outputs


def cmd_finetune(args: argparse.Namespace) -> tuple[list[str], list[str]]:
    from .cascade import load_cascade, save_cascade
    from .train import FineTuneJob, FineTuneSpec, build_pairs, finetune, select_finetune_pairs

    inputs: list[str] = []
    if args.job:
        job = FineTuneJob.load(args.job)
        inputs.append(args.job)
        spec, base_path, corpus_paths = job.spec, job.base, [job.corpus]
        out, seed, epochs, repeats = job.output, job.seed, job.epochs, job.repeats
    else:
        missing = [f for f in ("base", "corpus", "out", "kind") if not getattr(args, f)]
        if missing:
            raise CliError("finetune needs --job or " + ", ".join("--" + m for m in missing))
        spec = FineTuneSpec(
            kind=args.kind,
            team_id=None if args.team is None else _parse_id(args.team),
            player_id=None if args.player is None else _parse_id(args.player),
            replaced_player_id=None if args.replaced is None else _parse_id(args.replaced),
            home_only=args.is_home,
            team_scope=args.team_scope,
        )
        base_path, corpus_paths = args.base, list(args.corpus)
        out, seed, epochs, repeats = args.out, args.seed, args.epochs, args.repeats
    if repeats < 1:
        raise CliError("--repeats must be >= 1")
    base = load_cascade(base_path)
    pairs = select_finetune_pairs(build_pairs(_load_corpora(corpus_paths), base.time_bin_seconds), spec)
    logger.info("fine-tuning on %d pairs, %d repeat(s)", len(pairs), repeats)
    outputs = []
    for k in range(repeats):
        tuned = finetune(base, pairs, spec, epochs=epochs, seed=seed + k)
        path = _suffixed(out, k, repeats)
        save_cascade(tuned, path)
        outputs.append(path)
    return [base_path, *corpus_paths, *inputs], outputs


def _batch_config(args: argparse.Namespace):
    from .sim import BatchConfig

    return BatchConfig(n_simulations=args.n_sims, base_seed=args.seed, max_events_per_match=args.max_events,
                       half_length_minutes=args.half_length, temperature=args.temperature,
                       workers=args.workers, keep_events=False)


def cmd_simulate(args: argparse.Namespace) -> tuple[list[str], list[str]]:
    from .cascade import load_cascade
    from .sim import simulate_batch, write_results_csv, write_summary_json

    c = load_cascade(args.model)
    batch = simulate_batch(c, _batch_config(args))
    write_results_csv(batch, args.out, c.vocabulary.names)
    outputs = [args.out]
    if args.summary:
        write_summary_json(batch, args.summary)
        outputs.append(args.summary)
    print(json.dumps(batch.summary(), sort_keys=True))
    return [args.model], outputs


def _read_reference(path: str) -> dict[str, Any]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "team" not in rows[0] or "rank" not in rows[0]:
        raise CliError(f"{path}: reference table needs columns team, rank[, home_rank]")
    ref = {}
    for r in rows:
        home = r.get("home_rank")
        ref[r["team"]] = int(r["rank"]) if not home else (int(r["rank"]), int(home))
    return ref


def cmd_league(args: argparse.Namespace) -> tuple[list[str], list[str]]:
    from .analytics import match_stats, project_league, write_projection_csv, write_stats_csv
    from .cascade import load_cascade
    from .sim import simulate_batch

    teams = _pairs(args.team, "--team")
    if not teams:
        raise CliError("league needs at least one --team NAME=MODEL")
    reference = _read_reference(args.reference)
    cfg = _batch_config(args)
    batches, stats = {}, {}
    for name, path in teams:
        c = load_cascade(path)
        batch = simulate_batch(c, cfg)
        batches[name] = batch
        stats[name] = match_stats(batch.results, c.vocabulary)
        logger.info("%s: %.4f expected points", name, batch.summary()["expected_points"])
    proj = project_league(batches, reference, top_k=args.top_k)
    write_projection_csv(proj, args.out)
    outputs = [args.out]
    if args.stats_out:
        write_stats_csv(stats, args.stats_out)
        outputs.append(args.stats_out)
    print(json.dumps({"avg_displacement": proj.avg_displacement, f"top{proj.top_k}_displacement":
                      proj.top_k_displacement}))
    return [p for _, p in teams] + [args.reference], outputs


def cmd_scenario(args: argparse.Namespace) -> tuple[list[str], list[str]]:
    from .analytics import points_distribution, write_distribution_csv, write_distribution_summary_csv
    from .cascade import load_cascade
    from .sim import simulate_batch

    scenarios = _pairs(args.scenario, "--scenario")
    if not scenarios:
        raise CliError("scenario needs at least one --scenario NAME=MODEL")
    cfg = _batch_config(args)
    baseline = simulate_batch(load_cascade(args.baseline), cfg)
    batches = {name: simulate_batch(load_cascade(path), cfg) for name, path in scenarios}
    dists = points_distribution(baseline, batches, n_bootstrap=args.bootstrap, seed=args.seed)
    write_distribution_csv(dists, args.out)
    outputs = [args.out]
    if args.summary_out:
        write_distribution_summary_csv(dists, args.summary_out)
        outputs.append(args.summary_out)
    print(json.dumps({d.scenario: {"mean": d.mean, "delta_mean": d.delta_mean} for d in dists}))
    return [args.baseline] + [p for _, p in scenarios], outputs


def cmd_replay(args: argparse.Namespace) -> tuple[list[str], list[str]]:
    manifest = json.loads(Path(args.manifest).read_text())
    if args.verify:
        for path, digest in manifest.get("inputs", {}).items():
            if sha256_file(path) != digest:
                raise CliError(f"input {path} changed since the manifest was written")
    config = dict(manifest["config"])
    command = manifest["command"]
    if command not in COMMANDS or command == "replay":
        raise CliError(f"manifest names unknown command {command!r}")
    ns = argparse.Namespace(**config)
    _, outputs = COMMANDS[command][0](ns)
    if args.verify:
        bad = [p for p in outputs if sha256_file(p) != manifest["outputs"].get(p)]
        if bad:
            raise CliError(f"replayed outputs differ from the manifest: {bad}")
    return [], []


COMMANDS: dict[str, tuple[Callable[[argparse.Namespace], tuple[list[str], list[str]]], str]] = {
    "ingest": (cmd_ingest, "parse a Wyscout-style event file into the columnar event format"),
    "synth": (cmd_synth, "generate a synthetic demo corpus"),
    "train": (cmd_train, "train a base cascade"),
    "finetune": (cmd_finetune, "fine-tune a base cascade on a team/player subset"),
    "simulate": (cmd_simulate, "simulate matches and export per-simulation results"),
    "league": (cmd_league, "project a league table from per-team cascades"),
    "scenario": (cmd_scenario, "compare points distributions of scenario cascades to a baseline"),
    "replay": (cmd_replay, "re-run a command from its manifest"),
}


# -- parser -----------------------------------------------------------------


def _sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-sims", type=int, default=2500, help="simulations per batch (default 2500)")
    p.add_argument("--half-length", type=float, default=47.0, help="effective minutes per half")
    p.add_argument("--max-events", type=int, default=4000, help="per-match event guard")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--workers", type=int, default=1, help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lemsim", description="Large events models for soccer: train, fine-tune, simulate.")
    parser.add_argument("--version", action="version", version=f"lemsim {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file whose keys mirror the flags")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--manifest", help="manifest path (default: <first output>.manifest.json)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    ps = {name: sub.add_parser(name, parents=[common], help=text, description=text)
          for name, (_, text) in COMMANDS.items()}

    p = ps["ingest"]
    p.add_argument("--events", required=True, help="Wyscout events JSON array")
    p.add_argument("--matches", help="Wyscout matches JSON (home/away sides)")
    p.add_argument("--league", default="")
    p.add_argument("--season", default="")
    p.add_argument("--on-unknown", choices=("drop", "error"), default="drop")
    p.add_argument("--out", required=True, help="columnar event file to write")
    p.add_argument("--csv", help="also export a CSV for inspection")

    p = ps["synth"]
    p.add_argument("--n-events", type=int, default=20000)
    p.add_argument("--teams", nargs="+", default=["North", "South", "East", "West"])
    p.add_argument("--league", default="SYN")
    p.add_argument("--season", default="synthetic")
    p.add_argument("--out", help="columnar event file to write")
    p.add_argument("--wyscout-dir", help="also write events.json/matches.json here")

    p = ps["train"]
    p.add_argument("--corpus", nargs="+", required=True, help="columnar event files")
    p.add_argument("--train", nargs="*", help="league selectors (LEAGUE or LEAGUE@SEASON)")
    p.add_argument("--val", nargs="*", help="validation league selectors")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--time-bin-seconds", type=float, default=1.0,
                   help="width of one elapsed-time bin (default 1 s)")
    p.add_argument("--stages", nargs="+", choices=("type", "accuracy", "data"))
    p.add_argument("--out", required=True, help="cascade checkpoint to write")
    p.add_argument("--history", help="write per-epoch losses as JSON")

    p = ps["finetune"]
    p.add_argument("--job", help="JSON fine-tune job descriptor (overrides the flags below)")
    p.add_argument("--base", help="base cascade checkpoint")
    p.add_argument("--corpus", nargs="+", help="columnar event files")
    p.add_argument("--kind", choices=("team", "player", "player_addition", "player_replacement"))
    p.add_argument("--team")
    p.add_argument("--player")
    p.add_argument("--replaced", help="outgoing player for player_replacement")
    p.add_argument("--is-home", action=argparse.BooleanOptionalAction, default=True,
                   help="restrict the team side to home matches (default on)")
    p.add_argument("--team-scope", choices=("events", "matches"), default="events")
    p.add_argument("--epochs", type=int, default=25)
    p.add_argument("--repeats", type=int, default=1, help="independent fine-tunes with seeds seed..seed+R-1")
    p.add_argument("--out", help="checkpoint path; _rNN is appended when --repeats > 1")

    p = ps["simulate"]
    p.add_argument("--model", required=True)
    _sim_flags(p)
    p.add_argument("--out", required=True, help="per-simulation CSV")
    p.add_argument("--summary", help="summary JSON")

    p = ps["league"]
    p.add_argument("--team", action="append", help="TEAM=MODEL, once per team")
    p.add_argument("--reference", required=True, help="CSV with team, rank[, home_rank]")
    p.add_argument("--top-k", type=int, default=6)
    _sim_flags(p)
    p.add_argument("--out", required=True, help="projection CSV")
    p.add_argument("--stats-out", help="per-game statistics CSV")

    p = ps["scenario"]
    p.add_argument("--baseline", required=True, help="baseline cascade")
    p.add_argument("--scenario", action="append", help="NAME=MODEL, once per scenario")
    p.add_argument("--bootstrap", type=int, default=2000, help="season bootstrap draws")
    _sim_flags(p)
    p.add_argument("--out", required=True, help="long-format distribution CSV")
    p.add_argument("--summary-out", help="per-scenario summary CSV")

    p = ps["replay"]
    p.add_argument("manifest")
    p.add_argument("--verify", action="store_true", help="check input and output hashes")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> None:
    """Feed a --config TOML file in as defaults so explicit flags still win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    pre.add_argument("command", nargs="?")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        with open(known.config, "rb") as fh:
            doc = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise CliError(f"cannot read config {known.config}: {exc}") from exc
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    target = sub.choices.get(known.command)
    if target is None:
        return
    # top-level keys are shared by every command; [command] tables are specific
    shared = {k.replace("-", "_"): v for k, v in doc.items() if not isinstance(v, dict)}
    own = {k.replace("-", "_"): v for k, v in doc.get(known.command, {}).items()}
    every = {a.dest for p in sub.choices.values() for a in p._actions}
    dests = {a.dest for a in target._actions}
    unknown = sorted((set(shared) - every) | (set(own) - dests))
    if unknown:
        raise CliError(f"config keys not understood by {known.command}: {unknown}")
    values = {k: v for k, v in shared.items() if k in dests}
    values.update(own)
    target.set_defaults(**values)


def _write_manifest(args: argparse.Namespace, inputs: list[str], outputs: list[str]) -> str | None:
    if not outputs:
        return None
    config = {k: v for k, v in vars(args).items() if k not in ("func", "config", "manifest", "verbose")}
    doc = {
        "lemsim_version": __version__,
        "command": args.command,
        "config": config,
        "inputs": {p: sha256_file(p) for p in inputs},
        "outputs": {p: sha256_file(p) for p in outputs},
    }
    path = args.manifest or outputs[0] + MANIFEST_SUFFIX
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    command = None
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        command = args.command
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        inputs, outputs = COMMANDS[command][0](args)
        _write_manifest(args, inputs, outputs)
    except SystemExit as exc:
        return int(exc.code or 0)
    except Exception as exc:  # every failure leaves one JSON line on stderr
        _emit_error(type(exc).__name__, str(exc), command)
        logger.debug("command failed", exc_info=True)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
