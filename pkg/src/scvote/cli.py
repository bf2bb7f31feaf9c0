"""Command line entry points for running an election from files on disk."""

from __future__ import annotations

import argparse
import json
import logging
import subprocess
import sys
from pathlib import Path

from . import crypto, storage
from .election import ElectionConfig
from .errors import AbortError, IntegrityError, ParseError, Rejection
from .setup_component import MODES, cc_seed, gen_cc_partials, run_setup, select_audit_ids, verify_audit
from .sheets import render_sheet_text
from .simulation import EXIT_CODES, ComponentKeys, Scenario, component_exports, run_scenario
from .tally import TallyTranscript, run_tally, verify_transcript
from .transport import ConfigError, Gateway
from .voter import VoterSession

log = logging.getLogger("scvote")


def _out(args) -> Path:
    return Path(args.out)


def _load_components(out: Path, persist: bool = True):
    bundle = storage.PublicBundle.load(out / "public.json")
    return bundle, {i: storage.load_component(out, i, bundle, persist=persist) for i in storage.component_indices(out)}


def cmd_setup(args) -> int:
    config = ElectionConfig.load(args.election)
    if args.ncc:
        config = ElectionConfig.from_dict({**config.to_dict(), "ncc": args.ncc})
    seed = args.seed
    keys = ComponentKeys.generate(config.ncc, seed)
    partials = None
    if args.mode == "cc-generated":
        padded = config.with_padding(crypto.derive_rng(seed, "padding"))
        partials = [gen_cc_partials(padded, cc_seed(seed, i)) for i in range(1, config.ncc + 1)]
    setup = run_setup(config, keys.election_key, seed=seed, mode=args.mode, cc_partials=partials)
    storage.save_setup(_out(args), setup, keys.sig, keys.eg)
    print(f"setup: {len(setup.sheets)} sheets for {setup.config.ncc} components written to {args.out}")
    return 0


def cmd_print_sheets(args) -> int:
    out = _out(args)
    sheets = storage.load_sheets(out)
    if args.id:
        if args.id not in sheets:
            print(f"no sheet for {args.id}", file=sys.stderr)
            return EXIT_CODES["unknown-id"]
        print(render_sheet_text(sheets[args.id]), end="")
        return 0
    target = out / "print"
    target.mkdir(parents=True, exist_ok=True)
    for vid, sheet in sheets.items():
        (target / f"{vid}.txt").write_text(render_sheet_text(sheet))
    print(f"printed {len(sheets)} sheets to {target}")
    return 0


def _parse_choices(items) -> dict[str, list[str]]:
    choices = {}
    for item in items or []:
        qid, _, picks = item.partition("=")
        if not picks:
            raise ConfigError(f"choice {item!r} should look like question=option[,option]")
        choices[qid] = [p for p in picks.split(",") if p]
    return choices


def _voter_exit(outcome: str, rejection: dict | None) -> int:
    if outcome == "rejected":
        return EXIT_CODES.get((rejection or {}).get("error"), EXIT_CODES["abort"])
    return EXIT_CODES.get(outcome, 0)


def cmd_vote(args) -> int:
    out = _out(args)
    if args.script:
        votes = json.loads(Path(args.script).read_text())
    else:
        votes = [{"id": args.id, "choices": _parse_choices(args.choice), "confirm": not args.no_confirm}]
    if args.gateway:
        from .service import HttpGatewayClient

        client = HttpGatewayClient(args.gateway)
        ncc = len(storage.PublicBundle.load(out / "public.json").sig_publics)
    else:
        bundle, components = _load_components(out)
        client = Gateway(bundle.config, list(components.values()),
                         retired=set().union(*[cc.retired for cc in components.values()]))
        client.sync_mirror = set().union(*[cc.sync for cc in components.values()])
        ncc = len(components)
    code = 0
    for vote in votes:
        sheet_path = Path(args.sheet) if args.sheet and not args.script else out / "sheets" / f"{vote['id']}.json"
        if not sheet_path.exists():
            print(f"{vote['id']}: no ballot sheet", file=sys.stderr)
            code = code or EXIT_CODES["unknown-id"]
            continue
        sheet = storage.load_sheet(sheet_path)
        session = VoterSession.login(sheet.qr_payload, sheet, ncc, client)
        try:
            cast_ok = session.cast(vote["choices"])
        except ValueError as exc:
            print(f"{vote['id']}: {exc}", file=sys.stderr)
            code = code or EXIT_CODES["usage"]
            continue
        if cast_ok and vote.get("confirm", True):
            session.confirm()
        detail = f" ({session.rejection.get('error')} from {session.rejection.get('source')})" \
            if session.outcome == "rejected" and session.rejection else ""
        print(f"{vote['id']}: {session.outcome}{detail}")
        code = code or _voter_exit(session.outcome, session.rejection)
    return code


def cmd_audit(args) -> int:
    out = _out(args)
    bundle, components = _load_components(out)
    config = bundle.config
    if args.pick:
        picks = {}
        for item in args.pick:
            idx, _, ids = item.partition("=")
            picks[int(idx.removeprefix("cc"))] = [i for i in ids.split(",") if i]
        choices = [picks.get(i, []) for i in components]
    else:
        rng = crypto.derive_rng(args.seed, "audit")
        # a real voter's Id is bound to that voter, so the default draw audits padding only
        chosen = rng.sample(sorted(config.padding_ids), config.audit_padding)
        choices = [chosen[n::len(components)] for n in range(len(components))]
    synced = set().union(*[cc.sync for cc in components.values()])
    audit_ids = select_audit_ids(config, choices, synced)
    sheets = storage.load_sheets(out)
    randomness = storage.load_audit_randomness(out, config)
    verdicts = {}
    for vid in sorted(audit_ids):
        partials = [components[i].records[vid].partial for i in sorted(components)]
        rec = components[1].records[vid]
        verdicts[vid] = verify_audit(config, vid, partials, sheets[vid], rec.hca, rec.cte, randomness[vid],
                                     bundle_key(bundle))
    for cc in components.values():
        cc.retire(audit_ids)
    report = {"audited": sorted(audit_ids), "verdicts": verdicts}
    (out / "bulletin").mkdir(exist_ok=True)
    (out / "bulletin" / "audit.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    bad = {vid: v for vid, v in verdicts.items() if v}
    for vid, v in sorted(verdicts.items()):
        print(f"{vid}: {'ok' if not v else 'MISMATCH ' + ','.join(v)}")
    if bad:
        print("setup audit failed; the election must be aborted", file=sys.stderr)
        return EXIT_CODES["abort"]
    return 0


def bundle_key(bundle: storage.PublicBundle) -> int:
    return crypto.eg_aggregate(bundle.eg_publics.values())


def cmd_close(args) -> int:
    out = _out(args)
    _, components = _load_components(out)
    for i, cc in components.items():
        cc.close()
        storage.publish_exports(out, i, component_exports(cc))
    print(f"closed {len(components)} components; exports published to {out / 'bulletin'}")
    return 0


def _read_exclude(path: str | None) -> list[str]:
    if not path:
        return []
    text = Path(path).read_text()
    try:
        return list(json.loads(text))
    except json.JSONDecodeError:
        return [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]


def cmd_tally(args) -> int:
    out = _out(args)
    bundle, components = _load_components(out, persist=False)
    posts = list(storage.read_bulletin(out).values())
    agreed = {i: cc.votes_agre(posts) for i, cc in components.items()}
    if len({tuple(v) for v in agreed.values()}) != 1:
        raise IntegrityError("components disagree on the votes to tally")
    votes = next(iter(agreed.values()))
    transcript = run_tally(list(components.values()), votes, bundle.config, bundle.eg_publics,
                           _read_exclude(args.exclude))
    path = Path(args.transcript) if args.transcript else out / "transcript.json"
    path.write_text(transcript.to_json())
    for qid, counts in transcript.counts().items():
        print(f"{qid}: " + ", ".join(f"{o}={n}" for o, n in counts.items()))
    print(f"transcript written to {path}")
    return 0


def cmd_verify(args) -> int:
    out = Path(args.out) if args.out else None
    public = Path(args.public) if args.public else out / "public.json"
    path = Path(args.transcript) if args.transcript else out / "transcript.json"
    bundle = storage.PublicBundle.load(public)
    try:
        transcript = TallyTranscript.from_json(path.read_text())
    except (ValueError, KeyError, TypeError) as exc:
        print(f"FAIL parse: {exc}")
        return EXIT_CODES["expectation"]
    failures = verify_transcript(transcript, bundle.config, bundle.sig_publics, bundle.eg_publics,
                                 bundle.hca_table, bundle.cte_commits)
    for f in failures:
        print(f"FAIL {f}")
    if failures:
        return EXIT_CODES["expectation"]
    print(f"OK {len(transcript.entries)} entries, counts {transcript.counts()}")
    return 0


def cmd_simulate(args) -> int:
    raw = json.loads(Path(args.scenario).read_text())
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.ncc:
        raw["ncc"] = args.ncc
    if args.mode:
        raw["mode"] = args.mode
    scenario = Scenario.from_dict(raw, Path(args.scenario).parent)
    result = run_scenario(scenario)
    if args.out:
        out = _out(args)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(result.report_json())
        (out / "trace.jsonl").write_text("".join(line + "\n" for line in result.trace))
        if result.transcript is not None:
            (out / "transcript.json").write_text(result.transcript.to_json())
    outcomes = {}
    for o in result.outcomes.values():
        outcomes[o] = outcomes.get(o, 0) + 1
    print(f"scenario {scenario.name}: voters {outcomes}")
    if result.transcript is not None:
        print(f"counts {result.transcript.counts()}")
    if result.tally_error:
        print(f"tally aborted: {result.tally_error}")
    for f in result.failures:
        print(f"FAIL {f}")
    print(f"exit {result.exit_code}")
    return result.exit_code


def cmd_serve(args) -> int:
    import uvicorn

    from .service import RemoteComponent, component_app, gateway_app

    out = _out(args)
    bundle = storage.PublicBundle.load(out / "public.json")
    indices = storage.component_indices(out)
    if args.component:
        cc = storage.load_component(out, args.component, bundle)
        uvicorn.run(component_app(cc), host=args.host, port=args.port + args.component, log_level="warning")
        return 0
    children = []
    if args.processes:
        for i in indices:
            cmd = [sys.executable, "-m", "scvote", "serve", "--out", str(out), "--component", str(i),
                   "--host", args.host, "--port", str(args.port)]
            children.append(subprocess.Popen(cmd))
        components = [RemoteComponent(i, f"http://{args.host}:{args.port + i}", bundle.config, args.timeout)
                      for i in indices]
        retired, synced = set(), set()
    else:
        local = [storage.load_component(out, i, bundle) for i in indices]
        components = local
        retired = set().union(*[cc.retired for cc in local])
        synced = set().union(*[cc.sync for cc in local])
    gateway = Gateway(bundle.config, components, retired)
    gateway.sync_mirror = synced
    try:
        uvicorn.run(gateway_app(gateway), host=args.host, port=args.port, log_level="info")
    finally:
        for child in children:
            child.terminate()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scvote", description="Code-voting election tooling.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("setup", help="generate sheets and component state")
    p.add_argument("--election", required=True)
    p.add_argument("--seed", default=None)
    p.add_argument("--ncc", type=int)
    p.add_argument("--mode", choices=MODES, default="central")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_setup)

    p = sub.add_parser("print-sheets", help="render printable sheets")
    p.add_argument("--out", required=True)
    p.add_argument("--id")
    p.set_defaults(func=cmd_print_sheets)

    p = sub.add_parser("serve", help="run the gateway and the control components over HTTP")
    p.add_argument("--out", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8700)
    p.add_argument("--processes", action="store_true", help="one OS process per component")
    p.add_argument("--component", type=int, help=argparse.SUPPRESS)
    p.add_argument("--timeout", type=float, default=10.0)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("vote", help="play a scripted voter")
    p.add_argument("--out", required=True)
    p.add_argument("--id")
    p.add_argument("--choice", action="append", help="question=option[,option]")
    p.add_argument("--no-confirm", action="store_true")
    p.add_argument("--sheet")
    p.add_argument("--script", help="JSON list of {id, choices, confirm}")
    p.add_argument("--gateway", help="gateway base URL; default runs the components in-process")
    p.set_defaults(func=cmd_vote)

    p = sub.add_parser("audit", help="audit padding Ids against the setup output")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", default=None)
    p.add_argument("--pick", action="append", help="cc<i>=ID[,ID]")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("close", help="end voting and publish confirmation proofs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_close)

    p = sub.add_parser("tally", help="agree on votes, decrypt and write the transcript")
    p.add_argument("--out", required=True)
    p.add_argument("--exclude", help="file listing Ids that also voted over another channel")
    p.add_argument("--transcript")
    p.set_defaults(func=cmd_tally)

    p = sub.add_parser("verify", help="check a transcript with public data only")
    p.add_argument("--out")
    p.add_argument("--transcript")
    p.add_argument("--public")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="run a full election under an adversary scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", default=None)
    p.add_argument("--ncc", type=int)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "verify" and not (args.out or (args.transcript and args.public)):
        parser.error("verify needs --out or both --transcript and --public")
    try:
        return args.func(args)
    except Rejection as exc:
        print(f"rejected: {exc.code} {exc.detail}", file=sys.stderr)
        return EXIT_CODES[exc.code]
    except (ConfigError, ParseError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CODES["config"]
    except AbortError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_CODES["abort"]


if __name__ == "__main__":
    sys.exit(main())
