"""Scenario runner.

A scenario is plain text: ``key = value`` header lines, then one command
per line. ``#`` starts a comment and message bodies are hex.

Header keys: ``variant``, ``seed``, ``nmax``, ``roster`` (space separated),
``users`` (extra users that join later), ``keys`` (``auto`` or
``manual``), ``predicate``, ``block_size``, ``expect`` and ``trace``
(``on``/``off``).

Commands::

    setup [creator]                 pre-established group of the roster
    create <creator> <member>...    group creation only
    add <actor> <new>
    remove <actor> <target>
    update <actor>
    send <user> <hex>
    challenge <user> <hex0> <hex1>
    deliver <user> <seq>|all
    redeliver <user> <seq>
    deliver-all
    tp_deliver <user> [sender]
    expose <user>
    expmk <user> <index>
    forge <sender> <receiver> <index> <hex>   new ciphertext under a leaked key
    forge-meta <receiver> <seq>                honest frame at seq, re-signed
    receive <user> <claimed> <hex-frame>
    rng <user> <hex>|off
    finalize <0|1>
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import crypto
from .core import Frame, SenderKeysError
from .game import Game, GameError, Outcome, Predicate, judge_cleanness
from .transport import TransportError
from .variants import Variant

SEED_ENV = "SENDERKEYS_SEED"
EXPECTATIONS = ("win", "lose", "dirty", "accept", "reject")

# command -> (min args, max args); None = unbounded
_ARITY = {
    "setup": (0, 1),
    "create": (2, None),
    "add": (2, 2),
    "remove": (2, 2),
    "update": (1, 1),
    "send": (2, 2),
    "challenge": (3, 3),
    "deliver": (2, 2),
    "redeliver": (2, 2),
    "deliver-all": (0, 0),
    "tp_deliver": (1, 2),
    "expose": (1, 1),
    "expmk": (2, 2),
    "forge": (4, 4),
    "forge-meta": (2, 2),
    "receive": (3, 3),
    "rng": (2, 2),
    "finalize": (1, 1),
}
# positions of user arguments per command; "*" means every argument
_USER_ARGS = {
    "setup": (0,),
    "create": "*",
    "add": (0, 1),
    "remove": (0, 1),
    "update": (0,),
    "send": (0,),
    "challenge": (0,),
    "deliver": (0,),
    "redeliver": (0,),
    "tp_deliver": (0, 1),
    "expose": (0,),
    "expmk": (0,),
    "forge": (0, 1),
    "forge-meta": (0,),
    "receive": (0, 1),
    "rng": (0,),
}
_HEX_ARGS = {"send": (1,), "challenge": (1, 2), "forge": (3,), "receive": (2,)}
_INT_ARGS = {"expmk": (1,), "forge": (2,), "forge-meta": (1,), "redeliver": (1,), "finalize": (0,)}


class ScenarioError(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


@dataclass
class Command:
    line: int
    name: str
    args: list[str]


@dataclass
class Scenario:
    variant: str = Variant.BASELINE.value
    seed: int = 0
    nmax: int = 2000
    roster: list[str] = field(default_factory=list)
    users: list[str] = field(default_factory=list)
    auto_keys: bool = True
    predicate: str = Predicate.BASELINE.value
    block_size: int = 1
    expect: str | None = None
    trace: bool = False
    commands: list[Command] = field(default_factory=list)

    @property
    def declared(self) -> list[str]:
        return list(dict.fromkeys(self.roster + self.users))


def _set_header(sc: Scenario, line: int, key: str, value: str) -> None:
    try:
        if key == "variant":
            sc.variant = Variant(value).value
        elif key == "seed":
            sc.seed = int(value, 0)
        elif key == "nmax":
            sc.nmax = int(value, 0)
            if sc.nmax < 0:
                raise ValueError("nmax must be non-negative")
        elif key == "roster":
            sc.roster = value.split()
        elif key == "users":
            sc.users = value.split()
        elif key == "keys":
            if value not in ("auto", "manual"):
                raise ValueError("keys must be auto or manual")
            sc.auto_keys = value == "auto"
        elif key == "predicate":
            sc.predicate = Predicate(value).value
        elif key == "block_size":
            sc.block_size = int(value, 0)
            if sc.block_size < 1:
                raise ValueError("block_size must be positive")
        elif key == "expect":
            if value not in EXPECTATIONS:
                raise ValueError(f"expect must be one of {', '.join(EXPECTATIONS)}")
            sc.expect = value
        elif key == "trace":
            if value not in ("on", "off"):
                raise ValueError("trace must be on or off")
            sc.trace = value == "on"
        else:
            raise ValueError(f"unknown header key {key!r}")
    except ValueError as exc:
        raise ScenarioError(line, str(exc)) from None


def _check_command(sc: Scenario, cmd: Command) -> None:
    lo, hi = _ARITY[cmd.name]
    n = len(cmd.args)
    if n < lo or (hi is not None and n > hi):
        want = str(lo) if lo == hi else f"{lo}..{'n' if hi is None else hi}"
        raise ScenarioError(cmd.line, f"{cmd.name} takes {want} arguments, got {n}")
    declared = set(sc.declared)
    positions = _USER_ARGS.get(cmd.name, ())
    for pos, arg in enumerate(cmd.args):
        if (positions == "*" or pos in positions) and arg not in declared:
            raise ScenarioError(cmd.line, f"undeclared user {arg!r}")
        if pos in _HEX_ARGS.get(cmd.name, ()):
            try:
                bytes.fromhex(arg)
            except ValueError:
                raise ScenarioError(cmd.line, f"bad hex {arg!r}") from None
        if pos in _INT_ARGS.get(cmd.name, ()):
            try:
                if int(arg, 0) < 0:
                    raise ValueError
            except ValueError:
                raise ScenarioError(cmd.line, f"expected a non-negative integer, got {arg!r}") from None
    if cmd.name in ("deliver",) and cmd.args[1] != "all":
        try:
            int(cmd.args[1], 0)
        except ValueError:
            raise ScenarioError(cmd.line, f"expected a seq or 'all', got {cmd.args[1]!r}") from None
    if cmd.name == "rng" and cmd.args[1] != "off":
        try:
            if not bytes.fromhex(cmd.args[1]):
                raise ValueError
        except ValueError:
            raise ScenarioError(cmd.line, f"rng needs non-empty hex or 'off', got {cmd.args[1]!r}") from None
    if cmd.name == "finalize" and cmd.args[0] not in ("0", "1"):
        raise ScenarioError(cmd.line, "finalize takes 0 or 1")


def parse_scenario(text: str) -> Scenario:
    sc = Scenario()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line and not sc.commands:
            key, _, value = line.partition("=")
            _set_header(sc, lineno, key.strip(), value.strip())
            continue
        name, *args = line.split()
        if name not in _ARITY:
            raise ScenarioError(lineno, f"unknown command {name!r}")
        sc.commands.append(Command(lineno, name, args))
    for cmd in sc.commands:
        _check_command(sc, cmd)
    if sc.commands and not sc.roster:
        raise ScenarioError(sc.commands[0].line, "scenario has commands but no roster")
    return sc


# --------------------------------------------------------------------------
# execution


class _ListHandler(logging.Handler):
    def __init__(self) -> None:
        super().__init__(logging.DEBUG)
        self.lines: list[str] = []

    def emit(self, record: logging.LogRecord) -> None:
        self.lines.append(record.getMessage())


@dataclass
class RunResult:
    report: str
    outcome: Outcome | None
    forgeries: list[bool]
    game: Game | None

    @property
    def forgery_accepted(self) -> bool | None:
        return any(self.forgeries) if self.forgeries else None

    def matches(self, expect: str | None) -> bool:
        if expect is None:
            return True
        if expect in ("accept", "reject"):
            return self.forgery_accepted is (expect == "accept")
        return self.outcome is not None and self.outcome.value == expect


def _execute(game: Game, cmd: Command, forgeries: list[bool]):
    a = cmd.args
    name = cmd.name
    if name == "setup":
        game.setup(a[0] if a else None)
    elif name == "create":
        game.o_create(a[0], a)
    elif name == "add":
        game.o_add(a[0], a[1])
    elif name == "remove":
        game.o_remove(a[0], a[1])
    elif name == "update":
        game.o_update(a[0])
    elif name == "send":
        game.o_send(a[0], bytes.fromhex(a[1]))
    elif name == "challenge":
        game.o_challenge(a[0], bytes.fromhex(a[1]), bytes.fromhex(a[2]))
    elif name == "deliver":
        if a[1] == "all":
            game.deliver_all([a[0]])
        else:
            game.o_deliver(a[0], int(a[1], 0))
    elif name == "redeliver":
        game.o_deliver(a[0], int(a[1], 0), redeliver=True)
    elif name == "deliver-all":
        game.deliver_all()
    elif name == "tp_deliver":
        game.o_deliver_keys(a[0], a[1] if len(a) > 1 else None)
    elif name == "expose":
        game.o_expose(a[0])
    elif name == "expmk":
        game.o_expmk(a[0], int(a[1], 0))
    elif name == "forge":
        forged = game.adversary.forge(a[0], int(a[2], 0), bytes.fromhex(a[3]))
        forgeries.append(game.o_deliver(a[1], payload=forged) == "accepted")
    elif name == "forge-meta":
        honest = game.ds.entry(int(a[1], 0)).payload
        if not isinstance(honest, Frame):
            raise GameError(f"entry {a[1]} is not a frame")
        forged = game.adversary.resign(honest)
        forgeries.append(game.o_deliver(a[0], payload=forged) == "accepted")
    elif name == "receive":
        game.o_receive(a[0], a[1], bytes.fromhex(a[2]))
    elif name == "rng":
        game.rng_control(a[0], None if a[1] == "off" else bytes.fromhex(a[1]))
    elif name == "finalize":
        return game.finalize(int(a[0]))
    return None


def _chain_lines(game: Game) -> list[str]:
    out = []
    for uid in game.members:
        st = game.users[uid]
        own = game.proto.own_chain(st)
        parts = [f"{uid}:"]
        parts.append(f"own={own[0]}@{own[1].index}" if own else "own=-")
        views = []
        for key_id, (nxt, skipped) in sorted(game.proto.reach(st).items()):
            owner = game.proto.chain_owner(st, key_id) or "?"
            if own and key_id == own[0]:
                continue
            extra = f"+skipped{sorted(skipped)}" if skipped else ""
            views.append(f"{owner}@{nxt}{extra}")
        parts.append("recv=" + (",".join(views) if views else "-"))
        out.append(" ".join(parts))
    return out


def run_scenario(sc: Scenario, trace: bool | None = None) -> RunResult:
    if not sc.commands:
        return RunResult("", None, [], None)
    trace = sc.trace if trace is None else trace
    game = Game(
        sc.declared,
        variant=sc.variant,
        seed=sc.seed,
        nmax=sc.nmax,
        predicate=sc.predicate,
        auto_keys=sc.auto_keys,
        block_size=sc.block_size,
    )
    handler = _ListHandler()
    logger = logging.getLogger("senderkeys")
    old_level = logger.level
    if trace:
        logger.addHandler(handler)
        logger.setLevel(logging.DEBUG)
    outcome: Outcome | None = None
    forgeries: list[bool] = []
    try:
        for cmd in sc.commands:
            try:
                result = _execute(game, cmd, forgeries)
            except (SenderKeysError, GameError, TransportError, ValueError) as exc:
                game.transcript.append("error", line=cmd.line, cmd=cmd.name, reason=str(exc).replace(" ", "_"))
                continue
            if result is not None:
                outcome = result
    finally:
        if trace:
            logger.removeHandler(handler)
            logger.setLevel(old_level)

    lines = [f"variant: {sc.variant}", f"seed: {sc.seed}", f"nmax: {sc.nmax}", f"roster: {' '.join(sc.roster)}"]
    lines += ["", "== events =="] + [e.render() for e in game.transcript]
    if trace:
        lines += ["", "== trace =="] + handler.lines + game.ds.trace
    lines += ["", "== chains =="] + _chain_lines(game)
    lines += ["", "== verdicts =="]
    for p in Predicate:
        v = judge_cleanness(game.transcript, p)
        mark = "*" if p.value == sc.predicate else " "
        detail = "clean" if v.clean else "dirty " + " ".join(f"{t}:{rule}" for t, rule in v.violations)
        lines.append(f"{mark} {p.value}: {detail}")
    lines += ["", f"outcome: {outcome.value if outcome else 'none'}"]
    if forgeries:
        lines.append("FORGERY ACCEPTED" if any(forgeries) else "FORGERY REJECTED")
    return RunResult("\n".join(lines) + "\n", outcome, forgeries, game)


# --------------------------------------------------------------------------
# entry points


def bundled_scenarios() -> list[str]:
    root = resources.files("senderkeys") / "scenarios"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".scn"))


def read_scenario_text(name: str) -> str:
    path = Path(name)
    if path.exists():
        return path.read_text()
    stem = name if name.endswith(".scn") else name + ".scn"
    bundled = resources.files("senderkeys") / "scenarios" / stem
    if bundled.is_file():
        return bundled.read_text()
    raise FileNotFoundError(f"no scenario file or bundled scenario named {name!r}")


def gen_vectors(out_path: str | Path) -> None:
    Path(out_path).write_text("\n".join(crypto.generate_vectors()) + "\n")


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        sc = parse_scenario(read_scenario_text(args.scenario))
    except ScenarioError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    env_seed = os.environ.get(SEED_ENV)
    try:
        if args.seed is not None:
            sc.seed = args.seed
        elif env_seed:
            sc.seed = int(env_seed, 0)
    except ValueError:
        print(f"error: {SEED_ENV} must be an integer", file=sys.stderr)
        return 2
    if args.variant:
        sc.variant = args.variant
    if args.nmax is not None:
        sc.nmax = args.nmax
    if args.predicate:
        sc.predicate = args.predicate
    expect = args.expect or sc.expect
    result = run_scenario(sc, trace=True if args.trace else None)
    if args.report:
        Path(args.report).write_text(result.report)
    else:
        sys.stdout.write(result.report)
    if not result.matches(expect):
        print(f"expectation {expect!r} not met", file=sys.stderr)
        return 1
    return 0


def _cmd_gen_vectors(args: argparse.Namespace) -> int:
    gen_vectors(args.out)
    return 0


def _cmd_list(args: argparse.Namespace) -> int:
    for name in bundled_scenarios():
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="senderkeys", description="Run Sender Keys scenarios and security-game scripts.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario file (or a bundled scenario by name)")
    run.add_argument("scenario")
    run.add_argument("--variant", choices=[v.value for v in Variant])
    run.add_argument("--seed", type=lambda s: int(s, 0), help=f"overrides the header and ${SEED_ENV}")
    run.add_argument("--nmax", type=int)
    run.add_argument("--predicate", choices=[p.value for p in Predicate])
    run.add_argument("--report", help="write the report here instead of stdout")
    run.add_argument("--expect", choices=EXPECTATIONS)
    run.add_argument("--trace", action="store_true", help="include the key-schedule trace")
    run.set_defaults(func=_cmd_run)

    vec = sub.add_parser("gen-vectors", help="write the crypto golden-vector file")
    vec.add_argument("out")
    vec.set_defaults(func=_cmd_gen_vectors)

    lst = sub.add_parser("list", help="list bundled scenarios")
    lst.set_defaults(func=_cmd_list)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
