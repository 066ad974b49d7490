"""Command-line front end for the experiment runner.

Every subcommand writes one table (CSV by default, JSON with
``--format json``) to ``--out`` or standard output.  Exit status is 0 on
success or a certified session, 2 on abort, 3 when the session is
inconclusive and 1 for usage or configuration errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

import numpy as np

from . import __version__
from .analysis import (
    DEFAULT_SEED_HEX,
    Table,
    attack_experiment,
    curve_blind_bound,
    default_biased_configs,
    experiment_biased_modulation,
    fringe_scan,
    run_full_session,
    sweep_smod_surface,
)
from .channel_sim import write_records
from .modulation import (
    SeedToken,
    TritRule,
    bits_to_trits_paper_rule,
    expand_stream,
    trits_to_bits_paper_rule,
)
from .protocol import SessionConfig, Verdict
from .quantum_core import DomainError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ABORT = 2
EXIT_INCONCLUSIVE = 3

DEFAULT_B_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
DEFAULT_P_GRID = (0.0, 1.0 / 7.0, 0.2, 0.5)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _load_json(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise UsageError("configuration file must hold a JSON object")
    return doc


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--seed", type=_u64, help="master seed (unsigned 64-bit)")
    p.add_argument("--out", help="output path (default: standard output)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--rounds", type=int, help="rounds per session or per grid cell")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ces", description="Controlled entanglement source simulator")
    parser.add_argument("--version", action="version", version=f"ces {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("session", help="run one full protocol session")
    _common(p)
    p.add_argument("--user-key-hex", help="key material the users present instead of the controller's")
    p.add_argument("--transcript", help="write the public detection records to this path")

    p = sub.add_parser("surface", help="S_mod over a (B, p) grid")
    _common(p)
    p.add_argument("--b-values", type=_floats, default=list(DEFAULT_B_GRID))
    p.add_argument("--p-values", type=_floats, default=list(DEFAULT_P_GRID))
    p.add_argument("--analytic-only", action="store_true", help="skip the Monte Carlo column")

    p = sub.add_parser("bias", help="sessions driven by biased repeated modulation strings")
    _common(p)
    p.add_argument("--visibility", type=float, default=0.961)
    p.add_argument("--string-length", type=int, default=5000)

    p = sub.add_parser("bound", help="expected |U| of a blind guess against N")
    _common(p)
    p.add_argument("--n-max", type=int, default=20)

    p = sub.add_parser("fringe", help="two-photon interference fringes")
    _common(p)
    p.add_argument("--visibility", type=float, default=0.961)
    p.add_argument("--offset", type=float, default=0.0)
    p.add_argument("--points", type=int, default=64)

    p = sub.add_parser("attack", help="tap pattern recovery and memory-attack replay")
    _common(p)
    p.add_argument("--p-values", type=_floats, default=[0.0, 0.1, 1.0 / 7.0, 0.2, 0.5])

    p = sub.add_parser("ternary", help="keystream expansion into trits with the pair rule")
    _common(p)
    p.add_argument("--bits", type=int, default=10**6, help="keystream bits to expand")
    p.add_argument("--key-hex", default=DEFAULT_SEED_HEX)
    return parser


def _session(args) -> tuple[Table, int]:
    doc = _load_json(args.config)
    if not doc:
        doc = {"seed": {"token_id": "default", "key_hex": DEFAULT_SEED_HEX}}
    if args.seed is not None:
        doc["sim_seed"] = args.seed
    if args.rounds is not None:
        doc["rounds"] = args.rounds
    config = SessionConfig.from_dict(doc)
    user_seed = None
    if args.user_key_hex:
        user_seed = SeedToken.from_hex(config.seed.token_id, args.user_key_hex)
    table, result = run_full_session(config, user_seed)
    if args.transcript:
        with open(args.transcript, "w", newline="") as fh:
            write_records(result.transcript.events, fh)
    code = {
        Verdict.CERTIFIED: EXIT_OK,
        Verdict.ABORT: EXIT_ABORT,
        Verdict.INCONCLUSIVE: EXIT_INCONCLUSIVE,
    }[result.verdict]
    return table, code


def _ternary(args, seed: int) -> Table:
    n_bits = args.rounds if args.rounds is not None else args.bits
    if n_bits < 2:
        raise UsageError("need at least two keystream bits")
    token = SeedToken.from_hex("ternary", args.key_hex)
    bits = expand_stream(token, n_bits)
    trits = bits_to_trits_paper_rule(bits)
    back = trits_to_bits_paper_rule(trits)
    counts = trits.counts()
    n = len(trits)
    sigma = float(np.sqrt(n * (1 / 7) * (6 / 7)))
    table = Table(
        "Ternary",
        ["bits", "trits", "count_0", "count_1", "count_2", "fraction_2", "expected_fraction_2",
         "deviation_sigma", "round_trip_exact"],
        master_seed=seed,
        params={"bits": n_bits, "rule": TritRule.PAPER_PAIR.value, "token_id": token.token_id},
    )
    table.rows.append([
        n_bits, n, counts[0], counts[1], counts[2], counts[2] / n, 1 / 7,
        (counts[2] - n / 7) / sigma, bool(np.array_equal(back, bits[: back.size])),
    ])
    return table


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    seed = args.seed if args.seed is not None else 0
    code = EXIT_OK
    try:
        if args.command == "session":
            table, code = _session(args)
        else:
            extra = _load_json(args.config)
            if args.command == "surface":
                table = sweep_smod_surface(
                    args.b_values, args.p_values, seed, args.rounds, simulate=not args.analytic_only, **extra
                )
            elif args.command == "bias":
                configs = extra.pop("configs", None) or default_biased_configs()
                table = experiment_biased_modulation(
                    configs, seed, args.visibility, args.string_length, args.rounds, **extra
                )
            elif args.command == "bound":
                table = curve_blind_bound(args.n_max, **extra)
            elif args.command == "fringe":
                table = fringe_scan(args.visibility, args.offset, args.points, **extra)
            elif args.command == "attack":
                if args.rounds is not None:
                    extra["key_rounds"] = args.rounds
                table = attack_experiment(seed, tuple(args.p_values), **extra)
            else:
                table = _ternary(args, seed)
    except (UsageError, ValueError, TypeError, DomainError, OSError, KeyError) as exc:
        print(f"ces: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = table.dump(args.out, args.format)
    if args.out is None:
        sys.stdout.write(text)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
