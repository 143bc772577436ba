"""
Command-line front end.

  run          run one scenario file and write its artifacts
  sweep        run a scenario over an axis (clients | attacker_ratio | noise) and seeds
  capacity     print B and R for T rounds, a position count and a cycle length
  encode-text  print the bitstream of a text payload
  decode-trace re-decode an observations.csv offline, optionally with another threshold policy

Exit codes: 0 ok, 1 payload not recovered, 2 usage, 3 configuration, 4 capacity exceeded,
5 output not writable, 6 codec framing/payload, 7 incomplete transmission.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from src.config import configure_logging, default_workers, fmt_float, paths
from src.covert.channel import ObservationLog, capacity, decode
from src.covert.codecs import bit_error_rate, encode_text, read_text_payload
from src.errors import (
    CapacityExceededError,
    CovertFLError,
    FramingError,
    IncompleteTransmissionError,
    OutputError,
    PayloadError,
)
from src.harness.artifacts import ensure_dir, write_json, write_payload
from src.harness.runner import run_scenario, run_sweep
from src.harness.scenario import load_scenario, parse_axis_values

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DECODE_MISMATCH = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_CAPACITY = 4
EXIT_OUTPUT = 5
EXIT_CODEC = 6
EXIT_INCOMPLETE = 7


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, CapacityExceededError):
        return EXIT_CAPACITY
    if isinstance(exc, OutputError):
        return EXIT_OUTPUT
    if isinstance(exc, (FramingError, PayloadError)):
        return EXIT_CODEC
    if isinstance(exc, IncompleteTransmissionError):
        return EXIT_INCOMPLETE
    return EXIT_CONFIG


def _rate(value: float) -> str:
    text = fmt_float(value)
    return text if any(c in text for c in ".en") else text + ".0"


def format_capacity(total_rounds: int, positions: int, cycle: int) -> str:
    cap = capacity(total_rounds, positions, cycle)
    return f"B={cap.total_bits} R={_rate(float(cap.rate))}"


# ---------------------------------------------------------------------------
# Verbs
# ---------------------------------------------------------------------------

def cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.config).with_overrides(
        seed=args.seed, threshold=args.threshold, noise=args.noise, out=args.out
    )
    artifacts = run_scenario(scenario)
    s = artifacts.summary
    print(f"scenario: {scenario.name}")
    if "ber" in s:
        print(f"BER: {fmt_float(s['ber'])} ({s['bit_errors']} of {s['payload_bits']} bits)")
        print(f"first-success round: {s['first_success_round']}")
    print(f"final global accuracy: {fmt_float(s['final_global_accuracy'])}")
    print(f"artifacts: {artifacts.out_dir}")
    return artifacts.exit_code


def cmd_sweep(args: argparse.Namespace) -> int:
    base = load_scenario(args.config).with_overrides(
        threshold=args.threshold, noise=args.noise
    )
    values = parse_axis_values(args.axis, args.values)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    out = args.out or str(Path(paths.RUNS) / f"sweep_{args.axis}")
    workers = args.workers if args.workers is not None else default_workers()
    runs, summary = run_sweep(base, args.axis, values, seeds, workers, out)
    for row in summary["series"]:
        print(
            f"{args.axis}={row['value']}: accuracy {fmt_float(row['final_accuracy'])} "
            f"amplitude {fmt_float(row['signal_amplitude'])} BER {fmt_float(row['ber'])}"
        )
    print(f"max accuracy gap: {fmt_float(summary['max_accuracy_gap'])}")
    if summary["amplitude_spearman"] is not None:
        print(f"amplitude spearman: {fmt_float(summary['amplitude_spearman'])}")
    return max(r.exit_code for r in runs)


def cmd_capacity(args: argparse.Namespace) -> int:
    print(format_capacity(args.rounds, args.positions, args.cycle))
    return EXIT_OK


def cmd_encode_text(args: argparse.Namespace) -> int:
    text = args.text if args.text is not None else read_text_payload(args.file)
    bits = encode_text(text)
    print(bits.to_string())
    logger.info("[cli] %d characters -> %d bits", len(text), len(bits))
    return EXIT_OK


def cmd_decode_trace(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.config).with_overrides(threshold=args.threshold)
    message = scenario.message()
    covert = scenario.covert_config(len(message))
    if covert is None:
        print("scenario has no covert channel", file=sys.stderr)
        return EXIT_CONFIG
    log = ObservationLog.from_csv(args.trace)
    received = message.reframe(decode(log, covert).bits)
    ber = bit_error_rate(message, received) if len(message) else 0.0
    print(f"decoded: {received.to_string()}")
    print(f"BER: {fmt_float(ber)}")
    if args.out:
        out = ensure_dir(args.out)
        write_payload(out, "decoded", received)
        write_json(out / "decode.json", {"ber": ber, "threshold": covert.threshold_policy.value})
    if ber == 0.0 or scenario.best_effort:
        return EXIT_OK
    return EXIT_DECODE_MISMATCH


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _unit_interval(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in [0, 1]")
    return value


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"{text} is not an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covert-fl", description="Federated learning covert channel simulator"
    )
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING (default from env)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario")
    run.add_argument("--config", required=True, help="scenario JSON file")
    run.add_argument("--out", help="output directory (overrides the scenario)")
    run.add_argument("--seed", type=_u64, help="override master_seed")
    run.add_argument("--threshold", choices=["zero", "mean"], help="receiver threshold policy")
    run.add_argument("--noise", type=_unit_interval, help="server noise level N_l")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run a scenario over one axis and several seeds")
    sweep.add_argument("--config", required=True, help="base scenario JSON file")
    sweep.add_argument("--axis", required=True, choices=["clients", "attacker_ratio", "noise"])
    sweep.add_argument("--values", required=True, help="comma-separated axis values")
    sweep.add_argument("--seeds", help="comma-separated master seeds (default: the scenario's)")
    sweep.add_argument("--workers", type=int, help="worker processes (default COVERT_FL_WORKERS)")
    sweep.add_argument("--out", help="sweep output directory")
    sweep.add_argument("--threshold", choices=["zero", "mean"], help="receiver threshold policy")
    sweep.add_argument("--noise", type=_unit_interval, help="server noise level N_l")
    sweep.set_defaults(func=cmd_sweep)

    cap = sub.add_parser("capacity", help="print channel capacity B and rate R")
    cap.add_argument("rounds", type=int, help="total rounds T")
    cap.add_argument("positions", type=int, help="covert positions per cycle")
    cap.add_argument("cycle", type=int, help="rounds per cycle")
    cap.set_defaults(func=cmd_capacity)

    enc = sub.add_parser("encode-text", help="print the bits of a text payload")
    src = enc.add_mutually_exclusive_group(required=True)
    src.add_argument("--text", help="inline text")
    src.add_argument("--file", help="UTF-8 text file (8-bit clean)")
    enc.set_defaults(func=cmd_encode_text)

    dec = sub.add_parser("decode-trace", help="re-decode an observations.csv offline")
    dec.add_argument("--config", required=True, help="scenario JSON the trace came from")
    dec.add_argument("--trace", required=True, help="observations.csv")
    dec.add_argument("--threshold", choices=["zero", "mean"], help="receiver threshold policy")
    dec.add_argument("--out", help="directory for the decoded payload")
    dec.set_defaults(func=cmd_decode_trace)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except (CovertFLError, FileNotFoundError) as exc:
        code = exit_code_for(exc)
        logger.error("[cli] %s: %s", type(exc).__name__, exc)
        print(f"error: {exc}", file=sys.stderr)
        return code
