"""
Scenario runner: executes a simulation, derives the delivery and stealth metrics and writes the run
artifacts. Sweeps fan one base scenario out over an axis and a list of seeds, optionally in worker
processes, and summarise the comparison series.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import spearmanr

from src.config import paths
from src.covert.channel import (
    CovertConfig,
    ObservationLog,
    ThresholdPolicy,
    capacity,
    cycle_means,
    decode_prefix,
)
from src.covert.codecs import Bitstream, bit_error_rate, hamming_distance
from src.defense.detectors import benign_band
from src.defense.recorder import rank_scores, recorder_scores, write_recorder_csv
from src.errors import ConfigurationError
from src.graph.state import RoundReport
from src.graph.workflow import SimulationResult, simulate
from src.harness.artifacts import (
    append_run_log,
    detection_json,
    ensure_dir,
    write_detection_csv,
    write_json,
    write_payload,
    write_rounds_csv,
)
from src.harness.scenario import Scenario, SweepAxis

logger = logging.getLogger(__name__)

SCORE_CUTOFF = 0.5


@dataclass
class RunArtifacts:
    """What one scenario run produced. result is dropped when the run comes back from a worker."""
    name: str
    out_dir: Optional[Path]
    summary: Dict[str, Any]
    success: bool
    best_effort: bool = False
    files: Dict[str, str] = field(default_factory=dict)
    result: Optional[SimulationResult] = None

    @property
    def exit_code(self) -> int:
        return 0 if self.success or self.best_effort else 1


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def first_success_round(
    log: ObservationLog, covert: CovertConfig, sent: Sequence[int]
) -> Optional[int]:
    """
    Smallest number of elapsed rounds after which decoding the log prefix yields the whole payload,
    or None. A full decode needs every cycle, so the search starts at the end of transmission; the
    running-mean threshold keeps moving afterwards, so later prefixes are tried too.
    """
    if not sent or covert.num_cycles == 0:
        return None
    sent = list(sent)
    start = covert.cycle_end_round(covert.num_cycles - 1)
    last = len(log) if covert.threshold_policy is ThresholdPolicy.RUNNING_MEAN else start
    for t in range(start, last + 1):
        if decode_prefix(log, covert, t) == sent:
            return t
    return None


def cycle_error_rates(
    covert: CovertConfig, sent: Sequence[int], received: Sequence[int]
) -> Tuple[List[float], List[float]]:
    """BER of each cycle and cumulative BER after each cycle."""
    per_cycle: List[float] = []
    cumulative: List[float] = []
    errors = total = 0
    for s in range(covert.num_cycles):
        a = covert.cycle_bits(sent, s)
        b = covert.cycle_bits(received, s)
        e = sum(x != y for x, y in zip(a, b))
        per_cycle.append(e / len(a) if a else 0.0)
        errors += e
        total += len(a)
        cumulative.append(errors / total if total else 0.0)
    return per_cycle, cumulative


def signal_stats(log: ObservationLog, covert: CovertConfig, sent: Sequence[int]) -> Dict[str, Any]:
    """
    Amplitude = mean |cycle mean| over the (cycle, position) pairs that carry a payload bit.
    Margin = smallest (2b - 1) * cycle mean, i.e. how far the weakest bit sits on the right side of 0.
    """
    means = cycle_means(log, covert)
    used = np.zeros(means.shape, dtype=bool)
    signs = np.zeros(means.shape)
    for s in range(means.shape[0]):
        bits = covert.cycle_bits(sent, s)
        used[s, :len(bits)] = True
        signs[s, :len(bits)] = 2.0 * np.asarray(bits, dtype=np.float64) - 1.0
    if not used.any():
        return {"signal_amplitude": 0.0, "signal_margin": None, "cycle_amplitudes": []}
    cycle_amp = [
        float(np.abs(means[s, used[s]]).mean()) for s in range(means.shape[0]) if used[s].any()
    ]
    return {
        "signal_amplitude": float(np.abs(means[used]).mean()),
        "signal_margin": float((signs * means)[used].min()),
        "cycle_amplitudes": cycle_amp,
    }


def detector_rates(reports: Sequence[RoundReport], senders: Sequence[int]) -> Dict[str, Any]:
    """Per detector: fraction of rounds a sender was flagged and fraction with any flag."""
    out: Dict[str, Any] = {}
    n = len(reports)
    for name in ("l2", "cosine", "accuracy"):
        rows = [rep.get("detections", {}).get(name) for rep in reports]
        if not n or any(r is None for r in rows):
            continue
        flagged = [{cid for cid, _ in r["flagged_clients"]} for r in rows]
        out[name] = {
            "sender_rate": (
                sum(bool(f & set(senders)) for f in flagged) / n if senders else None
            ),
            "any_rate": sum(bool(f) for f in flagged) / n,
        }
    return out


def cosine_band_rate(
    reports: Sequence[RoundReport], senders: Sequence[int], num_clients: int
) -> Optional[float]:
    """
    Fraction of rounds in which the first sender's mean similarity to the other clients lies inside
    the [min, max] band of benign-benign similarities.
    """
    benign = [c for c in range(num_clients) if c not in set(senders)]
    if not senders or len(benign) < 2 or not reports:
        return None
    s = senders[0]
    inside = 0
    for rep in reports:
        cos = np.asarray(rep["cosine_matrix"])
        mean_sim = (cos[s].sum() - 1.0) / (cos.shape[0] - 1)
        low, high = benign_band(cos, benign)
        inside += low <= mean_sim <= high
    return inside / len(reports)


def recorder_stats(
    scores: np.ndarray,
    position_ids: Sequence[int],
    senders: Sequence[int],
    covert: Optional[CovertConfig],
) -> Dict[str, Any]:
    """
    hits: how many of the top-|positions| ranked entries are (sender, covert position) pairs.
    clean_fraction: share of benign client-positions scoring at most 0.5.
    """
    k = len(covert.positions) if covert is not None else 0
    benign_rows = [c for c in range(scores.shape[0]) if c not in set(senders)]
    benign = scores[benign_rows] if benign_rows else np.zeros((0, scores.shape[1]))
    stats: Dict[str, Any] = {
        "suspicious": int(np.sum(scores > SCORE_CUTOFF)),
        "clean_fraction": float(np.mean(benign <= SCORE_CUTOFF)) if benign.size else None,
        "max_benign_score": float(benign.max()) if benign.size else None,
        "hits": None,
    }
    if k and senders:
        targets = {(s, p) for s in senders for p in covert.positions}
        top = rank_scores(scores, position_ids, top=k)
        stats["hits"] = sum((c, p) in targets for c, p, _ in top)
    return stats


# ---------------------------------------------------------------------------
# One run
# ---------------------------------------------------------------------------

def _output_dir(scenario: Scenario, out_dir: Optional[str]) -> Path:
    if out_dir:
        return Path(out_dir)
    if scenario.output_dir:
        return Path(scenario.output_dir)
    return Path(paths.RUNS) / scenario.name


def run_scenario(
    scenario: Scenario,
    out_dir: Optional[str] = None,
    write: bool = True,
    run_log: Optional[str] = None,
) -> RunArtifacts:
    """
    Runs the scenario end to end. With write=False nothing touches the disk (sweeps and tests use
    this for in-memory runs).
    """
    message = scenario.message()
    covert = scenario.covert_config(len(message))
    config = scenario.fed_config()
    target = _output_dir(scenario, out_dir)
    if write:
        ensure_dir(target)

    logger.info("[runner] scenario %s (seed %d)", scenario.name, config.master_seed)
    result = simulate(config, covert, message)
    reports, received = result.reports, result.received
    senders = config.sender_ids()

    sent = list(message.bits)
    summary: Dict[str, Any] = {
        "scenario": scenario.name,
        "master_seed": config.master_seed,
        "num_clients": config.num_clients,
        "total_rounds": config.total_rounds,
        "num_senders": len(senders),
        "receiver": config.receiver_id(),
        "noise_level": config.noise_level,
        "payload_bits": len(sent),
        "codec": message.codec,
        "final_global_accuracy": reports[-1]["global_accuracy"],
        "final_local_accuracies": list(reports[-1]["local_accuracies"]),
        "mean_final_local_accuracy": float(np.mean(reports[-1]["local_accuracies"])),
        "detector_flag_rates": detector_rates(reports, senders),
        "cosine_band_rate": cosine_band_rate(reports, senders, config.num_clients),
    }

    success = True
    if covert is not None:
        log = result.observation_log
        summary["bit_errors"] = hamming_distance(message, received) if sent else 0
        summary["ber"] = bit_error_rate(message, received) if sent else 0.0
        per_cycle, cumulative = cycle_error_rates(covert, sent, received.bits)
        summary["ber_per_cycle"] = per_cycle
        summary["cumulative_ber"] = cumulative
        summary["first_success_round"] = first_success_round(log, covert, sent)
        summary.update(signal_stats(log, covert, sent))
        usable = config.total_rounds - covert.warmup_rounds
        if usable >= 1:
            cap = capacity(usable, len(covert.positions), covert.cycle_rounds)
            summary["capacity"] = {
                "bits": cap.total_bits,
                "rate": f"{cap.rate.numerator}/{cap.rate.denominator}",
                "usable_rounds": usable,
            }
        success = not sent or summary["bit_errors"] == 0
        if sent and not success:
            logger.warning(
                "[runner] %s: %d of %d bits wrong", scenario.name, summary["bit_errors"], len(sent)
            )
    summary["decoded_ok"] = success

    scores = None
    if result.weight_trace is not None:
        det = config.detectors
        scores = recorder_scores(result.weight_trace, det.cycle_hypotheses)
        position_ids = result.weight_trace.position_ids(scores.shape[1])
        summary["recorder"] = recorder_stats(scores, position_ids, senders, covert)

    artifacts = RunArtifacts(
        scenario.name,
        target if write else None,
        summary,
        success,
        scenario.best_effort,
        result=result,
    )
    if write:
        _write_all(artifacts, scenario, message, received, scores)
        append_run_log(
            {
                "scenario": scenario.name,
                "master_seed": config.master_seed,
                "ber": summary.get("ber"),
                "first_success_round": summary.get("first_success_round"),
                "final_global_accuracy": summary["final_global_accuracy"],
                "exit_status": artifacts.exit_code,
                "out_dir": str(target),
            },
            run_log,
        )
        logger.info("[runner] wrote artifacts to %s", target)
    return artifacts


def _write_all(
    artifacts: RunArtifacts,
    scenario: Scenario,
    message: Bitstream,
    received: Bitstream,
    scores: Optional[np.ndarray],
) -> None:
    out = artifacts.out_dir
    result = artifacts.result
    files = artifacts.files

    files["rounds"] = str(out / "rounds.csv")
    write_rounds_csv(files["rounds"], result.reports)
    files["detection"] = str(out / "detection.csv")
    write_detection_csv(files["detection"], result.reports, result.clients)
    files["detection_json"] = str(out / "detection.json")
    write_json(files["detection_json"], detection_json(result.reports))

    if result.observation_log is not None:
        files["observations"] = str(out / "observations.csv")
        result.observation_log.to_csv(files["observations"])
    if len(message):
        files["sent"] = str(write_payload(out, "sent", message))
        files["decoded"] = str(write_payload(out, "decoded", received))

    if scores is not None:
        trace = result.weight_trace
        ranked = rank_scores(scores, trace.position_ids(scores.shape[1]))
        files["recorder"] = str(out / "recorder.csv")
        write_recorder_csv(files["recorder"], ranked, limit=scenario.defense.recorder_top)

    files["summary"] = str(out / "summary.json")
    write_json(files["summary"], artifacts.summary)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def _sweep_job(job: Tuple[Scenario, Optional[str]]) -> RunArtifacts:
    scenario, out_dir = job
    artifacts = run_scenario(scenario, out_dir, write=out_dir is not None)
    artifacts.result = None
    return artifacts


def sweep_summary(
    axis: SweepAxis, values: Sequence[float], runs: Sequence[RunArtifacts], seeds: Sequence[int]
) -> Dict[str, Any]:
    """
    Per axis value: mean final accuracy, signal amplitude and BER over seeds. Across values: the max
    pairwise gap in mean final accuracy and the Spearman correlation of amplitude with the axis.
    """
    per_seed = len(seeds)
    rows = []
    for i, value in enumerate(values):
        group = runs[i * per_seed:(i + 1) * per_seed]
        rows.append({
            "value": value,
            "final_accuracy": float(np.mean([r.summary["final_global_accuracy"] for r in group])),
            "signal_amplitude": float(
                np.mean([r.summary.get("signal_amplitude", 0.0) for r in group])
            ),
            "ber": float(np.mean([r.summary.get("ber", 0.0) for r in group])),
            "decoded_ok": sum(bool(r.summary["decoded_ok"]) for r in group),
        })
    acc = [row["final_accuracy"] for row in rows]
    gap = max((abs(a - b) for a, b in combinations(acc, 2)), default=0.0)
    rho = None
    amps = [row["signal_amplitude"] for row in rows]
    if len(rows) >= 2 and max(amps) > min(amps):
        rho, _ = spearmanr(list(values), amps)
        rho = float(rho)
    return {
        "axis": axis,
        "seeds": list(seeds),
        "series": rows,
        "max_accuracy_gap": gap,
        "amplitude_spearman": rho,
    }


def run_sweep(
    base: Scenario,
    axis: SweepAxis,
    values: Sequence[float],
    seeds: Optional[Sequence[int]] = None,
    workers: int = 1,
    out_dir: Optional[str] = None,
) -> Tuple[List[RunArtifacts], Dict[str, Any]]:
    """
    One run per (value, seed); seeds default to the base master seed. Runs are independent and
    seed-isolated, so workers > 1 farms them out to processes without changing any result.
    With out_dir set, each run writes to out_dir/<axis>=<value>/seed=<seed> and the sweep summary
    goes to out_dir/sweep.json.
    """
    if not values:
        raise ConfigurationError(f"sweep axis {axis} has no values")
    seeds = list(seeds) if seeds else [base.federation.master_seed]
    jobs = []
    for value in values:
        scenario = base.with_axis(axis, value)
        for seed in seeds:
            run_dir = None
            if out_dir is not None:
                run_dir = str(Path(out_dir) / f"{axis}={value}" / f"seed={seed}")
            jobs.append((scenario.with_overrides(seed=seed), run_dir))

    logger.info("[runner] sweep %s over %s x %d seeds (%d workers)", axis, list(values), len(seeds), workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            runs = list(ex.map(_sweep_job, jobs))
    else:
        runs = [_sweep_job(job) for job in jobs]

    summary = sweep_summary(axis, values, runs, seeds)
    if out_dir is not None:
        write_json(ensure_dir(out_dir) / "sweep.json", summary)
    return runs, summary
