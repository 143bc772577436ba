"""
Run artifacts on disk: rounds.csv, detection.csv/json, summary.json, decoded payload files, and the
run log (one JSON line per completed run, appended to paths.RUN_LOG).

Every float goes out with 9 significant digits. summary.json carries no timestamp so two runs of the
same scenario produce identical files; the timestamp lives in the run log only.
"""
import csv
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from src.config import fmt_float, paths
from src.covert.codecs import Bitstream, decode_bitmap, decode_text, write_pbm, write_text_payload
from src.errors import OutputError
from src.graph.state import ClientState, RoundReport

logger = logging.getLogger(__name__)

_DETECTORS = ("l2", "cosine", "accuracy")


def ensure_dir(path: Union[str, Path]) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
        marker = p / ".write_check"
        marker.write_text("", encoding="utf-8")
        marker.unlink()
    except OSError as exc:
        raise OutputError(f"cannot write to output directory {p}: {exc}") from exc
    return p


def round_floats(obj: Any) -> Any:
    """Recursively round floats to 9 significant digits for JSON output."""
    if isinstance(obj, (float, np.floating)):
        return float(fmt_float(float(obj)))
    if isinstance(obj, dict):
        return {k: round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path: Union[str, Path], data: Any) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        json.dump(round_floats(data), f, indent=2, sort_keys=True)
        f.write("\n")


def write_rounds_csv(path: Union[str, Path], reports: Sequence[RoundReport]) -> None:
    """One row per round."""
    with Path(path).open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["round", "phase", "global_accuracy", "mean_local_accuracy", "min_local_accuracy",
             "max_local_accuracy", "mean_l2_norm", "applied_noise"]
        )
        for rep in reports:
            acc = rep["local_accuracies"]
            writer.writerow([
                rep["round_index"],
                rep["phase"],
                fmt_float(rep["global_accuracy"]),
                fmt_float(float(np.mean(acc))),
                fmt_float(min(acc)),
                fmt_float(max(acc)),
                fmt_float(float(np.mean(rep["l2_norms"]))),
                fmt_float(rep["applied_noise"]),
            ])


def _flag_set(rep: RoundReport, name: str) -> set:
    det = rep.get("detections", {}).get(name)
    return {cid for cid, _ in det["flagged_clients"]} if det else set()


def write_detection_csv(
    path: Union[str, Path], reports: Sequence[RoundReport], clients: Sequence[ClientState]
) -> None:
    """One row per client per round: role, accuracy, norm, z-score, mean cosine and detector flags."""
    with Path(path).open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["round", "client", "role", "local_accuracy", "l2_norm", "l2_zscore", "mean_cosine"]
            + [f"{name}_flag" for name in _DETECTORS]
        )
        for rep in reports:
            cos = np.asarray(rep["cosine_matrix"])
            k = cos.shape[0]
            mean_cos = (cos.sum(axis=1) - 1.0) / (k - 1) if k > 1 else np.ones(k)
            l2 = rep.get("detections", {}).get("l2")
            flags = {name: _flag_set(rep, name) for name in _DETECTORS}
            for client in clients:
                cid = client.client_id
                writer.writerow(
                    [
                        rep["round_index"],
                        cid,
                        client.role.value,
                        fmt_float(rep["local_accuracies"][cid]),
                        fmt_float(rep["l2_norms"][cid]),
                        fmt_float(l2["z_scores"][cid]) if l2 else "",
                        fmt_float(float(mean_cos[cid])),
                    ]
                    + [int(cid in flags[name]) for name in _DETECTORS]
                )


def detection_json(reports: Sequence[RoundReport]) -> List[Dict[str, Any]]:
    """Full per-round matrices and detector outputs."""
    return [
        {
            "round_index": rep["round_index"],
            "l2_norms": rep["l2_norms"],
            "pairwise_cosine": rep["cosine_matrix"],
            "detections": rep.get("detections", {}),
        }
        for rep in reports
    ]


def write_payload(out_dir: Path, stem: str, message: Bitstream) -> Path:
    """
    Writes a payload in its natural format: <stem>.txt for text8, <stem>.pbm for bitmap1, and
    <stem>_bits.txt (0/1 characters) otherwise. Returns the path written.
    """
    if message.codec == "text8":
        path = out_dir / f"{stem}.txt"
        write_text_payload(path, decode_text(message))
    elif message.codec == "bitmap1":
        path = out_dir / f"{stem}.pbm"
        write_pbm(path, decode_bitmap(message))
    else:
        path = out_dir / f"{stem}_bits.txt"
        path.write_text(message.to_string() + "\n", encoding="utf-8")
    return path


def append_run_log(entry: Dict[str, Any], log_path: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
    """
    Adds a UTC timestamp to entry and appends it as one JSON line to the run log (paths.RUN_LOG by
    default). Returns the logged dict.
    """
    log = {"timestamp": datetime.now(timezone.utc).isoformat(), **round_floats(entry)}
    p = Path(log_path or paths.RUN_LOG)
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        with p.open("a", encoding="utf-8") as f:
            f.write(json.dumps(log, ensure_ascii=False) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot append to run log {p}: {exc}") from exc
    return log
