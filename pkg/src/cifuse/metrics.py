"""Scoring of estimate streams against ground truth: MSE, MNCM, count accuracy.

MSE defaults to the full state vector (a position-only variant is available);
MNCM defaults to the mean over time of the per-step covariance 2-norm, with
the norm-of-the-mean-matrix alternative selectable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "TrackRecord",
    "mse",
    "sum_mse",
    "mncm",
    "count_accuracy",
    "assign_truth_target",
    "summarize_run",
    "aggregate_rows",
    "write_csv",
]


@dataclass
class TrackRecord:
    """Time-indexed (mean, cov) stream from one source.

    source identifies the node or processor ("node:1", "proc:8"); algorithm
    names the producing method; track_id distinguishes streams of one source
    in multi-target runs. fused_flags marks processor outputs that actually
    combined two or more inputs (False = unfused passthrough).
    """

    source: str
    algorithm: str
    times: np.ndarray
    means: np.ndarray  # (K, n)
    covs: np.ndarray  # (K, n, n)
    track_id: Optional[object] = None
    fused_flags: Optional[np.ndarray] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.means = np.asarray(self.means, dtype=float)
        self.covs = np.asarray(self.covs, dtype=float)
        if self.times.ndim != 1 or len(self.times) != len(self.means):
            raise ValueError("times and means must align")
        if len(self.covs) != len(self.times):
            raise ValueError("times and covs must align")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.fused_flags is not None:
            self.fused_flags = np.asarray(self.fused_flags, dtype=bool)
            if len(self.fused_flags) != len(self.times):
                raise ValueError("fused_flags must align with times")

    def __len__(self) -> int:
        return len(self.times)


def _truth_states_at(truth, target, times: np.ndarray):
    """States of one truth target at the requested times; None where dead."""
    idx = np.round(times / truth.dt).astype(int)
    out = []
    for k in idx:
        out.append(target.state_at_step(k))
    return out


def assign_truth_target(record: TrackRecord, truth) -> Optional[int]:
    """Index of the truth target nearest the record by time-averaged
    position distance over their common steps; None without any overlap."""
    best, best_dist = None, np.inf
    for t_idx, target in enumerate(truth.targets):
        states = _truth_states_at(truth, target, record.times)
        dists = [
            float(np.linalg.norm(mean[:2] - state[:2]))
            for mean, state in zip(record.means, states)
            if state is not None
        ]
        if not dists:
            continue
        d = float(np.mean(dists))
        if d < best_dist:
            best, best_dist = t_idx, d
    return best


def mse(
    record: TrackRecord,
    truth,
    target_index: Optional[int] = None,
    position_only: bool = False,
) -> float:
    """Mean squared Euclidean error against the assigned truth target.

    Averages over the steps where the record and the target's alive interval
    overlap; raises on empty overlap.
    """
    if target_index is None:
        target_index = assign_truth_target(record, truth)
        if target_index is None:
            raise ValueError("record does not overlap any truth target")
    target = truth.targets[target_index]
    states = _truth_states_at(truth, target, record.times)
    errors = []
    for mean, state in zip(record.means, states):
        if state is None:
            continue
        diff = mean[:2] - state[:2] if position_only else mean - state
        errors.append(float(diff @ diff))
    if not errors:
        raise ValueError("record does not overlap the assigned truth target in time")
    return float(np.mean(errors))


def sum_mse(records: Sequence[TrackRecord], truth, position_only: bool = False) -> float:
    """Sum of per-track MSEs, each against its nearest truth target.

    Tracks without any truth overlap are skipped.
    """
    total = 0.0
    for record in records:
        idx = assign_truth_target(record, truth)
        if idx is None:
            continue
        total += mse(record, truth, target_index=idx, position_only=position_only)
    return total


def mncm(record: TrackRecord, mode: str = "mean-of-norms") -> float:
    """Time-averaged covariance size in the spectral 2-norm.

    mode 'mean-of-norms' averages ||P_k||_2 over steps; 'norm-of-mean' takes
    the 2-norm of the time-averaged covariance matrix.
    """
    if len(record) == 0:
        raise ValueError("record is empty")
    if mode == "mean-of-norms":
        return float(np.mean([np.linalg.norm(p, 2) for p in record.covs]))
    if mode == "norm-of-mean":
        return float(np.linalg.norm(record.covs.mean(axis=0), 2))
    raise ValueError(f"unknown mncm mode {mode!r}")


def _pooled_mncm(records: Sequence[TrackRecord], mode: str) -> float:
    norms = [np.linalg.norm(p, 2) for record in records for p in record.covs]
    if not norms:
        raise ValueError("no covariance entries to average")
    if mode == "mean-of-norms":
        return float(np.mean(norms))
    if mode == "norm-of-mean":
        pooled = np.concatenate([record.covs for record in records])
        return float(np.linalg.norm(pooled.mean(axis=0), 2))
    raise ValueError(f"unknown mncm mode {mode!r}")


def count_accuracy(estimated: Sequence[int], true_counts: Sequence[int]) -> tuple:
    """(fraction exactly right, fraction within +-1) over aligned steps."""
    est = np.asarray(estimated, dtype=int)
    ref = np.asarray(true_counts, dtype=int)
    if est.shape != ref.shape:
        raise ValueError("count streams must align")
    if est.size == 0:
        raise ValueError("count streams are empty")
    diff = np.abs(est - ref)
    return float(np.mean(diff == 0)), float(np.mean(diff <= 1))


def summarize_run(run, position_only: bool = False, mncm_mode: str = "mean-of-norms") -> list:
    """Per-source metric rows for one run: dicts with source, algorithm,
    mse, mncm. Streams of one (source, algorithm) pair are pooled: MSE is
    summed over its tracks, MNCM averaged over all their steps."""
    groups: dict = {}
    for record in list(run.node_records) + list(run.fused_records):
        groups.setdefault((record.source, record.algorithm), []).append(record)
    rows = []
    for (source, algorithm), records in sorted(groups.items()):
        rows.append(
            {
                "source": source,
                "algorithm": algorithm,
                "mse": sum_mse(records, run.truth, position_only=position_only),
                "mncm": _pooled_mncm(records, mncm_mode),
            }
        )
    return rows


def aggregate_rows(rows_per_seed: Sequence) -> list:
    """Cross-seed medians and interquartile ranges per (source, algorithm)."""
    collected: dict = {}
    for seed, rows in rows_per_seed:
        for row in rows:
            key = (row["source"], row["algorithm"])
            collected.setdefault(key, {"mse": [], "mncm": []})
            collected[key]["mse"].append(row["mse"])
            collected[key]["mncm"].append(row["mncm"])
    out = []
    for (source, algorithm), values in sorted(collected.items()):
        mse_arr = np.array(values["mse"])
        mncm_arr = np.array(values["mncm"])
        q1_mse, med_mse, q3_mse = np.percentile(mse_arr, [25, 50, 75])
        q1_n, med_n, q3_n = np.percentile(mncm_arr, [25, 50, 75])
        out.append(
            {
                "source": source,
                "algorithm": algorithm,
                "seeds": len(mse_arr),
                "median_mse": float(med_mse),
                "iqr_mse": float(q3_mse - q1_mse),
                "median_mncm": float(med_n),
                "iqr_mncm": float(q3_n - q1_n),
            }
        )
    return out


def write_csv(rows: Sequence[dict], path):
    if not rows:
        raise ValueError("no rows to write")
    fieldnames = list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
