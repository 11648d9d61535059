"""Ground truth, non-homogeneous measurement simulation, and the
monitoring-node / processing-node pipeline.

Monitoring nodes run a particle tracker over their own scans and emit
per-step Gaussian estimates. Processing nodes group the estimates they
receive by minimum distance and fuse every group of two or more with the
selected covariance-intersection variant. Everything is deterministic given
the run seed; stage RNG streams are derived from (seed, stage tag, ids).
"""

from __future__ import annotations

import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import NodeSpec, ScenarioConfig, config_from_dict
from .fusion import (
    bci_fuse,
    ci_fuse,
    mbci_fuse,
    modified_ci_fuse,
    optimize_omega_pair,
    optimize_omega_simplex,
)
from .gaussian import (
    GaussianEstimate,
    MeasurementModel,
    MotionModel,
    chol_inverse,
    coordinated_turn_model,
    discretize_ct_model,
    kf_predict,
    kf_update,
)
from .metrics import TrackRecord
from .rbmcda import (
    BirthDeathModel,
    _map_particle,
    extract_tracks,
    initial_multi_target_set,
    rbmcda_predict,
    rbmcda_step,
)
from .rbpf import (
    AssociationPrior,
    ClutterModel,
    initial_particle_set,
    point_estimate,
    rbpf_predict,
    rbpf_step,
    resample,
)

__all__ = [
    "TargetTruth",
    "GroundTruth",
    "ScanData",
    "NodeOutput",
    "FusedOutput",
    "RunRecord",
    "simulate_truth",
    "infer_region",
    "generate_measurements",
    "run_monitoring_node",
    "run_kf_baseline",
    "associate_estimates",
    "run_processing_node",
    "run_network",
    "run_many",
    "run_to_json_dict",
    "run_from_json_dict",
    "save_run",
    "load_run",
]

RUN_SCHEMA = "cifuse-run-v1"

# Stage tags for per-stage RNG stream derivation.
_STAGE_TRUTH = 11
_STAGE_MEAS = 23
_STAGE_TRACK = 41
_STAGE_RESAMPLE = 47


@dataclass(frozen=True)
class TargetTruth:
    """Sampled trajectory of one target over its alive interval."""

    index: int
    birth: float
    death: float
    first_step: int
    states: np.ndarray  # (K, 4)

    def state_at_step(self, k: int) -> Optional[np.ndarray]:
        j = k - self.first_step
        if 0 <= j < len(self.states):
            return self.states[j]
        return None

    @property
    def last_step(self) -> int:
        return self.first_step + len(self.states) - 1


@dataclass(frozen=True)
class GroundTruth:
    dt: float
    times: np.ndarray
    targets: tuple

    def alive_at_step(self, k: int) -> list:
        out = []
        for target in self.targets:
            state = target.state_at_step(k)
            if state is not None:
                out.append((target.index, state))
        return out

    def counts(self) -> np.ndarray:
        return np.array(
            [len(self.alive_at_step(k)) for k in range(len(self.times))], dtype=int
        )


@dataclass(frozen=True)
class ScanData:
    """Per-step unlabeled measurement sets of one monitoring node."""

    node_id: int
    scans: tuple  # per step: (M_k, n_y) array


@dataclass
class NodeOutput:
    node_id: int
    algorithm: str
    records: list
    counts: Optional[np.ndarray]
    # Per step: list of (track_id, GaussianEstimate) available for fusion.
    step_estimates: list


@dataclass(frozen=True)
class FusedOutput:
    key: str
    est: GaussianEstimate
    fused: bool
    members: tuple  # (node_id, track_id) pairs


@dataclass
class RunRecord:
    config: ScenarioConfig
    seed: int
    region: tuple
    volume: float
    times: np.ndarray
    truth: GroundTruth
    scans: list
    node_records: list
    fused_records: list
    count_records: dict  # node_id -> per-step counts (multi-target runs)


def motion_model(config: ScenarioConfig) -> MotionModel:
    ct = coordinated_turn_model(config.turn_rate, config.diffusion)
    return discretize_ct_model(ct, config.dt)


def measurement_model(config: ScenarioConfig) -> MeasurementModel:
    h = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
    return MeasurementModel(h, config.meas_noise * np.eye(2))


def simulate_truth(config: ScenarioConfig, seed: int) -> GroundTruth:
    """Sample every scheduled target's discrete trajectory."""
    model = motion_model(config)
    times = np.arange(config.num_steps) * config.dt
    chol_q = np.linalg.cholesky(model.Q + 1e-300 * np.eye(4))
    targets = []
    for idx, spec in enumerate(config.targets):
        rng = np.random.default_rng([seed, _STAGE_TRUTH, idx])
        first = int(np.ceil(spec.birth / config.dt - 1e-9))
        last = min(
            int(np.ceil(spec.death / config.dt - 1e-9)) - 1, config.num_steps - 1
        )
        n_steps = last - first + 1
        if n_steps <= 0:
            continue
        states = np.empty((n_steps, 4))
        states[0] = spec.initial_state
        noise = rng.standard_normal((max(n_steps - 1, 0), 4)) @ chol_q.T
        for k in range(1, n_steps):
            states[k] = model.A @ states[k - 1] + noise[k - 1]
        targets.append(TargetTruth(idx, spec.birth, spec.death, first, states))
    return GroundTruth(config.dt, times, tuple(targets))


def infer_region(truth: GroundTruth, config: ScenarioConfig) -> tuple:
    """Surveillance region: configured bounds, or the truth positions'
    bounding box padded by region_padding on each side."""
    if config.region is not None:
        return tuple((float(lo), float(hi)) for lo, hi in config.region)
    positions = [t.states[:, :2] for t in truth.targets if len(t.states)]
    if not positions:
        return ((-1.0, 1.0), (-1.0, 1.0))
    stacked = np.concatenate(positions)
    bounds = []
    for axis in range(2):
        lo, hi = float(stacked[:, axis].min()), float(stacked[:, axis].max())
        span = max(hi - lo, 1.0)
        pad = config.region_padding * span
        bounds.append((lo - pad, hi + pad))
    return tuple(bounds)


def region_volume(region) -> float:
    return float(np.prod([hi - lo for lo, hi in region]))


def generate_measurements(
    truth: GroundTruth,
    node: NodeSpec,
    config: ScenarioConfig,
    region,
    seed: int,
) -> ScanData:
    """Detections with probability p_detect plus Poisson uniform clutter,
    shuffled together; deterministic given the seed."""
    meas = measurement_model(config)
    rng = np.random.default_rng([seed, _STAGE_MEAS, node.node_id])
    chol_r = np.linalg.cholesky(meas.R)
    volume = region_volume(region)
    rate = node.clutter_density if config.clutter_is_rate else node.clutter_density * volume
    (x_lo, x_hi), (y_lo, y_hi) = region
    scans = []
    for k in range(len(truth.times)):
        rows = []
        for _, state in truth.alive_at_step(k):
            if rng.uniform() < node.p_detect:
                rows.append(meas.H @ state + chol_r @ rng.standard_normal(2))
        n_clutter = rng.poisson(rate)
        for _ in range(n_clutter):
            rows.append(
                np.array([rng.uniform(x_lo, x_hi), rng.uniform(y_lo, y_hi)])
            )
        scan = np.array(rows) if rows else np.empty((0, 2))
        if len(scan) > 1:
            scan = scan[rng.permutation(len(scan))]
        scans.append(scan)
    return ScanData(node.node_id, tuple(scans))


def _association_prior(config: ScenarioConfig) -> AssociationPrior:
    if config.assoc_prior_matrix is not None:
        return AssociationPrior.markov(config.assoc_prior_matrix, config.markov_order)
    return AssociationPrior.uniform(config.markov_order)


def _initial_estimate(config: ScenarioConfig) -> GaussianEstimate:
    if config.init_mean is not None:
        mean = np.asarray(config.init_mean, dtype=float)
    elif config.targets:
        mean = np.asarray(config.targets[0].initial_state, dtype=float)
    else:
        mean = np.zeros(4)
    if config.init_cov is None:
        cov = np.eye(4)
    else:
        cov = np.asarray(config.init_cov, dtype=float)
        if cov.ndim == 0:
            cov = float(cov) * np.eye(4)
    return GaussianEstimate(mean, cov)


def birth_prior_estimate(config: ScenarioConfig, region) -> GaussianEstimate:
    """Wide Gaussian over the surveillance region for newborn targets:
    centered, position variance (span/2)^2 per axis, configured velocity
    variance."""
    (x_lo, x_hi), (y_lo, y_hi) = region
    mean = np.array([(x_lo + x_hi) / 2.0, (y_lo + y_hi) / 2.0, 0.0, 0.0])
    vv = config.birth_velocity_var
    cov = np.diag(
        [((x_hi - x_lo) / 2.0) ** 2, ((y_hi - y_lo) / 2.0) ** 2, vv, vv]
    )
    return GaussianEstimate(mean, cov)


def _clutter_model(node: NodeSpec, config: ScenarioConfig, volume: float) -> ClutterModel:
    rate = node.clutter_density if config.clutter_is_rate else node.clutter_density * volume
    return ClutterModel(volume, rate)


def _run_rbpf_node(scans: ScanData, config: ScenarioConfig, region, seed: int) -> NodeOutput:
    motion = motion_model(config)
    identity = MotionModel.identity(4)
    meas = measurement_model(config)
    clutter = _clutter_model(config.node(scans.node_id), config, region_volume(region))
    prior = _association_prior(config)
    pset = initial_particle_set(_initial_estimate(config), config.n_particles, config.markov_order)
    node = scans.node_id
    times, means, covs = [], [], []
    step_estimates = []
    for k, scan in enumerate(scans.scans):
        if len(scan) == 0:
            pset = rbpf_predict(pset, motion)
        else:
            for j, y in enumerate(scan):
                pset = rbpf_step(
                    pset,
                    y,
                    motion if j == 0 else identity,
                    meas,
                    clutter,
                    prior,
                    rng_seed=[seed, _STAGE_TRACK, node, k, j],
                )
                pset = resample(
                    pset,
                    config.resample_threshold,
                    rng_seed=[seed, _STAGE_RESAMPLE, node, k, j],
                )
        est = point_estimate(pset)
        times.append(k * config.dt)
        means.append(est.mean)
        covs.append(est.cov)
        step_estimates.append([(0, est)])
    record = TrackRecord(
        source=f"node:{node}",
        algorithm="rbpf",
        times=np.array(times),
        means=np.array(means),
        covs=np.array(covs),
        track_id=0,
    )
    return NodeOutput(node, "rbpf", [record], None, step_estimates)


def _run_rbmcda_node(scans: ScanData, config: ScenarioConfig, region, seed: int) -> NodeOutput:
    motion = motion_model(config)
    identity = MotionModel.identity(4)
    meas = measurement_model(config)
    clutter = _clutter_model(config.node(scans.node_id), config, region_volume(region))
    prior = _association_prior(config)
    birth_prior = birth_prior_estimate(config, region)
    bd_model = BirthDeathModel(
        config.p_birth, config.lifetime_shape, config.lifetime_scale, config.max_targets
    )
    pset = initial_multi_target_set(config.n_particles, config.markov_order)
    node = scans.node_id
    id_source = itertools.count(1)
    history = []
    step_estimates = []
    t_prev = 0.0
    for k, scan in enumerate(scans.scans):
        t_now = k * config.dt
        if len(scan) == 0:
            pset = rbmcda_predict(
                pset, motion, t_now, t_prev, bd_model, [seed, _STAGE_TRACK, node, k]
            )
        else:
            for j, y in enumerate(scan):
                pset = rbmcda_step(
                    pset,
                    y,
                    t_now,
                    t_prev if j == 0 else t_now,
                    motion if j == 0 else identity,
                    meas,
                    clutter,
                    bd_model,
                    prior,
                    birth_prior,
                    id_source,
                    rng_seed=[seed, _STAGE_TRACK, node, k, j],
                    resample_threshold=config.resample_threshold,
                )
        t_prev = t_now
        history.append((t_now, pset))
        best = _map_particle(pset)
        step_estimates.append([(tr.target_id, tr.est) for tr in best.tracks])
    tracks, counts = extract_tracks(history, config.count_mode)
    records = []
    for target_id in sorted(tracks):
        entries = tracks[target_id]
        records.append(
            TrackRecord(
                source=f"node:{node}",
                algorithm="rbmcda",
                times=np.array([t for t, _ in entries]),
                means=np.array([e.mean for _, e in entries]),
                covs=np.array([e.cov for _, e in entries]),
                track_id=target_id,
            )
        )
    count_arr = np.array([c for _, c in counts], dtype=int)
    return NodeOutput(node, "rbmcda", records, count_arr, step_estimates)


def run_monitoring_node(
    scans: ScanData, config: ScenarioConfig, region, seed: int
) -> NodeOutput:
    """Track one node's scan stream with the configured filter."""
    if config.tracker == "rbpf":
        return _run_rbpf_node(scans, config, region, seed)
    return _run_rbmcda_node(scans, config, region, seed)


def run_kf_baseline(scans: ScanData, config: ScenarioConfig) -> TrackRecord:
    """Plain Kalman filter without data association: every measurement,
    clutter included, is fed to the update."""
    motion = motion_model(config)
    identity = MotionModel.identity(4)
    meas = measurement_model(config)
    est = _initial_estimate(config)
    times, means, covs = [], [], []
    for k, scan in enumerate(scans.scans):
        est = kf_predict(est, motion)
        for j, y in enumerate(scan):
            if j > 0:
                est = kf_predict(est, identity)
            est = kf_update(est, y, meas)
        times.append(k * config.dt)
        means.append(est.mean)
        covs.append(est.cov)
    return TrackRecord(
        source=f"node:{scans.node_id}",
        algorithm="kf",
        times=np.array(times),
        means=np.array(means),
        covs=np.array(covs),
        track_id=0,
    )


def associate_estimates(received: Sequence, threshold: Optional[float]) -> list:
    """Greedy agglomerative grouping of (node_id, estimate) pairs.

    Single-linkage on the Euclidean distance between the position components
    of the means; the closest pair of groups merges while the distance stays
    within the threshold and no group ever holds two estimates from the same
    node. A None threshold means unlimited. Returns groups as index lists.
    """
    n = len(received)
    if n == 0:
        return []
    limit = np.inf if threshold is None else float(threshold)
    positions = np.array([np.asarray(est.mean)[:2] for _, est in received])
    dist = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=2)
    groups = [{"members": [i], "nodes": {received[i][0]}} for i in range(n)]
    while len(groups) > 1:
        best = None
        best_dist = limit
        for a in range(len(groups)):
            for b in range(a + 1, len(groups)):
                if groups[a]["nodes"] & groups[b]["nodes"]:
                    continue
                d = min(
                    dist[i, j]
                    for i in groups[a]["members"]
                    for j in groups[b]["members"]
                )
                if d < best_dist or (best is None and d <= limit):
                    if d <= limit:
                        best, best_dist = (a, b), d
        if best is None:
            break
        a, b = best
        groups[a]["members"].extend(groups[b]["members"])
        groups[a]["nodes"] |= groups[b]["nodes"]
        del groups[b]
    return [sorted(g["members"]) for g in groups]


def _method_family(method: str) -> str:
    return "modci" if method in ("modci", "mbci") else "ci"


def _fuse_group(items: Sequence, profiles: dict, method: str) -> GaussianEstimate:
    """Fuse one group: pairwise formulas for two inputs, batch for more."""
    estimates = [est for _, _, est in items]
    profs = [profiles[node_id] for node_id, _, _ in items]
    modified = _method_family(method) == "modci"
    if len(items) == 2:
        if modified:
            return modified_ci_fuse(estimates[0], estimates[1], profs[0], profs[1])
        prec_a = chol_inverse(estimates[0].cov)
        prec_b = chol_inverse(estimates[1].cov)
        omega = optimize_omega_pair(prec_a, prec_b)
        return ci_fuse(estimates[0], estimates[1], omega)
    if modified:
        return mbci_fuse(list(zip(estimates, profs)))
    weights = optimize_omega_simplex([chol_inverse(e.cov) for e in estimates])
    return bci_fuse(estimates, weights)


def run_processing_node(groups: Sequence, profiles: dict, method: str) -> list:
    """Fuse every association group of size >= 2; singletons pass through
    flagged unfused. groups holds lists of (node_id, track_id, est)."""
    outputs = []
    for items in groups:
        members = tuple((node_id, track_id) for node_id, track_id, _ in items)
        key = "n{}:t{}".format(*min(members))
        if len(items) == 1:
            outputs.append(FusedOutput(key, items[0][2], False, members))
        else:
            outputs.append(FusedOutput(key, _fuse_group(items, profiles, method), True, members))
    return outputs


def run_network(config: ScenarioConfig, seed: int) -> RunRecord:
    """End-to-end run: truth, scans, node trackers, association, fusion."""
    truth = simulate_truth(config, seed)
    region = infer_region(truth, config)
    volume = region_volume(region)
    scans = [
        generate_measurements(truth, node, config, region, seed) for node in config.nodes
    ]
    outputs = {
        sc.node_id: run_monitoring_node(sc, config, region, seed) for sc in scans
    }
    node_records = [rec for out in outputs.values() for rec in out.records]
    if config.baseline_kf:
        node_records.extend(run_kf_baseline(sc, config) for sc in scans)
    count_records = {
        out.node_id: out.counts for out in outputs.values() if out.counts is not None
    }

    profiles = {node.node_id: node.profile(config.dt) for node in config.nodes}
    methods = ["ci", "modci"] if config.fusion_method == "both" else [config.fusion_method]
    num_steps = config.num_steps
    threshold = config.association_threshold

    fused_acc: dict = {}
    for k in range(num_steps):
        t = k * config.dt
        for proc in config.processors:
            received = []
            for node_id in proc.inputs:
                for track_id, est in outputs[node_id].step_estimates[k]:
                    received.append((node_id, track_id, est))
            if not received:
                continue
            index_groups = associate_estimates(
                [(node_id, est) for node_id, _, est in received], threshold
            )
            groups = [[received[i] for i in idxs] for idxs in index_groups]
            for method in methods:
                for fo in run_processing_node(groups, profiles, method):
                    acc = fused_acc.setdefault(
                        (proc.proc_id, method, fo.key),
                        {"times": [], "means": [], "covs": [], "flags": []},
                    )
                    acc["times"].append(t)
                    acc["means"].append(fo.est.mean)
                    acc["covs"].append(fo.est.cov)
                    acc["flags"].append(fo.fused)

    fused_records = []
    for (proc_id, method, key), acc in sorted(fused_acc.items()):
        fused_records.append(
            TrackRecord(
                source=f"proc:{proc_id}",
                algorithm=method,
                times=np.array(acc["times"]),
                means=np.array(acc["means"]),
                covs=np.array(acc["covs"]),
                track_id=key,
                fused_flags=np.array(acc["flags"], dtype=bool),
            )
        )

    return RunRecord(
        config=config,
        seed=seed,
        region=region,
        volume=volume,
        times=truth.times,
        truth=truth,
        scans=scans,
        node_records=node_records,
        fused_records=fused_records,
        count_records=count_records,
    )


def _run_one(args) -> "RunRecord":
    config, seed = args
    return run_network(config, seed)


def run_many(config: ScenarioConfig, seeds: Sequence[int], jobs: int = 1) -> list:
    """run_network over a seed list, optionally across processes."""
    if jobs <= 1 or len(seeds) <= 1:
        return [run_network(config, seed) for seed in seeds]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, [(config, s) for s in seeds]))


# --- Run-record JSON round trip -------------------------------------------


def run_to_json_dict(run: RunRecord) -> dict:
    """Per-step JSON view of a run: truth states, measurements, node
    estimates (mean + flattened covariance), fused outputs, and counts."""
    num_steps = len(run.times)
    node_entries: list = [[] for _ in range(num_steps)]
    for rec in run.node_records:
        steps = np.round(rec.times / run.config.dt).astype(int)
        for i, k in enumerate(steps):
            node_entries[k].append(
                {
                    "node": int(rec.source.split(":")[1]),
                    "algorithm": rec.algorithm,
                    "track": rec.track_id,
                    "mean": rec.means[i].tolist(),
                    "cov": rec.covs[i].reshape(-1).tolist(),
                }
            )
    fused_entries: list = [[] for _ in range(num_steps)]
    for rec in run.fused_records:
        steps = np.round(rec.times / run.config.dt).astype(int)
        for i, k in enumerate(steps):
            fused_entries[k].append(
                {
                    "proc": int(rec.source.split(":")[1]),
                    "method": rec.algorithm,
                    "key": rec.track_id,
                    "fused": bool(rec.fused_flags[i]) if rec.fused_flags is not None else True,
                    "mean": rec.means[i].tolist(),
                    "cov": rec.covs[i].reshape(-1).tolist(),
                }
            )
    steps = []
    for k in range(num_steps):
        entry = {
            "truth": [
                {"target": idx, "state": state.tolist()}
                for idx, state in run.truth.alive_at_step(k)
            ],
            "measurements": {
                str(sc.node_id): sc.scans[k].tolist() for sc in run.scans
            },
            "estimates": node_entries[k],
            "fused": fused_entries[k],
        }
        if run.count_records:
            entry["counts"] = {
                str(node_id): int(counts[k])
                for node_id, counts in run.count_records.items()
            }
        steps.append(entry)
    return {
        "schema": RUN_SCHEMA,
        "seed": run.seed,
        "config": run.config.to_dict(),
        "region": [list(b) for b in run.region],
        "volume": run.volume,
        "times": run.times.tolist(),
        "steps": steps,
    }


def run_from_json_dict(data: dict) -> RunRecord:
    if data.get("schema") != RUN_SCHEMA:
        raise ValueError(f"unsupported run record schema {data.get('schema')!r}")
    config = config_from_dict(data["config"])
    times = np.asarray(data["times"], dtype=float)
    steps = data["steps"]
    n = 4

    # Truth targets: rebuild contiguous state blocks per target index.
    per_target: dict = {}
    for k, entry in enumerate(steps):
        for item in entry["truth"]:
            per_target.setdefault(item["target"], []).append((k, item["state"]))
    targets = []
    for idx in sorted(per_target):
        rows = per_target[idx]
        spec = config.targets[idx]
        targets.append(
            TargetTruth(
                idx,
                spec.birth,
                spec.death,
                rows[0][0],
                np.array([state for _, state in rows]),
            )
        )
    truth = GroundTruth(config.dt, times, tuple(targets))

    scans_by_node: dict = {}
    for k, entry in enumerate(steps):
        for node_str, rows in entry["measurements"].items():
            scans_by_node.setdefault(int(node_str), [None] * len(steps))[k] = (
                np.array(rows) if rows else np.empty((0, 2))
            )
    scans = [
        ScanData(node_id, tuple(scans_by_node[node_id])) for node_id in sorted(scans_by_node)
    ]

    node_acc: dict = {}
    fused_acc: dict = {}
    for k, entry in enumerate(steps):
        t = times[k]
        for item in entry["estimates"]:
            key = (item["node"], item["algorithm"], item["track"])
            acc = node_acc.setdefault(key, {"times": [], "means": [], "covs": []})
            acc["times"].append(t)
            acc["means"].append(item["mean"])
            acc["covs"].append(np.array(item["cov"]).reshape(n, n))
        for item in entry["fused"]:
            key = (item["proc"], item["method"], item["key"])
            acc = fused_acc.setdefault(
                key, {"times": [], "means": [], "covs": [], "flags": []}
            )
            acc["times"].append(t)
            acc["means"].append(item["mean"])
            acc["covs"].append(np.array(item["cov"]).reshape(n, n))
            acc["flags"].append(item["fused"])

    node_records = [
        TrackRecord(
            source=f"node:{node_id}",
            algorithm=algorithm,
            times=np.array(acc["times"]),
            means=np.array(acc["means"]),
            covs=np.array(acc["covs"]),
            track_id=track,
        )
        for (node_id, algorithm, track), acc in sorted(
            node_acc.items(), key=lambda kv: (kv[0][0], kv[0][1], str(kv[0][2]))
        )
    ]
    fused_records = [
        TrackRecord(
            source=f"proc:{proc_id}",
            algorithm=method,
            times=np.array(acc["times"]),
            means=np.array(acc["means"]),
            covs=np.array(acc["covs"]),
            track_id=key,
            fused_flags=np.array(acc["flags"], dtype=bool),
        )
        for (proc_id, method, key), acc in sorted(fused_acc.items())
    ]

    count_records = {}
    if steps and "counts" in steps[0]:
        node_ids = [int(s) for s in steps[0]["counts"]]
        for node_id in node_ids:
            count_records[node_id] = np.array(
                [entry["counts"][str(node_id)] for entry in steps], dtype=int
            )

    return RunRecord(
        config=config,
        seed=int(data["seed"]),
        region=tuple(tuple(b) for b in data["region"]),
        volume=float(data["volume"]),
        times=times,
        truth=truth,
        scans=scans,
        node_records=node_records,
        fused_records=fused_records,
        count_records=count_records,
    )


def save_run(run: RunRecord, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(run_to_json_dict(run), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_run(path) -> RunRecord:
    with open(path, "r", encoding="utf-8") as fh:
        return run_from_json_dict(json.load(fh))
