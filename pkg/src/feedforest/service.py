"""HTTP session service: exposes the query/label/re-weight loop to analysts.

Each session owns a model, a labeled store, and a pending query batch.
Every mutation is appended to a per-session JSONL event log that is
sufficient to deterministically replay the session offline (and to resume
it after a restart).
"""
from __future__ import annotations

import json
import os
import threading
import uuid

import numpy as np
from fastapi import FastAPI, HTTPException

from .data import Dataset, SynthSpec, load_dataset, synth_generator
from .describe import (DEFAULT_DELTA, denormalize_bounds, leaf_subspace,
                       select_diverse, top_relevant_subspaces)
from .forest import build_forest, score_all, transform_all
from .learner import (LabeledStore, LearnerConfig, initial_weights,
                      learn_weights, select_top, weight_hash)

SCHEMA_VERSION = 1


def _resolve_dataset(spec: dict) -> Dataset:
    if "path" in spec:
        return load_dataset(spec["path"], spec.get("label_column", "label"),
                            spec.get("anomaly_classes", ["anomaly"]))
    if "synth" in spec:
        synth = dict(spec["synth"])
        seed = synth.pop("seed", 0)
        return synth_generator(SynthSpec(**synth), seed=seed)
    raise ValueError("dataset must give either 'path' or 'synth'")


class LiveSession:
    """One analyst session; all mutations hold the session lock."""

    def __init__(self, session_id: str, config: dict, log_path: str):
        self.id = session_id
        self.config = config
        self.log_path = log_path
        self.lock = threading.Lock()

        self.dataset = _resolve_dataset(config["dataset"])
        self.strategy = config.get("strategy", "top")
        if self.strategy not in ("top", "diverse"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        self.batch = int(config.get("batch", 1))
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        self.delta = int(config.get("delta", DEFAULT_DELTA))
        self.candidate_pool = int(config.get("candidate_pool", 10))
        self.seed = int(config.get("seed", 0))
        self.lconf = LearnerConfig(**config.get("learner", {}))

        self.model = build_forest(self.dataset,
                                  int(config.get("n_trees", 100)),
                                  int(config.get("subsample", 256)),
                                  seed=self.seed)
        self.model = self.model.with_weights(
            initial_weights(self.model, self.lconf, self.seed))
        self.vectors = transform_all(self.model, self.dataset.points)
        self.store = LabeledStore()
        self.pool = list(range(self.dataset.n))
        self.labels: list[tuple[int, int]] = []  # (instance_id, label)
        self.pending: list[int] = []
        self._next_batch()

    # -- core loop ---------------------------------------------------------

    def _next_batch(self) -> None:
        if not self.pool:
            self.pending = []
            return
        b = min(self.batch, len(self.pool))
        unlabeled = [(i, self.vectors[i]) for i in self.pool]
        if self.strategy == "top" or b == 1:
            self.pending = select_top(self.model, unlabeled, b)
        else:
            cand_ids = select_top(self.model, unlabeled,
                                  min(self.candidate_pool, len(unlabeled)))
            scores = score_all(self.model,
                               [self.vectors[i] for i in cand_ids])
            candidates = [(i, self.dataset.points[i], float(s))
                          for i, s in zip(cand_ids, scores)]
            self.pending = select_diverse(self.model, candidates, b,
                                          self.delta)

    def submit_label(self, instance_id: int, label: int) -> None:
        if label not in (-1, 1):
            raise ValueError("label must be -1 or +1")
        if instance_id not in self.pending:
            raise LookupError(f"instance {instance_id} is not pending")
        self.store.add(instance_id, self.vectors[instance_id], label)
        self.labels.append((instance_id, label))
        self.pending.remove(instance_id)
        self.pool.remove(instance_id)
        if not self.pending:  # batch complete: relearn, then select the next
            w = learn_weights(self.model, self.vectors, self.store,
                              self.lconf, self.model.w)
            self.model = self.model.with_weights(w)
            self._next_batch()

    # -- payloads ----------------------------------------------------------

    def score_of(self, instance_id: int) -> float:
        z = self.vectors[instance_id]
        return float(np.dot(self.model.w[z.leaf_ids], z.values))

    def describe_instance(self, instance_id: int) -> dict:
        x = self.dataset.points[instance_id]
        subs = []
        for lid in top_relevant_subspaces(self.model, x, self.delta):
            s = leaf_subspace(self.model, lid)
            raw = denormalize_bounds(self.model, s.bounds)
            subs.append({
                "leaf_id": s.leaf_id,
                "bounds": [[float(lo), float(hi)] for lo, hi in raw],
                "cost": s.cost,
                "relevance": s.relevance,
            })
        return {"instance_id": instance_id, "subspaces": subs}

    def queries_payload(self) -> list[dict]:
        return [{
            "instance_id": iid,
            "position": pos,
            "score": self.score_of(iid),
            "features": [float(v) for v in self.dataset.points[iid]],
            "descriptions": self.describe_instance(iid)["subspaces"],
        } for pos, iid in enumerate(self.pending)]

    def metrics_payload(self) -> dict:
        curve, cum = [], 0
        for _, label in self.labels:
            cum += 1 if label == 1 else 0
            curve.append(cum)
        scores = score_all(self.model, self.vectors)
        order = np.lexsort((np.arange(len(scores)), -scores))
        top = [{"instance_id": int(i), "score": float(scores[i])}
               for i in order[:10]]
        return {
            "queries_spent": len(self.labels),
            "cum_anomalies": cum,
            "curve": curve,
            "top_instances": top,
            "weight_hash": weight_hash(self.model.w),
            "drift_report": [],
        }

    def state_payload(self) -> dict:
        return {
            "session_id": self.id,
            "strategy": self.strategy,
            "batch": self.batch,
            "queries_spent": len(self.labels),
            "pending": list(self.pending),
            "n_instances": self.dataset.n,
        }

    # -- persistence -------------------------------------------------------

    def append_event(self, event: dict) -> None:
        with open(self.log_path, "a") as f:
            f.write(json.dumps(event, sort_keys=True) + "\n")


def replay_session(log_path: str) -> LiveSession:
    """Rebuild a session purely from its event log."""
    with open(log_path) as f:
        events = [json.loads(line) for line in f if line.strip()]
    if not events or events[0]["type"] != "create":
        raise ValueError(f"no create event in {log_path}")
    created = events[0]
    session = LiveSession(created["session_id"], created["config"],
                          log_path)
    for ev in events[1:]:
        if ev["type"] == "label":
            session.submit_label(int(ev["instance_id"]), int(ev["label"]))
    return session


def create_app(output_dir: str = "sessions") -> FastAPI:
    app = FastAPI(title="anomaly-workbench")
    os.makedirs(output_dir, exist_ok=True)
    sessions: dict[str, LiveSession] = {}
    registry_lock = threading.Lock()

    def log_path(session_id: str) -> str:
        return os.path.join(output_dir, f"{session_id}.events.jsonl")

    def get_session(session_id: str) -> LiveSession:
        with registry_lock:
            if session_id in sessions:
                return sessions[session_id]
            path = log_path(session_id)
            if os.path.exists(path):  # resume after restart
                session = replay_session(path)
                sessions[session_id] = session
                return session
        raise HTTPException(status_code=404,
                            detail=f"unknown session {session_id}")

    def versioned(payload: dict) -> dict:
        return {"schema_version": SCHEMA_VERSION, **payload}

    @app.post("/sessions")
    def create_session(config: dict):
        session_id = uuid.uuid4().hex[:12]
        try:
            session = LiveSession(session_id, config, log_path(session_id))
        except (ValueError, TypeError, OSError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        with registry_lock:
            sessions[session_id] = session
        session.append_event({"type": "create", "session_id": session_id,
                              "config": config})
        return versioned({"session_id": session_id,
                          "queries": session.queries_payload()})

    @app.get("/sessions/{session_id}")
    def get_state(session_id: str):
        session = get_session(session_id)
        with session.lock:
            return versioned(session.state_payload())

    @app.get("/sessions/{session_id}/queries")
    def get_queries(session_id: str):
        session = get_session(session_id)
        with session.lock:
            return versioned({"queries": session.queries_payload()})

    @app.post("/sessions/{session_id}/labels")
    def post_label(session_id: str, payload: dict):
        session = get_session(session_id)
        try:
            instance_id = int(payload["instance_id"])
            label = int(payload["label"])
        except (KeyError, TypeError, ValueError):
            raise HTTPException(status_code=400,
                                detail="payload needs instance_id and label")
        with session.lock:
            score = None
            if instance_id in session.pending:
                score = session.score_of(instance_id)
            try:
                session.submit_label(instance_id, label)
            except LookupError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            session.append_event({
                "type": "label", "instance_id": instance_id, "label": label,
                "score": score, "weight_hash": weight_hash(session.model.w),
            })
            return versioned({
                "metrics": session.metrics_payload(),
                "queries": session.queries_payload(),
            })

    @app.get("/sessions/{session_id}/metrics")
    def get_metrics(session_id: str):
        session = get_session(session_id)
        with session.lock:
            return versioned(session.metrics_payload())

    @app.get("/sessions/{session_id}/descriptions")
    def get_descriptions(session_id: str, ids: str = ""):
        session = get_session(session_id)
        try:
            id_list = [int(s) for s in ids.split(",") if s.strip() != ""]
        except ValueError:
            raise HTTPException(status_code=400,
                                detail="ids must be comma-separated integers")
        with session.lock:
            bad = [i for i in id_list
                   if not 0 <= i < session.dataset.n]
            if bad:
                raise HTTPException(status_code=400,
                                    detail=f"unknown instance ids {bad}")
            return versioned({
                "descriptions": [session.describe_instance(i)
                                 for i in id_list],
            })

    return app
