"""Python access to the vislearn core.

Functions returning structured data decode the core's JSON into plain dicts.
"""
import json as _json

from ._vislearn import (
    GroundingMap,
    ServiceError,
    VislearnError,
    apply_threshold_action,
    delta_acc_level,
    derive_seed,
    generate_dataset,
    r_perf,
    status,
    threshold_reward,
)
from . import _vislearn

__all__ = [
    "GroundingMap",
    "LiveSessions",
    "ServiceError",
    "VislearnError",
    "apply_threshold_action",
    "canonical_config",
    "delta_acc_level",
    "derive_seed",
    "generate_dataset",
    "r_perf",
    "run_experiment",
    "status",
    "threshold_reward",
]


def canonical_config(config=None):
    """Validated config with every default filled in."""
    return _json.loads(_vislearn.config_from_json(_json.dumps(config or {})))


def run_experiment(config=None, out_dir=""):
    """Runs every configured condition over all folds; returns per-condition summaries."""
    return _vislearn.run_experiment(_json.dumps(config or {}), str(out_dir))


class LiveSessions:
    """Live tutoring sessions without the HTTP layer. Methods return decoded event messages."""

    def __init__(self, state_dir="", policy_dir=""):
        self._m = _vislearn.SessionManager(str(state_dir), str(policy_dir))

    def create(self, policy="rule-constant95", seed=1):
        return _json.loads(self._m.create(policy, seed))

    def state(self, session):
        return _json.loads(self._m.state(session))

    def turn(self, session, utterance):
        return [_json.loads(e) for e in self._m.turn(session, utterance)]

    def advance(self, session):
        return [_json.loads(e) for e in self._m.advance(session)]

    def end(self, session):
        return [_json.loads(e) for e in self._m.end(session)]

    def total_cost(self, session):
        return self._m.total_cost(session)

    def ids(self):
        return self._m.ids()
