import threading
import time
from concurrent.futures import ThreadPoolExecutor

import pytest

from hopaas import core
from hopaas.core import ParamSpec, PrunerConfig, SearchSpace, StudyProperties
from hopaas.storage import (
    AuthRejectedError,
    IllegalTransitionError,
    NonMonotonicStepError,
    ParamsMismatchError,
    Storage,
    TrialNotRunningError,
    UnknownStudyError,
    UnknownTokenError,
    UnknownTrialError,
)

SPACE = SearchSpace(params=(ParamSpec("x", core.UNIFORM, -5, 5),))
PROPS = StudyProperties(direction="minimize")


@pytest.fixture
def store(tmp_path):
    s = Storage(tmp_path / "data")
    yield s
    s.close()


class TestStudies:
    def test_attach_is_idempotent(self, store):
        sid1, created1 = store.create_or_attach_study("s", SPACE, PROPS)
        sid2, created2 = store.create_or_attach_study("s", SPACE, PROPS)
        assert sid1 == sid2
        assert (created1, created2) == (True, False)

    def test_direction_changes_identity(self, store):
        sid1, _ = store.create_or_attach_study("s", SPACE, PROPS)
        sid2, _ = store.create_or_attach_study(
            "s", SPACE, StudyProperties(direction="maximize"))
        assert sid1 != sid2

    def test_concurrent_identical_definitions(self, store):
        results = []
        with ThreadPoolExecutor(max_workers=20) as pool:
            futures = [pool.submit(store.create_or_attach_study, "s", SPACE, PROPS)
                       for _ in range(20)]
            results = [f.result() for f in futures]
        assert len({sid for sid, _ in results}) == 1
        assert sum(created for _, created in results) == 1
        assert len(store.list_studies()) == 1

    def test_get_unknown_study(self, store):
        with pytest.raises(UnknownStudyError):
            store.get_study("nope")

    def test_round_trip_preserves_definition(self, store):
        props = StudyProperties(direction="minimize",
                                pruner=PrunerConfig(kind="median", n_warmup_steps=3,
                                                    n_min_trials=2))
        sid, _ = store.create_or_attach_study("s", SPACE, props)
        study = store.get_study(sid)
        assert study.space == SPACE
        assert study.properties == props
        assert study.fingerprint == core.canonical_fingerprint("s", SPACE, props)


class TestTrials:
    def test_first_trial_has_index_zero(self, store):
        sid, _ = store.create_or_attach_study("s", SPACE, PROPS)
        t = store.open_trial(sid, {"x": 1.0})
        assert t.index == 0
        assert t.state == core.RUNNING
        assert t.closed_at is None

    def test_concurrent_opens_are_gap_free(self, store):
        sid, _ = store.create_or_attach_study("s", SPACE, PROPS)
        with ThreadPoolExecutor(max_workers=16) as pool:
            trials = list(pool.map(lambda _: store.open_trial(sid, {"x": 0.0}),
                                   range(50)))
        assert sorted(t.index for t in trials) == list(range(50))
        assert len({t.trial_id for t in trials}) == 50
        assert store.get_study(sid).trial_counter == 50

    def test_params_mismatch(self, store):
        sid, _ = store.create_or_attach_study("s", SPACE, PROPS)
        with pytest.raises(ParamsMismatchError):
            store.open_trial(sid, {})
        with pytest.raises(ParamsMismatchError):
            store.open_trial(sid, {"x": 99.0})

    def test_finalize_completed(self, store):
        sid, _ = store.create_or_attach_study("s", SPACE, PROPS)
        t = store.open_trial(sid, {"x": 1.0})
        done = store.finalize_trial(t.trial_id, objective=0.42)
        assert done.state == core.COMPLETED
        assert done.objective == 0.42
        assert done.closed_at is not None

    def test_second_finalize_is_illegal(self, store):
        sid, _ = store.create_or_attach_study("s", SPACE, PROPS)
        t = store.open_trial(sid, {"x": 1.0})
        store.finalize_trial(t.trial_id, objective=0.1)
        with pytest.raises(IllegalTransitionError):
            store.finalize_trial(t.trial_id, objective=0.2)

    def test_finalize_after_prune_is_illegal(self, store):
        sid, _ = store.create_or_attach_study("s", SPACE, PROPS)
        t = store.open_trial(sid, {"x": 1.0})
        store.mark_pruned(t.trial_id)
        with pytest.raises(IllegalTransitionError):
            store.finalize_trial(t.trial_id, objective=0.2)

    def test_double_prune_is_illegal(self, store):
        sid, _ = store.create_or_attach_study("s", SPACE, PROPS)
        t = store.open_trial(sid, {"x": 1.0})
        store.mark_pruned(t.trial_id)
        with pytest.raises(IllegalTransitionError):
            store.mark_pruned(t.trial_id)

    def test_failed_outcome(self, store):
        sid, _ = store.create_or_attach_study("s", SPACE, PROPS)
        t = store.open_trial(sid, {"x": 1.0})
        done = store.finalize_trial(t.trial_id, failed=True)
        assert done.state == core.FAILED
        assert done.objective is None

    def test_unknown_trial(self, store):
        with pytest.raises(UnknownTrialError):
            store.finalize_trial("nope", objective=1.0)


class TestIntermediates:
    def test_ordered_steps(self, store):
        sid, _ = store.create_or_attach_study("s", SPACE, PROPS)
        t = store.open_trial(sid, {"x": 1.0})
        for step, value in [(0, 3.0), (1, 2.0), (2, 1.0)]:
            store.record_intermediate(t.trial_id, step, value)
        assert store.get_trial(t.trial_id).intermediates == ((0, 3.0), (1, 2.0), (2, 1.0))

    def test_non_monotonic_step_rejected(self, store):
        sid, _ = store.create_or_attach_study("s", SPACE, PROPS)
        t = store.open_trial(sid, {"x": 1.0})
        store.record_intermediate(t.trial_id, 2, 1.0)
        with pytest.raises(NonMonotonicStepError):
            store.record_intermediate(t.trial_id, 1, 1.0)
        with pytest.raises(NonMonotonicStepError):
            store.record_intermediate(t.trial_id, 2, 1.0)

    def test_report_on_closed_trial_rejected(self, store):
        sid, _ = store.create_or_attach_study("s", SPACE, PROPS)
        t = store.open_trial(sid, {"x": 1.0})
        store.finalize_trial(t.trial_id, objective=0.1)
        with pytest.raises(TrialNotRunningError):
            store.record_intermediate(t.trial_id, 0, 1.0)


class TestQueries:
    def _complete(self, store, sid, objective):
        t = store.open_trial(sid, {"x": 0.0})
        return store.finalize_trial(t.trial_id, objective=objective)

    def test_best_trial_minimize(self, store):
        sid, _ = store.create_or_attach_study("s", SPACE, PROPS)
        self._complete(store, sid, 3.0)
        self._complete(store, sid, 1.0)
        assert store.best_trial(sid).index == 1

    def test_best_trial_none_without_completions(self, store):
        sid, _ = store.create_or_attach_study("s", SPACE, PROPS)
        store.open_trial(sid, {"x": 0.0})
        assert store.best_trial(sid) is None

    def test_best_trial_tie_breaks_to_lower_index(self, store):
        sid, _ = store.create_or_attach_study("s", SPACE, PROPS)
        self._complete(store, sid, 1.0)
        self._complete(store, sid, 1.0)
        assert store.best_trial(sid).index == 0

    def test_observation_history_in_completion_order(self, store):
        sid, _ = store.create_or_attach_study("s", SPACE, PROPS)
        t0 = store.open_trial(sid, {"x": 0.0})
        t1 = store.open_trial(sid, {"x": 1.0})
        store.finalize_trial(t1.trial_id, objective=1.0)  # completes first
        store.finalize_trial(t0.trial_id, objective=0.0)
        h = store.observation_history(sid)
        assert [o for _, o in h.entries] == [1.0, 0.0]

    def test_failed_trials_excluded_from_history(self, store):
        sid, _ = store.create_or_attach_study("s", SPACE, PROPS)
        t = store.open_trial(sid, {"x": 0.0})
        store.finalize_trial(t.trial_id, failed=True)
        assert store.observation_history(sid).entries == ()

    def test_list_trials_state_filter(self, store):
        sid, _ = store.create_or_attach_study("s", SPACE, PROPS)
        self._complete(store, sid, 1.0)
        store.open_trial(sid, {"x": 0.0})
        assert len(store.list_trials(sid)) == 2
        assert len(store.list_trials(sid, state=core.COMPLETED)) == 1
        assert len(store.list_trials(sid, state=core.RUNNING)) == 1

    def test_study_counts(self, store):
        sid, _ = store.create_or_attach_study("s", SPACE, PROPS)
        self._complete(store, sid, 1.0)
        t = store.open_trial(sid, {"x": 0.0})
        store.mark_pruned(t.trial_id)
        counts = store.study_counts(sid)
        assert counts == {"running": 0, "completed": 1, "pruned": 1, "failed": 0}


class TestTokens:
    def test_issue_and_authenticate(self, store):
        token_id, secret = store.issue_token("alice", 3600)
        assert store.authenticate(secret) == "alice"
        assert len(secret) >= 32  # >= 128 bits of randomness

    def test_expired_token_rejected(self, store):
        _, secret = store.issue_token("alice", 0.05)
        time.sleep(0.1)
        with pytest.raises(AuthRejectedError) as exc:
            store.authenticate(secret)
        assert exc.value.reason == "expired"

    def test_revoked_token_rejected(self, store):
        token_id, secret = store.issue_token("alice", 3600)
        store.revoke_token(token_id)
        with pytest.raises(AuthRejectedError) as exc:
            store.authenticate(secret)
        assert exc.value.reason == "revoked"

    def test_unknown_secret_rejected(self, store):
        with pytest.raises(AuthRejectedError) as exc:
            store.authenticate("not-a-secret")
        assert exc.value.reason == "unknown"

    def test_revoke_unknown_token(self, store):
        with pytest.raises(UnknownTokenError):
            store.revoke_token("nope")

    def test_secret_not_stored_in_plaintext(self, store, tmp_path):
        _, secret = store.issue_token("alice", 3600)
        store.close()
        blob = (tmp_path / "data" / "state.db").read_bytes()
        assert secret.encode() not in blob


class TestDurability:
    def test_state_survives_reopen(self, store, tmp_path):
        sid, _ = store.create_or_attach_study("s", SPACE, PROPS)
        t = store.open_trial(sid, {"x": 1.5})
        store.record_intermediate(t.trial_id, 0, 2.0)
        store.finalize_trial(t.trial_id, objective=0.7)
        _, secret = store.issue_token("alice", 3600)
        store.close()

        reopened = Storage(tmp_path / "data")
        try:
            trial = reopened.get_trial(t.trial_id)
            assert trial.state == core.COMPLETED
            assert trial.objective == 0.7
            assert trial.intermediates == ((0, 2.0),)
            assert reopened.authenticate(secret) == "alice"
            sid2, created = reopened.create_or_attach_study("s", SPACE, PROPS)
            assert sid2 == sid and not created
        finally:
            reopened.close()

    def test_referential_integrity(self, store):
        sid, _ = store.create_or_attach_study("s", SPACE, PROPS)
        trials = store.list_trials(sid)
        for t in trials:
            assert store.get_study(t.study_id)
