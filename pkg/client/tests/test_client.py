import pytest

import hopaas_client as hpc
from conftest import ADMIN_KEY, WORKER_SECRET

SPACE = {"x": hpc.uniform(-5, 5)}


def make_study(server, **kw):
    defaults = dict(name="sdk-test", space=SPACE, direction="minimize",
                    sampler={"kind": "random", "seed": 5},
                    server=server.url, token=WORKER_SECRET)
    defaults.update(kw)
    return hpc.Study(**defaults)


class TestErrors:
    def test_second_tell_raises_locally(self, live_server):
        with make_study(live_server) as study:
            t = study.suggest()
            t.tell(0.3)
            with pytest.raises(hpc.UsageError):
                t.tell(0.3)

    def test_conflict_maps_to_conflict_error(self, live_server):
        # two handles on the same trial id: the second tell hits the server
        with make_study(live_server) as study:
            t = study.suggest()
            t.tell(0.3)
            stale = hpc.Trial(study, t.trial_id, t.index, t.params)
            with pytest.raises(hpc.ConflictError):
                stale.tell(0.4)

    def test_auth_error(self, live_server):
        with make_study(live_server, token="bad-token") as study:
            with pytest.raises(hpc.AuthError):
                study.suggest()

    def test_validation_error_names_parameter(self, live_server):
        bad = {"lr": hpc.log_uniform(1e-4, 1.0)}
        bad["lr"]["low"] = 0.0
        with make_study(live_server, space=bad) as study:
            with pytest.raises(hpc.ValidationError, match="lr"):
                study.suggest()

    def test_unknown_trial_error(self, live_server):
        with make_study(live_server) as study:
            study.suggest()
            ghost = hpc.Trial(study, "nope-000000", 0, {})
            with pytest.raises(hpc.UnknownTrialError):
                ghost.tell(1.0)

    def test_connection_error(self):
        study = hpc.Study(name="s", space=SPACE, server="http://127.0.0.1:9",
                          token="t", timeout=0.2)
        with pytest.raises(hpc.ConnectionError):
            study.suggest()


class TestHandleStateMachine:
    def test_one_open_trial_per_handle(self, live_server):
        with make_study(live_server) as study:
            study.suggest()
            with pytest.raises(hpc.UsageError):
                study.suggest()

    def test_prune_closes_trial_locally(self, live_server):
        pruner = {"kind": "median", "n_warmup_steps": 0, "n_min_trials": 1}
        with make_study(live_server, pruner=pruner) as study:
            good = study.suggest()
            assert good.should_prune(0, 1.0) is False
            good.tell(1.0)
            bad = study.suggest()
            assert bad.should_prune(0, 9.0) is True
            assert bad.closed
            # raises locally, before any HTTP call
            with pytest.raises(hpc.UsageError):
                bad.tell(9.0)

    def test_trial_block_reports_failure_on_exception(self, live_server):
        import httpx
        with make_study(live_server) as study:
            with pytest.raises(RuntimeError):
                with study.trial():
                    raise RuntimeError("training crashed")
            sid = study.study_id
        r = httpx.get(f"{live_server.url}/api/studies/{sid}/trials",
                      headers={"x-admin-key": ADMIN_KEY})
        assert [t["state"] for t in r.json()["trials"]] == ["failed"]

    def test_best_objective_tracked(self, live_server):
        with make_study(live_server) as study:
            study.suggest().tell(2.0)
            study.suggest().tell(1.0)
            assert study.best_objective == 1.0


class TestConfigFromEnv:
    def test_env_variables(self, live_server, monkeypatch):
        monkeypatch.setenv("HOPAAS_SERVER", live_server.url)
        monkeypatch.setenv("HOPAAS_TOKEN", WORKER_SECRET)
        with hpc.Study(name="env-test", space=SPACE) as study:
            assert study.suggest().params

    def test_missing_config_raises(self, monkeypatch):
        monkeypatch.delenv("HOPAAS_SERVER", raising=False)
        monkeypatch.delenv("HOPAAS_TOKEN", raising=False)
        with pytest.raises(hpc.UsageError):
            hpc.Study(name="s", space=SPACE)


class TestWireFidelity:
    """The SDK and the bench harness speak the identical wire dialect."""

    SEED = 11

    def _bench_report(self, tmp_path):
        from conftest import LiveServer
        from hopaas.bench import run_campaign
        server = LiveServer(tmp_path / "bench-data").start()
        try:
            return run_campaign(
                server.url, WORKER_SECRET, "sphere",
                n_workers=1, n_trials=8, seed=self.SEED,
                sampler={"kind": "tpe", "seed": self.SEED, "n_startup_trials": 4},
                study_name="fidelity")
        finally:
            server.stop()

    def _sdk_sequence(self, tmp_path):
        from conftest import LiveServer
        server = LiveServer(tmp_path / "sdk-data").start()
        try:
            space = {"x0": hpc.uniform(-5.12, 5.12), "x1": hpc.uniform(-5.12, 5.12)}
            seq = []
            with hpc.Study(
                name="fidelity", space=space, direction="minimize",
                sampler={"kind": "tpe", "seed": self.SEED, "n_startup_trials": 4},
                server=server.url, token=WORKER_SECRET,
            ) as study:
                for _ in range(8):
                    t = study.suggest()
                    value = t.params["x0"] ** 2 + t.params["x1"] ** 2
                    t.tell(value)
                    seq.append((t.params, value))
            return seq
        finally:
            server.stop()

    def test_sdk_reproduces_bench_trial_sequence(self, tmp_path):
        report = self._bench_report(tmp_path)
        bench_seq = [(t["params"], t["outcome"])
                     for t in report["per_worker"][0]["trials"]]
        sdk_seq = self._sdk_sequence(tmp_path)
        assert sdk_seq == bench_seq

    def test_identical_definition_attaches_to_same_study(self, live_server):
        from hopaas.bench import WorkerClient
        from hopaas.core import space_wire
        from hopaas.bench import OBJECTIVES
        client = WorkerClient(live_server.url, WORKER_SECRET)
        resp = client.ask("attach", space_wire(OBJECTIVES["sphere"].space),
                          {"direction": "minimize",
                           "sampler": {"kind": "random", "seed": 1},
                           "pruner": {"kind": "none"}})
        client.close()
        space = {"x0": hpc.uniform(-5.12, 5.12), "x1": hpc.uniform(-5.12, 5.12)}
        with hpc.Study(name="attach", space=space, direction="minimize",
                       sampler={"kind": "random", "seed": 1},
                       server=live_server.url, token=WORKER_SECRET) as study:
            study.suggest()
            assert study.study_id == resp["study_id"]
