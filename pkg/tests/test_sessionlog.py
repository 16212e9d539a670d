import numpy as np
import pytest

from posedrift.attacker import AttackConfig
from posedrift.harness import NO_ATTACK, run_session, session_profile
from posedrift.odometry import VioEmulatorConfig
from posedrift.sessionlog import iter_records, load_session, replay_detection

DUR = 4.0


def run_logged(tmp_path, seed=31, defense="off", bundle=None, p=0.0, gz=True):
    name = f"s{seed}_{defense}_{p}.jsonl" + (".gz" if gz else "")
    path = tmp_path / name
    attack = AttackConfig(p=p, rng_seed=seed) if p else NO_ATTACK
    result = run_session(
        session_profile(seed, duration_s=DUR),
        VioEmulatorConfig(rng_seed=seed),
        attack,
        defense=defense,
        bundle=bundle,
        log_path=path,
    )
    return path, result


class TestLogFile:
    def test_roundtrip_matches_in_memory(self, tmp_path):
        path, result = run_logged(tmp_path)
        data = load_session(path)
        assert data.rounds == result.data.rounds
        assert data.profile == result.data.profile
        assert data.imu == result.data.imu
        assert data.slow_by_round == result.data.slow_by_round
        assert data.anchors == result.data.anchors
        for rid in result.data.fast_by_round:
            assert data.fast_by_round[rid] == result.data.fast_by_round[rid]
        for rid, x in result.data.features_by_round.items():
            assert np.array_equal(data.features_by_round[rid], x)
        assert data.spoof_records == result.data.spoof_records

    def test_same_seed_identical_bytes(self, tmp_path):
        for sub in ("a", "b"):
            (tmp_path / sub).mkdir()
        path_a, _ = run_logged(tmp_path / "a")
        path_b, _ = run_logged(tmp_path / "b")
        assert path_a.read_bytes() == path_b.read_bytes()

    def test_plain_and_gzip_same_records(self, tmp_path):
        path_gz, _ = run_logged(tmp_path, gz=True)
        path_plain, _ = run_logged(tmp_path, gz=False)
        assert list(iter_records(path_gz)) == list(iter_records(path_plain))

    def test_header_first_and_end_last(self, tmp_path):
        path, _ = run_logged(tmp_path)
        records = list(iter_records(path))
        assert records[0]["type"] == "header"
        assert records[-1]["type"] == "end"

    def test_rejects_non_session_file(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"type":"imu","t":0,"a":[0,0,0],"g":[0,0,0]}\n')
        with pytest.raises(ValueError):
            load_session(bad)

    def test_trajectory_ordered(self, tmp_path):
        path, _ = run_logged(tmp_path)
        traj = load_session(path).trajectory()
        ts = [p.timestamp for p in traj.poses]
        assert all(b > a for a, b in zip(ts, ts[1:]))


@pytest.fixture(scope="module")
def replay_bundle(tmp_path_factory):
    from posedrift.autoencoder import TrainConfig
    from posedrift.harness import generate_clean_logs, train_from_logs

    out = tmp_path_factory.mktemp("replay_clean")
    logs = generate_clean_logs(out, n_runs=4, base_seed=300, duration_s=DUR)
    return train_from_logs(logs, cfg=TrainConfig(rng_seed=0, max_epochs=8, patience=4), verbose=False)


class TestReplay:
    @pytest.mark.parametrize("defense", ["on", "passive"])
    def test_replay_reproduces_scores_and_verdicts(self, tmp_path, replay_bundle, defense):
        path, result = run_logged(tmp_path, seed=44, defense=defense, bundle=replay_bundle, p=0.5)
        data = load_session(path)
        replayed = replay_detection(data, replay_bundle)
        assert len(replayed) == data.rounds
        for rid, mse, verdict in replayed:
            assert mse == data.scores_by_round[rid]  # bit-exact
            logged = data.verdicts_by_round[rid]
            assert verdict.klass == logged.klass
            assert verdict.decision == logged.decision
            assert verdict.hard_streak_after == logged.hard_streak_after
