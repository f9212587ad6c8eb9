import json
from dataclasses import replace

import numpy as np
import pytest

from latpat.synth import (DEFAULT_RPCS, ConfigError, Degradation, RpcSpec, SessionConfig,
                          Topology, generate_session, load_session_config, random_degradation_pair,
                          session_config_from_dict, target_interval)

A1 = Degradation(1, (2,))
A2 = Degradation(2, (0, 4))


def fixed(**kw):
    return SessionConfig(a1=kw.pop("a1", A1), a2=kw.pop("a2", A2), **kw)


def zero_delay():
    return fixed(a1=Degradation(1, (2,), 0.0), a2=Degradation(2, (0, 4), 0.0))


class TestDegradations:
    @pytest.mark.parametrize("seed", range(20))
    def test_random_pair(self, seed):
        a, b = random_degradation_pair(Topology(), np.random.default_rng(seed))
        assert a.type != b.type and {a.type, b.type} <= {1, 2, 3}
        assert set(a.targets + b.targets) <= set(Topology().sync)

    def test_reproducible(self):
        a = generate_session(SessionConfig(seed=4))
        b = generate_session(SessionConfig(seed=4))
        assert np.array_equal(a[0].exec_times, b[0].exec_times) and a[1] == b[1]
        assert a[1].degradations != generate_session(SessionConfig(seed=5))[1].degradations

    def test_validation(self):
        with pytest.raises(ConfigError):
            Degradation(2, (1,))
        with pytest.raises(ConfigError):
            fixed(a2=Degradation(1, (3,))).validate()
        with pytest.raises(ConfigError):
            fixed(a1=Degradation(1, (6,))).validate()  # async target
        with pytest.raises(ConfigError):
            SessionConfig(a1=A1).validate()
        with pytest.raises(ConfigError):
            Topology((RpcSpec("x", "async"),))


class TestInjection:
    def test_exact_delay_on_targets(self):
        ts, gt = generate_session(fixed(seed=1))
        base, _ = generate_session(replace(zero_delay(), seed=1))
        diff = ts.exec_times - base.exec_times
        for i, lbl in enumerate(gt.labels):
            expected = np.zeros(ts.arity)
            if lbl:
                expected[list(gt.degradations[lbl].targets)] = 50.0
            assert diff[i] == pytest.approx(expected, abs=1e-9)

    def test_nominal_traces_untouched(self):
        ts, gt = generate_session(fixed(seed=2, noise1=True, noise2=True))
        base, _ = generate_session(replace(zero_delay(), seed=2))
        nominal = [i for i, lbl in enumerate(gt.labels) if lbl is None]
        assert np.array_equal(ts.exec_times[nominal], base.exec_times[nominal])

    def test_noise1_raises_one_target(self):
        ts, gt = generate_session(fixed(seed=3, noise1=True))
        base, _ = generate_session(replace(zero_delay(), seed=3))
        diff = ts.exec_times - base.exec_times
        for name in ("A1", "A2"):
            t = gt.noise1_targets[name]
            values = np.round(diff[gt.affected(name), t], 6)
            assert set(values) == {50.0, 60.0}

    def test_noise2_leaves_latency(self):
        plain, _ = generate_session(fixed(seed=4))
        noisy, gt = generate_session(fixed(seed=4, noise2=True))
        assert np.array_equal(plain.latency, noisy.latency)
        async_cols = Topology().async_
        assert set(gt.noise2_targets.values()) <= set(async_cols)
        assert (noisy.exec_times[:, async_cols] - plain.exec_times[:, async_cols]).max() == \
            pytest.approx(100.0)

    def test_latency_is_sync_sum(self):
        ts, _ = generate_session(SessionConfig(seed=0))
        assert np.allclose(ts.latency, ts.exec_times[:, Topology().sync].sum(axis=1))

    def test_noise2_needs_async(self):
        topo = Topology(tuple(r for r in DEFAULT_RPCS if r.kind == "sync"))
        with pytest.raises(ConfigError):
            generate_session(SessionConfig(topology=topo, noise2=True))

    def test_affect_rate(self):
        _, gt = generate_session(SessionConfig(seed=0, n_requests=10_000))
        for name in ("A1", "A2"):
            assert abs(len(gt.affected(name)) / 10_000 - 0.1) <= 0.01

    def test_target_interval(self):
        ts, gt = generate_session(SessionConfig(seed=6))
        interval = target_interval(ts, gt.labels)
        lat = ts.latency[gt.affected()]
        assert interval.lo == lat.min() and lat.max() in interval
        with pytest.raises(ValueError):
            target_interval(ts, [None] * len(ts))


class TestConfigFiles:
    def test_json_with_names(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps({"seed": 3, "n_requests": 50, "noise1": True,
                                    "a1": {"type": 1, "targets": ["getcart"]},
                                    "a2": {"type": 2, "targets": ["gethome", 1]}}))
        cfg = load_session_config(path)
        assert cfg.a1.targets == (3,) and cfg.a2.targets == (0, 1) and cfg.noise1
        assert cfg.n_requests == 50

    def test_toml(self, tmp_path):
        path = tmp_path / "s.toml"
        path.write_text('seed = 2\nn_requests = 20\n[[topology.rpcs]]\nname = "x"\n'
                        '[[topology.rpcs]]\nname = "y"\nkind = "async"\n')
        cfg = load_session_config(path)
        assert cfg.topology.names == ["x", "y"] and cfg.n_requests == 20

    def test_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            session_config_from_dict({"bogus": 1})
        with pytest.raises(ConfigError):
            session_config_from_dict({"a1": {"type": 1, "targets": ["nope"]}})
        bad = tmp_path / "b.toml"
        bad.write_text("seed = [")
        with pytest.raises(ConfigError):
            load_session_config(bad)
