"""Exercises the Python bindings end to end on a tiny configuration.

Build and install first:

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/memristor_rl-*.whl
"""

import math
import os
import tempfile

import memristor_rl as mrl

SMALL = """
[harness]
test_states = 5

[training]
pretrain_c = 3

[sync]
total_samples = 2000
checkpoint_every = 1000

[replay]
capacity = 1000
pretrain_steps = 2000
"""


def check_config():
    cfg = mrl.Config(SMALL)
    again = mrl.Config(cfg.to_toml())
    assert cfg.hash() == again.hash()
    assert cfg.test_states == 5
    try:
        mrl.Config("[harness]\nbogus = 1\n")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown key accepted")
    return cfg


def check_pendulum():
    state = (0.1, 0.0, 0.05, 0.0)
    nxt, reward, failed = mrl.pendulum_step(state, True)
    assert len(nxt) == 4 and all(math.isfinite(v) for v in nxt)
    assert reward == 0 and not failed
    mirrored, _, _ = mrl.pendulum_step(tuple(-v for v in state), False)
    assert all(abs(a + b) < 1e-12 for a, b in zip(nxt, mirrored))
    _, reward, failed = mrl.pendulum_step((0.0, 0.0, 1.0, 0.0), True)
    assert reward == -1 and failed
    assert len(mrl.normalize_state(state)) == 5


def check_networks():
    x = mrl.normalize_state((0.1, 0.0, 0.05, 0.0))
    net = mrl.SeparateNet.random(3)
    assert 0.0 < net.ccw_probability(x) < 1.0
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "net.weights")
        net.save(path)
        assert mrl.SeparateNet.load(path).weights() == net.weights()
    shared = mrl.SharedNet.random(3)
    value, prob = shared.forward(x)
    assert math.isfinite(value) and 0.0 < prob < 1.0
    dv, dp = shared.gradients(x, 1.0)
    assert len(dv) == len(dp) == len(shared)


def check_devices():
    assert mrl.apply_pulse(0.5, 2.0, 1e-6) == 0.5
    assert mrl.apply_pulse(0.5, 2.8, 1e-6) > 0.5
    assert mrl.apply_pulse(0.5, -2.8, 1e-6) < 0.5
    xbar = mrl.Crossbar(2, 3, "full_range", seed=4)
    assert xbar.shape == (2, 3)
    xbar.write_exact([0.5, -0.5, 1.0, 0.0, 2.0, -2.0])
    assert abs(xbar.read_weights()[4] - 2.0) < 1e-9
    xbar.manhattan_update([1, -1, 1, -1, 1, -1])
    xbar.variable_amplitude_update([0.01] * 6, 1.0)
    assert all(abs(w) <= 3.0 for w in xbar.read_weights())
    assert xbar.dump()


def check_harness(cfg):
    mean, updates, eff = mrl.compute_metrics([10, 20, 30], 15.0, 5.0)
    assert mean == 20.0 and updates == 5.0 and eff == 1.0
    assert len(mrl.population("desk", 1)) == 25
    exp = mrl.Experiment(cfg, seed=1, agents=2)
    inference = exp.pretrain()
    assert 0.0 < inference <= mrl.MAX_TRIAL_STEPS
    assert len(exp.pretrained_weights()) >= 1
    mean, _, _ = exp.run_setting("manhattan_pq", c=2)
    assert 0.0 < mean <= mrl.MAX_TRIAL_STEPS
    runs = mrl.run_limited(cfg, seed=1, agents=1, learners=2)
    assert len(runs) == 1 and runs[0][-1][0] == 2000
    assert runs == mrl.run_limited(cfg, seed=1, agents=1, learners=2)


def main():
    cfg = check_config()
    check_pendulum()
    check_networks()
    check_devices()
    check_harness(cfg)
    print("smoke test passed")


if __name__ == "__main__":
    main()
