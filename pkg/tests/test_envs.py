"""Toy environment contracts: dynamics, flags, dual observations, noise."""

import numpy as np
import pytest
import torch

from logicmix.envs import (
    EnvSpec, EnvSpecError, EpisodeDone, Modification, VectorEnv,
    apply_objectness_noise, make_env,
)
from logicmix.valuation import OBJ, VAL, X, Y


def _kangaroo(seed=0, **mods):
    return make_env(EnvSpec("mini-kangaroo", seed=seed,
                            mods=Modification(**mods)))


def _seaquest(seed=0, **mods):
    return make_env(EnvSpec("mini-seaquest", seed=seed,
                            mods=Modification(**mods)))


class TestSpecsAndFlags:
    def test_unknown_env(self):
        with pytest.raises(EnvSpecError):
            EnvSpec("mini-breakout")

    def test_unknown_flag_name(self):
        with pytest.raises(EnvSpecError):
            Modification.from_names(["jetpack"])

    def test_kangaroo_flags_invalid_on_seaquest(self):
        with pytest.raises(EnvSpecError, match="relocated_ladders"):
            _seaquest(relocated_ladders=True)

    def test_noise_rate_bounds(self):
        with pytest.raises(EnvSpecError):
            Modification(objectness_noise_rate=0.6)
        with pytest.raises(EnvSpecError):
            Modification(objectness_noise_rate=-0.1)


class TestKangarooReset:
    def test_default_layout(self):
        env = _kangaroo()
        raw, z = env.reset()
        assert tuple(env.player) == env.START
        assert env.player[1] == env.FLOORS[0]          # bottom floor
        assert env.JOEY[1] == env.FLOORS[-1]           # joey on top platform
        assert len(env.ladder_cols) == 3               # one ladder per floor
        assert len(set(env.ladder_cols)) == 3
        assert raw.shape == (4, env.W, env.H, 5)
        assert z.data.shape == (8, 5)

    def test_random_position_varies_start(self):
        env0 = _kangaroo(seed=0, random_position=True)
        env1 = _kangaroo(seed=3, random_position=True)
        env0.reset()
        env1.reset()
        assert env0.player[0] != env1.player[0]

    def test_no_enemies_zeroes_monkeys(self):
        env = _kangaroo(no_enemies=True)
        _, z = env.reset()
        monkey_rows = [i for i, n in enumerate(env.slot_types) if "monkey" in n]
        for r in monkey_rows:
            assert float(z.data[r, OBJ]) == 0.0

    def test_relocated_ladders_permutes(self):
        env = _kangaroo(seed=5, relocated_ladders=True)
        env.reset()
        assert sorted(env.ladder_cols) == sorted(env.DEFAULT_LADDER_COLS)


class TestKangarooStep:
    def test_reach_joey_from_below(self):
        env = _kangaroo()
        env.reset()
        state = env.state_dict()
        state["entities"]["player"] = [env.JOEY[0], env.JOEY[1] + 1]
        env.load_state_dict(state)
        _, _, reward, done = env.step(env.action_names.index("up"))
        assert reward == pytest.approx(100.0)
        assert done
        assert env.last_event == "joey"

    def test_up_only_on_ladders(self):
        env = _kangaroo()
        env.reset()  # start (8, 11); ladder1 is at column 11
        y0 = env.player[1]
        env.step(env.action_names.index("up"))
        assert env.player[1] == y0  # off-ladder up is a no-op

        state = env.state_dict()
        state["entities"]["player"] = [env.ladder_cols[0], env.FLOORS[0]]
        env.load_state_dict(state)
        env.step(env.action_names.index("up"))
        assert env.player[1] == env.FLOORS[0] - 1

    def test_punch_removes_adjacent_monkey(self):
        env = _kangaroo()
        env.reset()
        state = env.state_dict()
        mx, my = state["entities"]["monkeys"][0]["x"], state["entities"]["monkeys"][0]["y"]
        state["entities"]["player"] = [mx - 2, my]
        env.load_state_dict(state)
        _, z, reward, done = env.step(env.action_names.index("punch"))
        assert reward == pytest.approx(5.0)
        assert not done
        assert not env.monkeys[0]["alive"]
        assert float(z.data[4, OBJ]) == 0.0

    def test_monkey_contact_ends_episode(self):
        env = _kangaroo()
        env.reset()
        state = env.state_dict()
        m = state["entities"]["monkeys"][0]
        state["entities"]["player"] = [m["x"] - 1, m["y"]]
        env.load_state_dict(state)
        _, _, reward, done = env.step(env.action_names.index("right"))
        assert done
        assert reward == pytest.approx(-10.0)
        assert env.last_event == "monkey"

    def test_coconut_schedule_fixed_columns(self):
        env = _kangaroo()
        env.reset()
        seen = []
        for _ in range(3 * env.COCONUT_PERIOD):
            env.step(0)
            if env.coconut["active"] and env.coconut["y"] == 1:
                seen.append(env.coconut["x"])
            if env.done:
                env.reset()
        assert seen
        assert all(c in env.COCONUT_COLS for c in seen)

    def test_disable_falling_coconut(self):
        env = _kangaroo(disable_falling_coconut=True)
        env.reset()
        for _ in range(120):
            env.step(0)
            assert not env.coconut["active"]
            if env.done:
                env.reset()

    def test_step_after_done(self):
        env = _kangaroo()
        env.reset()
        env.done = True
        with pytest.raises(EpisodeDone):
            env.step(0)

    def test_invalid_action(self):
        env = _kangaroo()
        env.reset()
        with pytest.raises(ValueError):
            env.step(17)


class TestSeaquestStep:
    def test_surface_with_no_divers_penalized(self):
        env = _seaquest()
        env.reset()
        state = env.state_dict()
        state["entities"]["player"] = [8, 1]
        state["entities"]["carried"] = 0
        env.load_state_dict(state)
        _, _, reward, done = env.step(env.action_names.index("up"))
        assert reward == pytest.approx(-5.0)
        assert not done

    def test_surface_with_divers_rewarded(self):
        env = _seaquest()
        env.reset()
        state = env.state_dict()
        state["entities"]["player"] = [8, 1]
        state["entities"]["carried"] = 3
        env.load_state_dict(state)
        _, _, reward, done = env.step(env.action_names.index("up"))
        assert reward == pytest.approx(60.0)
        assert env.carried == 0

    def test_oxygen_runs_out(self):
        env = _seaquest()
        env.reset()
        state = env.state_dict()
        state["entities"]["player"] = [8, 6]
        state["entities"]["oxygen"] = 1.0
        env.load_state_dict(state)
        _, _, reward, done = env.step(0)
        assert done
        assert reward == pytest.approx(-10.0)
        assert env.last_event == "oxygen"

    def test_oxygen_refills_at_surface(self):
        env = _seaquest()
        env.reset()
        state = env.state_dict()
        state["entities"]["player"] = [8, 1]
        state["entities"]["oxygen"] = 37.0
        env.load_state_dict(state)
        env.step(env.action_names.index("up"))
        assert env.oxygen == pytest.approx(100.0)

    def test_diver_pickup_and_capacity(self):
        env = _seaquest()
        env.reset()
        state = env.state_dict()
        d = state["entities"]["divers"][0]
        state["entities"]["player"] = [d["x"] - 1, d["y"]]
        env.load_state_dict(state)
        _, _, reward, _ = env.step(env.action_names.index("right"))
        assert reward == pytest.approx(5.0)
        assert env.carried == 1

        env.reset()
        state = env.state_dict()
        d = state["entities"]["divers"][0]
        state["entities"]["player"] = [d["x"] - 1, d["y"]]
        state["entities"]["carried"] = env.DIVER_CAPACITY
        env.load_state_dict(state)
        _, _, reward, _ = env.step(env.action_names.index("right"))
        assert reward == pytest.approx(0.0)
        assert env.carried == env.DIVER_CAPACITY

    def test_fire_removes_nearest_enemy_on_row(self):
        env = _seaquest()
        env.reset()
        state = env.state_dict()
        e = state["entities"]["enemies"][1]
        state["entities"]["player"] = [max(0, e["x"] - 5), e["y"]]
        env.load_state_dict(state)
        _, _, reward, _ = env.step(env.action_names.index("fire"))
        assert reward == pytest.approx(2.0)
        assert not env.enemies[1]["alive"]

    def test_no_enemies_never_enemy_termination(self):
        rng = np.random.default_rng(4)
        env = _seaquest(no_enemies=True)
        env.reset()
        for _ in range(600):
            _, _, _, done = env.step(int(rng.integers(6)))
            if done:
                assert env.last_event != "enemy"
                env.reset()

    def test_carried_divers_in_player_value(self):
        env = _seaquest()
        env.reset()
        state = env.state_dict()
        state["entities"]["carried"] = 2
        env.load_state_dict(state)
        _, z = env._observe()
        assert float(z.data[0, VAL]) == 2.0
        assert float(z.data[7, VAL]) == pytest.approx(env.oxygen)


class TestObjectnessNoise:
    def _state(self, env="mini-kangaroo"):
        e = make_env(EnvSpec(env))
        _, z = e.reset()
        return z

    def test_zero_rate_identity(self):
        z = self._state()
        rng = np.random.default_rng(0)
        out = apply_objectness_noise(z, 0.0, rng)
        assert torch.equal(out.data, z.data)

    def test_rate_above_bound_rejected(self):
        z = self._state()
        with pytest.raises(EnvSpecError):
            apply_objectness_noise(z, 0.6, np.random.default_rng(0))

    def test_empirical_drop_rate(self):
        z = self._state()
        rng = np.random.default_rng(123)
        drops, total = 0, 0
        for _ in range(10_000 // (len(z.slot_types) - 1)):
            out = apply_objectness_noise(z, 0.1, rng)
            for i, name in enumerate(z.slot_types):
                if name == "player":
                    assert float(out.data[i, OBJ]) == 1.0
                    continue
                if float(z.data[i, OBJ]) == 1.0:
                    total += 1
                    drops += float(out.data[i, OBJ]) == 0.0
        assert drops / total == pytest.approx(0.1, abs=0.01)

    def test_env_applies_noise_per_step(self):
        env = _kangaroo(objectness_noise_rate=0.5)
        env.reset()
        dropped = 0
        for _ in range(50):
            _, z, _, done = env.step(0)
            dropped += int((z.data[1:, OBJ] == 0.0).sum())
            if done:
                env.reset()
        assert dropped > 0


class TestDualObservations:
    @pytest.mark.parametrize("name", ["mini-kangaroo", "mini-seaquest"])
    def test_entities_occupy_matching_cells(self, name):
        rng = np.random.default_rng(8)
        env = make_env(EnvSpec(name, seed=2))
        raw, z = env.reset()
        for _ in range(200):
            newest = raw[-1]
            for row in range(z.data.shape[0]):
                if float(z.data[row, OBJ]) != 1.0:
                    continue
                x, y = int(z.data[row, X]), int(z.data[row, Y])
                assert float(newest[x, y].sum()) > 0.0, (
                    f"{env.slot_types[row]} at ({x},{y}) missing from frame"
                )
            raw, z, _, done = env.step(int(rng.integers(6)))
            if done:
                raw, z = env.reset()

    @pytest.mark.parametrize("name", ["mini-kangaroo", "mini-seaquest"])
    def test_determinism(self, name):
        actions = np.random.default_rng(1).integers(0, 6, 300)

        def rollout():
            env = make_env(EnvSpec(name, seed=9))
            raw, z = env.reset()
            trace = [raw.clone(), z.data.clone()]
            for a in actions:
                raw, z, r, done = env.step(int(a))
                trace.append((raw.clone(), z.data.clone(), r, done))
                if done:
                    raw, z = env.reset()
            return trace

        t1, t2 = rollout(), rollout()
        assert torch.equal(t1[0], t2[0])
        for (r1, z1, rw1, d1), (r2, z2, rw2, d2) in zip(t1[2:], t2[2:]):
            assert torch.equal(r1, r2) and torch.equal(z1, z2)
            assert rw1 == rw2 and d1 == d2

    @pytest.mark.parametrize("name", ["mini-kangaroo", "mini-seaquest"])
    def test_reward_bounds_and_length(self, name):
        rng = np.random.default_rng(3)
        env = make_env(EnvSpec(name, seed=1))
        env.reset()
        length = 0
        for _ in range(1500):
            _, _, r, done = env.step(int(rng.integers(6)))
            length += 1
            assert -10.0 <= r <= 100.0
            if done:
                assert length <= env.spec.max_steps
                env.reset()
                length = 0

    def test_raw_values_binary(self):
        env = _seaquest()
        raw, _ = env.reset()
        assert set(torch.unique(raw).tolist()) <= {0.0, 1.0}


class TestVectorEnv:
    def test_auto_reset_and_episode_reporting(self):
        venv = VectorEnv(EnvSpec("mini-kangaroo", max_steps=16), num_envs=3)
        raw, z = venv.reset()
        assert raw.shape[0] == 3 and z.shape[0] == 3
        finished = []
        for t in range(40):
            _, _, _, dones, fin = venv.step([0, 0, 0])
            finished.extend(fin)
        assert finished
        for idx, ret, length in finished:
            assert length <= 16

    def test_state_dict_round_trip(self):
        venv = VectorEnv(EnvSpec("mini-seaquest"), num_envs=2)
        venv.reset()
        rng = np.random.default_rng(0)
        for _ in range(30):
            venv.step(rng.integers(0, 6, 2))
        snap = venv.state_dict()
        actions = rng.integers(0, 6, (20, 2))
        after1 = [venv.step(a) for a in actions]

        venv2 = VectorEnv(EnvSpec("mini-seaquest"), num_envs=2)
        venv2.reset()
        venv2.load_state_dict(snap)
        after2 = [venv2.step(a) for a in actions]
        for (r1, z1, rew1, d1, f1), (r2, z2, rew2, d2, f2) in zip(after1, after2):
            assert torch.equal(r1, r2) and torch.equal(z1, z2)
            assert torch.equal(rew1, rew2) and torch.equal(d1, d2)
            assert f1 == f2
