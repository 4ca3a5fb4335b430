import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dreamrace.errors import BufferUnavailableError, ValidationError
from dreamrace.replay import (
    EpisodeBuilder,
    EpisodeRecord,
    ReplayBuffer,
    load_episode,
    save_episode,
)


def make_episode(length, tag=0, terminated=True, shape=(4, 4, 3)):
    rng = np.random.default_rng(tag)
    b = EpisodeBuilder()
    b.start(rng.integers(0, 256, shape).astype(np.uint8))
    for k in range(length - 1):
        # reward encodes (tag, step) so tests can locate every sampled element
        b.add(rng.uniform(-1, 1, 4), tag * 1000 + k + 1, rng.integers(0, 256, shape).astype(np.uint8),
              terminated=terminated and k == length - 2)
    return b.finish()


class TestEpisodes:
    def test_builder_layout(self):
        ep = make_episode(5)
        assert len(ep) == 5
        np.testing.assert_array_equal(ep.is_first, [1, 0, 0, 0, 0])
        np.testing.assert_array_equal(ep.continues, [1, 1, 1, 1, 0])
        assert ep.rewards[0] == 0.0
        np.testing.assert_array_equal(ep.actions[-1], 0.0)

    def test_truncated_keeps_continue(self):
        b = EpisodeBuilder()
        b.start(np.zeros((2, 2, 3)))
        b.add(np.zeros(4), 1.0, np.zeros((2, 2, 3)), terminated=True, truncated=True)
        assert b.finish().continues[-1] == 1.0

    def test_quantization_round_trip(self):
        vals = np.arange(256, dtype=np.float64).reshape(1, 16, 16, 1).repeat(3, -1) / 255.0
        ep = EpisodeRecord(vals, np.zeros((1, 4)), [0.0], [1.0], [1.0])
        np.testing.assert_array_equal(ep.observations / 255.0, vals)

    @pytest.mark.parametrize(
        "field,value",
        [("continues", [1, 0, 1]), ("is_first", [1, 1, 0]), ("rewards", [0.0, 1.0]), ("continues", [1, 0.5, 1])],
    )
    def test_rejected(self, field, value):
        ep = make_episode(3, terminated=False)
        setattr(ep, field, np.asarray(value, dtype=float))
        with pytest.raises(ValidationError):
            ReplayBuffer().add_episode(ep)

    def test_spill_round_trip(self, tmp_path):
        ep = make_episode(7, tag=3)
        save_episode(tmp_path / "e.bin", ep)
        back = load_episode(tmp_path / "e.bin")
        for name in ("observations", "actions", "rewards", "continues", "is_first"):
            a, b = getattr(ep, name), getattr(back, name)
            assert a.dtype == b.dtype and a.tobytes() == b.tobytes()

    def test_spill_rejects_garbage(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"nope")
        with pytest.raises(ValidationError):
            load_episode(tmp_path / "x.bin")


class TestCapacity:
    def test_one_step_episode(self):
        buf = ReplayBuffer()
        assert buf.add_episode(make_episode(1)) == 1

    def test_eviction(self):
        buf = ReplayBuffer(capacity=20)
        for k in range(10):
            buf.add_episode(make_episode(6, tag=k))
            assert len(buf) <= 20
        assert buf.num_episodes == 3
        assert buf.episodes()[0].rewards[1] == 7 * 1000 + 1

    def test_counting(self):
        rng = np.random.default_rng(0)
        buf = ReplayBuffer()
        lengths = rng.integers(1, 30, 100)
        for k, n in enumerate(lengths):
            buf.add_episode(make_episode(int(n), tag=k, shape=(1, 1, 3)))
        assert len(buf) == int(lengths.sum())

    def test_oversized_episode(self):
        with pytest.raises(ValidationError):
            ReplayBuffer(capacity=3).add_episode(make_episode(4))

    def test_directory_round_trip(self, tmp_path):
        buf = ReplayBuffer()
        for k in range(3):
            buf.add_episode(make_episode(4 + k, tag=k))
        buf.spill(tmp_path)
        other = ReplayBuffer()
        assert other.load_directory(tmp_path) == len(buf)


class TestSampling:
    def test_empty(self):
        with pytest.raises(BufferUnavailableError):
            ReplayBuffer().sample(2, 4, seed=0)

    def test_single_episode_is_itself(self):
        ep = make_episode(8)
        buf = ReplayBuffer()
        buf.add_episode(ep)
        batch = buf.sample(1, 8, seed=1)
        np.testing.assert_array_equal(batch.observations[0], ep.observations / 255.0)
        np.testing.assert_array_equal(batch.rewards[0], ep.rewards)
        np.testing.assert_array_equal(batch.continues[0], ep.continues)
        np.testing.assert_array_equal(batch.valid[0], 1.0)

    def test_deterministic(self):
        buf = ReplayBuffer()
        for k in range(5):
            buf.add_episode(make_episode(10 + k, tag=k))
        a, b = buf.sample(6, 4, seed=9), buf.sample(6, 4, seed=9)
        for name in ("observations", "actions", "rewards", "starts", "episode_ids"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_uniform_over_episodes(self):
        buf = ReplayBuffer()
        for k in range(10):
            buf.add_episode(make_episode(12, tag=k, shape=(1, 1, 3)))
        batch = buf.sample(100_000, 5, seed=0)
        freq = np.bincount(batch.episode_ids, minlength=10) / 100_000
        assert np.max(np.abs(freq - 0.1)) < 0.01

    def test_uniform_over_starts(self):
        buf = ReplayBuffer()
        lengths = [3, 10, 25]
        for k, n in enumerate(lengths):
            buf.add_episode(make_episode(n, tag=k, shape=(1, 1, 3)))
        batch = buf.sample(60_000, 5, seed=4)
        counts = np.array([max(1, n - 5 + 1) for n in lengths], float)
        freq = np.bincount(batch.episode_ids, minlength=3) / 60_000
        np.testing.assert_allclose(freq, counts / counts.sum(), atol=0.01)

    def test_padding_short_episode(self):
        buf = ReplayBuffer()
        buf.add_episode(make_episode(3))
        batch = buf.sample(2, 6, seed=0)
        np.testing.assert_array_equal(batch.valid, [[1, 1, 1, 0, 0, 0]] * 2)
        np.testing.assert_array_equal(batch.continues[:, 3:], 0.0)
        np.testing.assert_array_equal(batch.observations[:, 3:], 0.0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 20), min_size=1, max_size=8), st.integers(1, 12), st.integers(0, 10**6))
def test_snippets_stay_within_one_episode(lengths, T, seed):
    buf = ReplayBuffer()
    eps = [make_episode(n, tag=k + 1, shape=(1, 1, 3)) for k, n in enumerate(lengths)]
    for ep in eps:
        buf.add_episode(ep)
    batch = buf.sample(16, T, seed=seed)
    for b in range(16):
        ep = eps[batch.episode_ids[b]]
        s = batch.starts[b]
        n = int(batch.valid[b].sum())
        assert n == min(T, len(ep) - s)
        np.testing.assert_array_equal(batch.rewards[b, :n], ep.rewards[s : s + n])
        np.testing.assert_array_equal(batch.actions[b, :n], ep.actions[s : s + n])
        assert np.all(batch.valid[b, n:] == 0.0) and np.all(batch.rewards[b, n:] == 0.0)
        expected_first = np.zeros(T)
        expected_first[0] = 1.0 if s == 0 else 0.0
        np.testing.assert_array_equal(batch.is_first[b], expected_first)


def test_concurrent_reader_sees_whole_episodes():
    buf = ReplayBuffer(capacity=400)
    buf.add_episode(make_episode(10, tag=1))
    errors = []
    stop = threading.Event()

    def writer():
        for k in range(2, 120):
            buf.add_episode(make_episode(10, tag=k, shape=(4, 4, 3)))
        stop.set()

    def reader():
        seed = 0
        while not stop.is_set():
            batch = buf.sample(8, 10, seed=seed)
            seed += 1
            for b in range(8):
                tag = int(batch.rewards[b, 1]) // 1000
                expect = tag * 1000 + np.arange(1, 10)
                if not np.array_equal(batch.rewards[b, 1:], expect):
                    errors.append(batch.rewards[b])

    threads = [threading.Thread(target=writer), threading.Thread(target=reader)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
