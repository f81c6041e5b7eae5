from prilsim import rng


def test_mix64_reference_values():
    # SplitMix64 sequence from state 0: first output of the classic generator
    assert rng.mix64(rng.GOLDEN) == 0xE220A8397B1DCDAF
    assert rng.mix64(0) == 0


def test_draw_is_pure_and_in_unit_interval():
    key = rng.derive_key(42, rng.LOSS, 3)
    xs = [rng.draw(key, c) for c in range(1000)]
    assert xs == [rng.draw(key, c) for c in range(1000)]
    assert all(0.0 <= x < 1.0 for x in xs)


def test_streams_differ():
    a = [rng.draw(rng.derive_key(1, rng.LOSS, 0), c) for c in range(10)]
    b = [rng.draw(rng.derive_key(1, rng.LOSS, 1), c) for c in range(10)]
    c = [rng.draw(rng.derive_key(2, rng.LOSS, 0), c) for c in range(10)]
    assert a != b and a != c


def test_uniform_mean():
    n = 100_000
    mean = sum(rng.uniform(5, rng.DRIFT, i) for i in range(n)) / n
    assert abs(mean - 0.5) < 0.005


def test_loss_stream_regression():
    # pinned so that a refactor cannot silently change every seeded run
    key = rng.derive_key(1, rng.LOSS, 0)
    assert key == 0x81FB535CA52E6825
    assert [rng.draw(key, c) for c in range(3)] == [0.872280367034505, 0.9931951800407831, 0.32302674151277]
