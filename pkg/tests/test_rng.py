"""The generator must match the published reference streams bit for bit."""

import numpy as np

from sfid.rng import Xoshiro256StarStar, splitmix64

# Reference outputs for splitmix64 starting from state 0.
SPLITMIX64_SEED0 = [
    0xE220A8397B1DCDAF,
    0x6E789E6AA1B965F4,
    0x06C45D188009454F,
    0xF88BB8A8724C81EC,
    0x1B39896A51A8749B,
]


def test_splitmix64_reference_vector():
    state = 0
    outputs = []
    for _ in range(5):
        state, out = splitmix64(state)
        outputs.append(out)
    assert outputs == SPLITMIX64_SEED0


def test_xoshiro_first_outputs_from_known_state():
    # With state {1, 2, 3, 4}: first output rotl(2*5, 7)*9 = 11520, then s1
    # becomes 0 so the second output is 0.
    rng = Xoshiro256StarStar.from_state(1, 2, 3, 4)
    assert rng.next_u64() == 11520
    assert rng.next_u64() == 0


def test_same_seed_same_stream():
    a = Xoshiro256StarStar(123456789)
    b = Xoshiro256StarStar(123456789)
    assert [a.next_u64() for _ in range(100)] == [b.next_u64() for _ in range(100)]


def test_different_seeds_differ():
    a = Xoshiro256StarStar(1)
    b = Xoshiro256StarStar(2)
    assert [a.next_u64() for _ in range(10)] != [b.next_u64() for _ in range(10)]


def test_random_in_unit_interval():
    rng = Xoshiro256StarStar(7)
    draws = [rng.random() for _ in range(10_000)]
    assert all(0.0 <= x < 1.0 for x in draws)
    assert 0.45 < float(np.mean(draws)) < 0.55


def test_randint_bounds_and_coverage():
    rng = Xoshiro256StarStar(11)
    draws = [rng.randint(3, 7) for _ in range(2000)]
    assert set(draws) == {3, 4, 5, 6, 7}


def test_uniform_array_matches_scalar_stream():
    a = Xoshiro256StarStar(99)
    b = Xoshiro256StarStar(99)
    arr = a.uniform_array(50, -1.0, 1.0)
    scalars = np.array([b.uniform(-1.0, 1.0) for _ in range(50)])
    assert np.array_equal(arr, scalars)
