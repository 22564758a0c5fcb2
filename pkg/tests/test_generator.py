import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from arta.data import compute_baseline
from arta.errors import ConfigurationError
from arta.generator import GeneratorParams, apply_mask, generate_mask, mask_l1, window_baseline
from conftest import generator_oracle


def test_mask_in_open_unit_interval(rng):
    gen = GeneratorParams.init(3, 8, 20, rng)
    m = generate_mask(gen, rng.standard_normal((5, 20, 3)))
    assert m.shape == (5, 20)
    assert torch.all(m > 0) and torch.all(m < 1)


def test_zero_generator_gives_half():
    m = generate_mask(GeneratorParams.zeros(2, 4, 6), np.ones((6, 2)))
    assert torch.all(m == 0.5)


def test_mask_matches_numpy_oracle(rng):
    gen = GeneratorParams.init(3, 5, 7, rng).to(torch.float64)
    x = rng.standard_normal((7, 3))
    np.testing.assert_allclose(generate_mask(gen, x).numpy(), generator_oracle(gen, x), atol=1e-12)


def test_window_length_must_match_head():
    with pytest.raises(ConfigurationError):
        generate_mask(GeneratorParams.zeros(2, 4, 6), np.ones((5, 2)))


def test_mask_identities_exact(rng):
    x = rng.standard_normal((11, 4))
    b = compute_baseline(x)
    assert np.array_equal(apply_mask(x, np.ones(11), b), x)
    assert np.array_equal(apply_mask(x, np.zeros(11), b), b)
    xt = torch.tensor(x, dtype=torch.float32)
    assert torch.equal(apply_mask(xt, torch.ones(11), window_baseline(xt)), xt)
    assert torch.equal(apply_mask(xt, torch.zeros(11), window_baseline(xt)), window_baseline(xt))


def test_apply_mask_elementwise(rng):
    x, m = rng.standard_normal((2, 5, 3)), rng.random((2, 5))
    b = compute_baseline(x)
    out = apply_mask(x, m, b)
    for i in range(2):
        for t in range(5):
            for f in range(3):
                assert out[i, t, f] == pytest.approx(m[i, t] * x[i, t, f] + (1 - m[i, t]) * b[i, t, f], abs=1e-15)


def test_perturbation_identity_bit_exact_on_dyadic_grid():
    # x, δ, b on a 2^-8 grid and m on a 2^-4 grid keep every product/sum exact
    rng = np.random.default_rng(2024)
    for _ in range(100):
        x = rng.integers(-512, 512, (16, 3)) / 256.0
        d = rng.integers(-32, 32, (16, 3)) / 256.0
        b = rng.integers(-512, 512, (1, 3)).repeat(16, 0) / 256.0
        m = rng.integers(0, 17, 16) / 16.0
        lhs = apply_mask(x + d, m, b) - apply_mask(x, m, b)
        assert np.array_equal(lhs, d * m[:, None])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_perturbation_identity_within_rounding(seed):
    rng = np.random.default_rng(seed)
    x, d, m = rng.standard_normal((8, 2)), rng.uniform(-0.1, 0.1, (8, 2)), rng.random(8)
    b = compute_baseline(x)
    lhs = apply_mask(x + d, m, b) - apply_mask(x, m, b)
    scale = np.abs(x).max() + np.abs(b).max() + 1
    np.testing.assert_allclose(lhs, d * m[:, None], atol=8 * np.finfo(float).eps * scale)


def test_mask_l1():
    assert mask_l1(np.array([0.25, 0.5, 1.0])) == 1.75
    np.testing.assert_array_equal(mask_l1(torch.tensor([[1.0, 1.0], [0.0, 0.5]])).numpy(), [2.0, 0.5])


def test_mask_deterministic_repeated_calls(rng):
    a = GeneratorParams.init(2, 6, 12, np.random.default_rng(9))
    b = GeneratorParams.init(2, 6, 12, np.random.default_rng(9))
    x = rng.standard_normal((3, 12, 2))
    assert torch.equal(generate_mask(a, x), generate_mask(a, x))
    assert torch.equal(generate_mask(a, x), generate_mask(b, x))


def test_mask_l1_matches_loop(rng):
    m = rng.random((4, 30))
    expected = [sum(m[i, t] for t in range(30)) for i in range(4)]
    np.testing.assert_allclose(mask_l1(m), expected, atol=1e-7)
