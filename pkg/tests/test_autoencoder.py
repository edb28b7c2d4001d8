import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcaudit.autoencoder import (
    AEArchitecture,
    AEModel,
    Head,
    TrainConfig,
    forward,
    init_model,
    load_model,
    loss_and_grad,
    reconstruction_errors,
    save_model,
    train,
)
from dcaudit.dataset import SYNTHETIC_SCHEMA, gen_synthetic_normal
from dcaudit.errors import ArchitectureError, DimensionError, DivergenceError

from oracles import central_difference

MIXED4 = Head("mixed", ((0, 2), (2, 3)), (3, 4))


def oracle_forward(model, x, head):
    """Plain loops, no shared code with the package."""
    h = np.array(x, dtype=float)
    n_layers = len(model.arch.layer_sizes) - 1
    for i in range(n_layers):
        w, b = model.weights[i], model.biases[i]
        z = np.zeros((h.shape[0], w.shape[1]))
        for r in range(h.shape[0]):
            for c in range(w.shape[1]):
                z[r, c] = sum(h[r, k] * w[k, c] for k in range(w.shape[0])) + b[c]
        h = np.where(z > 0, z, 0.0) if i < n_layers - 1 else z
    if head.kind == "mixed":
        for a, bnd in head.groups:
            e = np.exp(h[:, a:bnd])
            h[:, a:bnd] = e / e.sum(axis=1, keepdims=True)
    return h


def oracle_sample_loss(x, out, head):
    if head.kind == "identity":
        return np.mean((out - x) ** 2, axis=1)
    total = np.zeros(len(x))
    for a, b in head.groups:
        y, p = x[:, a:b], np.clip(out[:, a:b], 1e-12, 1 - 1e-12)
        total += -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p), axis=1)
    a, b = head.continuous
    return total + np.mean((out[:, a:b] - x[:, a:b]) ** 2, axis=1)


def _mixed_batch(rng, n):
    x = np.zeros((n, 4))
    x[np.arange(n), rng.integers(0, 2, n)] = 1.0
    x[:, 2] = 1.0
    x[:, 3] = rng.random(n)
    return x


# --- architecture / init ----------------------------------------------------


def test_synthetic_architecture_shapes():
    arch = AEArchitecture.for_input(7, (6, 4, 2, 4, 6))
    model = init_model(arch, seed=0)
    assert [w.shape for w in model.weights] == [(7, 6), (6, 4), (4, 2), (2, 4), (4, 6), (6, 7)]
    assert all(np.all(b == 0) for b in model.biases)


def test_init_deterministic():
    arch = AEArchitecture.for_input(7, (6, 4, 2, 4, 6))
    assert init_model(arch, 3).params.tobytes() == init_model(arch, 3).params.tobytes()
    assert init_model(arch, 3).params.tobytes() != init_model(arch, 4).params.tobytes()


def test_glorot_bounds():
    model = init_model(AEArchitecture.for_input(20, (12, 5, 12)), seed=1)
    for w in model.weights:
        assert np.max(np.abs(w)) <= np.sqrt(6.0 / sum(w.shape))


def test_asymmetric_rejected():
    with pytest.raises(ArchitectureError):
        AEArchitecture((7, 6, 4, 7))
    with pytest.raises(ArchitectureError):
        AEArchitecture((4, 2, 4), Head("mixed", ((0, 2),), None))


def test_mixed_head_from_schema():
    head = Head.mixed(SYNTHETIC_SCHEMA)
    assert head.groups == ((0, 3), (3, 6)) and head.continuous == (6, 7)


# --- forward ------------------------------------------------------------------


def test_zero_weights_output_bias():
    arch = AEArchitecture.for_input(4, (3, 2, 3))
    model = AEModel(arch, np.zeros(arch.n_params))
    model.biases[-1][:] = [1.0, -2.0, 3.0, 0.5]
    out = forward(model, np.random.default_rng(0).random((5, 4)))
    np.testing.assert_array_equal(out, np.tile([1.0, -2.0, 3.0, 0.5], (5, 1)))


def test_mixed_blocks_are_simplices():
    model = init_model(AEArchitecture.for_input(7, (6, 4, 2, 4, 6), Head.mixed(SYNTHETIC_SCHEMA)), 2)
    out = forward(model, gen_synthetic_normal(20, 0).features)
    np.testing.assert_allclose(out[:, 0:3].sum(axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(out[:, 3:6].sum(axis=1), 1.0, atol=1e-9)
    assert np.all(out[:, :6] > 0)


@pytest.mark.parametrize("head", [Head.identity(), MIXED4])
def test_forward_matches_oracle(head):
    rng = np.random.default_rng(4)
    model = init_model(AEArchitecture((4, 3, 2, 3, 4), head), seed=5)
    model.params[:] += 0.1 * rng.standard_normal(model.params.size)
    x = _mixed_batch(rng, 6)
    np.testing.assert_allclose(forward(model, x), oracle_forward(model, x, head), atol=1e-12)
    np.testing.assert_allclose(reconstruction_errors(model, x),
                               oracle_sample_loss(x, oracle_forward(model, x, head), head), rtol=1e-10)


def test_width_mismatch():
    model = init_model(AEArchitecture.for_input(4, (2,)), 0)
    with pytest.raises(DimensionError):
        forward(model, np.zeros((3, 5)))


# --- gradients ------------------------------------------------------------------


def _grad_rel_error(head, prox_mu=0.0, seed=0):
    rng = np.random.default_rng(seed)
    model = init_model(AEArchitecture((4, 3, 2, 3, 4), head), seed=seed)
    model.biases[0][:] = 0.3  # keep ReLUs away from the kink
    model.biases[1][:] = 0.3
    x = _mixed_batch(rng, 5)
    ref = model.params + 0.05 * rng.standard_normal(model.params.size)
    _, analytic = loss_and_grad(model, x, prox_mu=prox_mu, prox_ref=ref)
    numeric = central_difference(lambda: loss_and_grad(model, x, prox_mu=prox_mu, prox_ref=ref)[0],
                                 model.params)
    return np.max(np.abs(analytic - numeric)) / np.max(np.abs(numeric))


@pytest.mark.parametrize("head", [Head.identity(), MIXED4], ids=["identity", "mixed"])
@pytest.mark.parametrize("prox_mu", [0.0, 0.1])
def test_gradient_matches_finite_differences(head, prox_mu):
    assert _grad_rel_error(head, prox_mu) <= 1e-4


# --- training ---------------------------------------------------------------------


def test_converges_on_repeated_vector():
    x = np.tile([0.2, 0.9, 0.4, 0.7], (50, 1))
    model = init_model(AEArchitecture((4, 3, 2, 3, 4)), seed=1)
    before = reconstruction_errors(model, x).mean()
    res = train(model, x, TrainConfig(epochs=200, shuffle_seed=2))
    after = reconstruction_errors(res.model, x).mean()
    assert after < 1e-3 * before
    assert len(res.history) == 200


def test_prox_zero_is_plain_training():
    x = gen_synthetic_normal(64, 0).features
    arch = AEArchitecture.for_input(7, (6, 4, 2, 4, 6), Head.mixed(SYNTHETIC_SCHEMA))
    model = init_model(arch, 3)
    a = train(model, x, TrainConfig(epochs=5, shuffle_seed=1))
    b = train(model, x, TrainConfig(epochs=5, shuffle_seed=1, prox_mu=0.0), prox_ref=model.params.copy())
    assert a.model.params.tobytes() == b.model.params.tobytes()


def test_training_is_deterministic_and_does_not_mutate_input():
    x = gen_synthetic_normal(64, 0).features
    model = init_model(AEArchitecture.for_input(7, (6, 4, 2, 4, 6)), 3)
    snapshot = model.params.copy()
    a = train(model, x, TrainConfig(epochs=3, shuffle_seed=9))
    b = train(model, x, TrainConfig(epochs=3, shuffle_seed=9))
    assert a.model.params.tobytes() == b.model.params.tobytes()
    np.testing.assert_array_equal(model.params, snapshot)


def test_split_training_equals_one_call():
    from dcaudit.autoencoder import Adam

    x = gen_synthetic_normal(50, 1).features
    model = init_model(AEArchitecture.for_input(7, (6, 4, 2, 4, 6)), 0)
    cfg = TrainConfig(epochs=6, shuffle_seed=5)
    whole = train(model, x, cfg).model
    opt = Adam(model.params.size, cfg)
    half_cfg = TrainConfig(epochs=3, shuffle_seed=5)
    part = train(model, x, half_cfg, optimizer=opt).model
    part = train(part, x, half_cfg, optimizer=opt, epoch_offset=3).model
    assert whole.params.tobytes() == part.params.tobytes()


def test_full_batch_small_lr_loss_non_increasing():
    x = gen_synthetic_normal(40, 2).features
    model = init_model(AEArchitecture.for_input(7, (6, 4, 2, 4, 6), Head.mixed(SYNTHETIC_SCHEMA)), 1)
    res = train(model, x, TrainConfig(epochs=60, batch_size=40, learning_rate=1e-4))
    assert all(b <= a + 1e-12 for a, b in zip(res.history, res.history[1:]))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_aborts():
    x = np.full((10, 4), 1e200)
    model = init_model(AEArchitecture((4, 2, 4)), 0)
    with pytest.raises(DivergenceError) as err:
        train(model, x, TrainConfig(epochs=2, batch_size=5))
    assert err.value.epoch == 0 and err.value.batch == 0


# --- scoring ------------------------------------------------------------------------


def test_outlier_scores_higher_after_training():
    data = gen_synthetic_normal(400, 0)
    arch = AEArchitecture.for_input(7, (6, 4, 2, 4, 6), Head.mixed(SYNTHETIC_SCHEMA))
    model = train(init_model(arch, 0), data.features, TrainConfig(epochs=60, shuffle_seed=0)).model
    far = data.features[:1].copy()
    far[0, 6] = 1.0 if data.records[0][2] < 0.5 else 0.0
    scores = reconstruction_errors(model, np.vstack([data.features[:1], far]))
    assert scores[1] > scores[0]


def test_identity_network_scores_zero():
    # [2, 2, 2] with identity weights reconstructs non-negative inputs exactly
    arch = AEArchitecture((2, 2, 2))
    model = AEModel(arch, np.zeros(arch.n_params))
    model.weights[0][:] = np.eye(2)
    model.weights[1][:] = np.eye(2)
    x = np.random.default_rng(0).random((10, 2))
    np.testing.assert_allclose(reconstruction_errors(model, x), 0.0, atol=1e-30)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_scores_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    model = init_model(AEArchitecture.for_input(7, (6, 4, 2, 4, 6), Head.mixed(SYNTHETIC_SCHEMA)), seed)
    x = gen_synthetic_normal(30, seed).features
    perm = rng.permutation(30)
    np.testing.assert_array_equal(reconstruction_errors(model, x)[perm], reconstruction_errors(model, x[perm]))


def test_save_load_roundtrip(tmp_path):
    model = init_model(AEArchitecture.for_input(7, (6, 4, 2, 4, 6), Head.mixed(SYNTHETIC_SCHEMA)), 11)
    save_model(model, tmp_path / "m.npz")
    back = load_model(tmp_path / "m.npz")
    assert back.arch == model.arch and back.seed == 11
    assert back.params.tobytes() == model.params.tobytes()
