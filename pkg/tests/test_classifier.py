import math

import numpy as np
import pytest
import torch

from nib.classifier import (ArchSpec, apply_update, as_input_tensor,
                            grad_overall, init_classifier, load_checkpoint,
                            load_parameters, make_optimizer, predict_proba,
                            sample_losses_torch, save_checkpoint)
from nib.losses import cross_entropy, ic_loss

MLP_SPEC = ArchSpec(kind="mlp", hidden=(8,))
CNN_SPEC = ArchSpec(kind="smallcnn", conv_widths=(2, 2, 3, 3, 4, 4), fc_width=8)


def micro_batch(clf, n, seed, with_absent=False):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, *clf.input_shape))
    y = rng.integers(0, clf.num_classes, size=n)
    soft = [rng.dirichlet(np.ones(clf.num_classes)) for _ in range(n)]
    if with_absent:
        soft[0] = None
    return x, y, soft


def loss_value(clf, x, y, soft, weight):
    """Batch-mean loss evaluated without autograd (for finite differencing)."""
    with torch.no_grad():
        probs = clf.net(as_input_tensor(clf, x))
    dense = np.zeros((len(y), clf.num_classes))
    absent = np.zeros(len(y), dtype=bool)
    for i, row in enumerate(soft):
        if row is None:
            absent[i] = True
        else:
            dense[i] = row
    parts = sample_losses_torch(probs, torch.as_tensor(np.asarray(y)),
                                torch.as_tensor(dense, dtype=clf.dtype),
                                torch.as_tensor(absent), weight)
    return float(parts.overall.mean())


def numerical_gradient(clf, x, y, soft, weight, step=1e-5):
    """Central finite differences over every parameter coordinate."""
    grads = []
    for p in clf.net.parameters():
        flat = p.detach().view(-1)
        g = np.empty(flat.shape[0])
        for i in range(flat.shape[0]):
            orig = float(flat[i])
            with torch.no_grad():
                flat[i] = orig + step
            up = loss_value(clf, x, y, soft, weight)
            with torch.no_grad():
                flat[i] = orig - step
            down = loss_value(clf, x, y, soft, weight)
            with torch.no_grad():
                flat[i] = orig
            g[i] = (up - down) / (2 * step)
        grads.append(g.reshape(tuple(p.shape)))
    return grads


def max_relative_error(analytic, numerical):
    worst = 0.0
    for a, f in zip(analytic, numerical):
        diff = np.abs(a - f)
        scale = np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-7 / 1e-4)
        worst = max(worst, float((diff / scale).max()))
    return worst


class TestInit:
    def test_deterministic(self):
        a = init_classifier(MLP_SPEC, 3, (2,), seed=5)
        b = init_classifier(MLP_SPEC, 3, (2,), seed=5)
        c = init_classifier(MLP_SPEC, 3, (2,), seed=6)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert torch.equal(pa, pb)
        assert any(not torch.equal(pa, pc)
                   for pa, pc in zip(a.parameters(), c.parameters()))

    def test_mlp_output_shape(self):
        clf = init_classifier(ArchSpec(kind="mlp", hidden=(16,)), 3, (2,), seed=0)
        probs = predict_proba(clf, np.random.default_rng(0).standard_normal((5, 2)))
        assert probs.shape == (5, 3)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    def test_cnn_output_shape(self):
        clf = init_classifier(CNN_SPEC, 4, (8, 8, 3), seed=0)
        probs = predict_proba(clf, np.random.default_rng(0).standard_normal((3, 8, 8, 3)))
        assert probs.shape == (3, 4)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    def test_zero_width_layer_rejected(self):
        with pytest.raises(ValueError):
            init_classifier(ArchSpec(kind="mlp", hidden=(8, 0)), 3, (2,), seed=0)
        with pytest.raises(ValueError):
            init_classifier(ArchSpec(kind="smallcnn",
                                     conv_widths=(2, 2, 0, 3, 4, 4)), 3,
                            (8, 8, 3), seed=0)

    def test_incompatible_input_shape(self):
        with pytest.raises(ValueError):
            init_classifier(MLP_SPEC, 3, (8, 8, 3), seed=0)
        with pytest.raises(ValueError):
            init_classifier(CNN_SPEC, 3, (10,), seed=0)


class TestPredictProba:
    def test_rows_are_probability_vectors(self):
        clf = init_classifier(MLP_SPEC, 5, (4,), seed=1)
        x = np.random.default_rng(1).standard_normal((200, 4)) * 10
        probs = predict_proba(clf, x)
        assert np.all(probs >= 0)
        assert np.all(np.isfinite(probs))
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    def test_fresh_net_near_uniform_on_average(self):
        clf = init_classifier(ArchSpec(kind="mlp", hidden=(32, 32)), 4, (6,), seed=3)
        x = np.random.default_rng(3).standard_normal((1000, 6))
        mean = predict_proba(clf, x).mean(axis=0)
        assert np.all(np.abs(mean - 0.25) < 0.1)

    def test_duplicate_rows_identical_outputs(self):
        clf = init_classifier(MLP_SPEC, 3, (2,), seed=2)
        x = np.random.default_rng(2).standard_normal((1, 2)).repeat(4, axis=0)
        probs = predict_proba(clf, x)
        assert np.array_equal(probs[0], probs[1])
        assert np.array_equal(probs[0], probs[3])

    def test_shape_mismatch(self):
        clf = init_classifier(MLP_SPEC, 3, (2,), seed=2)
        with pytest.raises(ValueError):
            predict_proba(clf, np.zeros((4, 5)))


class TestGradOverall:
    @pytest.mark.parametrize("weight", [0.0, 0.6, 1.0])
    def test_mlp_matches_finite_differences(self, weight):
        clf = init_classifier(MLP_SPEC, 3, (2,), seed=11, dtype=torch.float64)
        x, y, soft = micro_batch(clf, 4, seed=11, with_absent=(weight != 0.0))
        grads, _, _ = grad_overall(clf, x, y, soft, weight)
        numeric = numerical_gradient(clf, x, y, soft, weight)
        assert max_relative_error(grads, numeric) < 1e-4

    @pytest.mark.parametrize("weight", [0.0, 0.6, 1.0])
    def test_cnn_matches_finite_differences(self, weight):
        # seed 11 keeps every ReLU preactivation > 3e-3 from its kink, far
        # outside the central-difference step
        clf = init_classifier(CNN_SPEC, 3, (8, 8, 3), seed=11, dtype=torch.float64)
        x, y, soft = micro_batch(clf, 2, seed=11)
        grads, _, _ = grad_overall(clf, x, y, soft, weight)
        numeric = numerical_gradient(clf, x, y, soft, weight)
        assert max_relative_error(grads, numeric) < 1e-4

    def test_weight_one_equals_pure_cross_entropy(self):
        clf = init_classifier(MLP_SPEC, 3, (2,), seed=13, dtype=torch.float64)
        x, y, soft = micro_batch(clf, 6, seed=13)
        with_soft, _, _ = grad_overall(clf, x, y, soft, 1.0)
        without, _, _ = grad_overall(clf, x, y, [None] * 6, 1.0)
        for a, b in zip(with_soft, without):
            assert np.allclose(a, b, atol=1e-12)

    def test_loss_parts_match_scalar_reference(self):
        clf = init_classifier(MLP_SPEC, 4, (3,), seed=14, dtype=torch.float64)
        x, y, soft = micro_batch(clf, 8, seed=14, with_absent=True)
        _, cls, ic = grad_overall(clf, x, y, soft, 0.6)
        probs = predict_proba(clf, x)
        for i in range(8):
            assert cls[i] == pytest.approx(cross_entropy(probs[i], y[i]), abs=1e-9)
            expected_ic = 0.0 if soft[i] is None else ic_loss(soft[i], probs[i])
            assert ic[i] == pytest.approx(expected_ic, abs=1e-9)

    def test_joint_optimum_zero_gradient(self):
        clf = init_classifier(ArchSpec(kind="mlp", hidden=(4,)), 3, (2,),
                              seed=15, dtype=torch.float64)
        # force the output layer to emit a saturated one-hot for class 0
        with torch.no_grad():
            final = [m for m in clf.net.modules()
                     if isinstance(m, torch.nn.Linear)][-1]
            final.weight.zero_()
            final.bias.copy_(torch.tensor([200.0, 0.0, 0.0], dtype=torch.float64))
        x = np.random.default_rng(15).standard_normal((5, 2))
        y = np.zeros(5, dtype=np.int64)
        soft = [np.array([1.0, 0.0, 0.0])] * 5
        grads, _, _ = grad_overall(clf, x, y, soft, 0.6)
        total = math.sqrt(sum(float((g ** 2).sum()) for g in grads))
        assert total < 1e-8

    def test_invalid_weight(self):
        clf = init_classifier(MLP_SPEC, 3, (2,), seed=16)
        x, y, soft = micro_batch(clf, 2, seed=16)
        with pytest.raises(ValueError):
            grad_overall(clf, x, y, soft, 1.5)


class TestAdamUpdates:
    def test_zero_gradient_from_fresh_state(self):
        clf = init_classifier(MLP_SPEC, 3, (2,), seed=20)
        state = make_optimizer(clf)
        before = [p.detach().clone() for p in clf.parameters()]
        zeros = [np.zeros(tuple(p.shape)) for p in clf.parameters()]
        apply_update(clf, state, zeros)
        assert state.step_count == 1
        for p, b in zip(clf.parameters(), before):
            assert torch.equal(p, b)

    def test_moments_decay_on_zero_gradient(self):
        clf = init_classifier(MLP_SPEC, 3, (2,), seed=21)
        state = make_optimizer(clf)
        ones = [np.ones(tuple(p.shape)) for p in clf.parameters()]
        zeros = [np.zeros(tuple(p.shape)) for p in clf.parameters()]
        apply_update(clf, state, ones)
        first_before, _ = state.moments(clf)
        apply_update(clf, state, zeros)
        first_after, _ = state.moments(clf)
        assert np.allclose(first_after[0], 0.9 * first_before[0], atol=1e-7)
        assert state.step_count == 2

    def test_constant_gradient_limit_step(self):
        # with a constant gradient the bias-corrected update tends to
        # lr * sign(g) per step
        clf = init_classifier(ArchSpec(kind="mlp", hidden=(1,)), 2, (1,), seed=22,
                              dtype=torch.float64)
        state = make_optimizer(clf, learning_rate=0.001)
        grads = [np.full(tuple(p.shape), -2.5) for p in clf.parameters()]
        for _ in range(300):
            prev = clf.parameters()[0].detach().clone()
            apply_update(clf, state, grads)
        step = (clf.parameters()[0].detach() - prev).numpy()
        assert np.allclose(step, 0.001, atol=1e-6)

    def test_deterministic_trajectory(self):
        rng = np.random.default_rng(23)
        runs = []
        for _ in range(2):
            clf = init_classifier(MLP_SPEC, 3, (2,), seed=23)
            state = make_optimizer(clf)
            seq = np.random.default_rng(77)
            for _ in range(20):
                grads = [seq.standard_normal(tuple(p.shape)) * 0.1
                         for p in clf.parameters()]
                apply_update(clf, state, grads)
            runs.append([p.detach().clone() for p in clf.parameters()])
        for a, b in zip(*runs):
            assert torch.equal(a, b)

    def test_gradient_shape_mismatch(self):
        clf = init_classifier(MLP_SPEC, 3, (2,), seed=24)
        state = make_optimizer(clf)
        bad = [np.zeros((1, 1)) for _ in clf.parameters()]
        with pytest.raises(ValueError):
            apply_update(clf, state, bad)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        clf = init_classifier(CNN_SPEC, 3, (8, 8, 3), seed=30)
        path = tmp_path / "params.bin"
        save_checkpoint(clf, path)
        arrays = load_checkpoint(path)
        fresh = init_classifier(CNN_SPEC, 3, (8, 8, 3), seed=31)
        load_parameters(fresh, arrays)
        x = np.random.default_rng(30).standard_normal((4, 8, 8, 3))
        assert np.allclose(predict_proba(clf, x), predict_proba(fresh, x),
                           atol=1e-6)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"nope" + b"\x00" * 64)
        with pytest.raises(ValueError):
            load_checkpoint(path)


class TestOptimizationSanity:
    def test_mlp_fits_separable_blobs(self):
        from nib.datasets import generate_blobs, make_batch_plan, standardize
        train, test = generate_blobs(3, 100, 2, center_spread=50.0,
                                     cluster_std=1.0, seed=40)
        train, test, _, _ = standardize(train, test)
        clf = init_classifier(ArchSpec(kind="mlp", hidden=(16,)), 3, (2,), seed=40)
        state = make_optimizer(clf)
        for epoch in range(1, 51):
            plan = make_batch_plan(train.n, 64, seed=40, epoch=epoch)
            for idx in plan.batches():
                grads, _, _ = grad_overall(clf, train.features[idx],
                                           train.observed_labels[idx],
                                           [None] * idx.size, 1.0)
                apply_update(clf, state, grads)
            pred = predict_proba(clf, train.features).argmax(axis=1)
            if (pred == train.true_labels).mean() >= 0.99:
                break
        assert (pred == train.true_labels).mean() >= 0.99
