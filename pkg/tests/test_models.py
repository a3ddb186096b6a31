import numpy as np
import pytest
from scipy import stats

from defosim.models import (
    Adam,
    Dense,
    GPNumericalError,
    MDNModel,
    MixturePosterior,
    RegressorModel,
    RKHSFrontend,
    TrainConfig,
    TrainingDivergedError,
    fit_mixture_em,
    gp_fit,
    gp_posterior,
    gp_predict,
    mdn_forward,
    mixture_nll,
    mixture_sample,
    regressor_posterior,
    regressor_train,
    train,
)
from defosim.models.gp import JITTER_START
from defosim.rkhs import sample_basis

LOG_2PI = np.log(2.0 * np.pi)


def _standard_posterior(dim=4):
    return MixturePosterior(
        weights=np.array([1.0]),
        means=np.zeros((1, dim)),
        scales=np.eye(dim)[None],
    )


class TestMixturePosterior:
    def test_weight_sum_enforced(self):
        with pytest.raises(ValueError):
            MixturePosterior(np.array([0.6, 0.6]), np.zeros((2, 2)),
                             np.tile(np.eye(2), (2, 1, 1)))

    def test_positive_diag_enforced(self):
        with pytest.raises(ValueError):
            MixturePosterior(np.array([1.0]), np.zeros((1, 2)),
                             -np.eye(2)[None])

    def test_nll_standard_normal_at_mode(self):
        assert np.isclose(mixture_nll(_standard_posterior(4), np.zeros(4)),
                          2.0 * LOG_2PI, atol=1e-12)

    def test_nll_matches_direct_formula_1d(self):
        # hand-specified two-component 1-D mixture
        w = np.array([0.3, 0.7])
        mu = np.array([[-1.0], [2.0]])
        sd = np.array([0.5, 1.5])
        post = MixturePosterior(w, mu, np.array([[[sd[0]]], [[sd[1]]]]))
        for theta in (-1.3, 0.0, 2.4):
            direct = np.sum(
                w / (sd * np.sqrt(2 * np.pi))
                * np.exp(-0.5 * (theta - mu[:, 0]) ** 2 / sd**2)
            )
            assert np.isclose(mixture_nll(post, np.array([theta])),
                              -np.log(direct), atol=1e-10)

    def test_nll_component_permutation_invariant(self, rng):
        w = np.array([0.2, 0.8])
        mu = rng.standard_normal((2, 3))
        scales = np.tile(np.eye(3), (2, 1, 1)) * np.array([0.7, 1.3])[:, None, None]
        a = MixturePosterior(w, mu, scales)
        b = MixturePosterior(w[::-1].copy(), mu[::-1].copy(), scales[::-1].copy())
        theta = rng.standard_normal(3)
        assert np.isclose(mixture_nll(a, theta), mixture_nll(b, theta))

    def test_sample_mean_clt(self, rng):
        post = _standard_posterior(2)
        draws = mixture_sample(post, 100_000, rng)
        assert np.all(np.abs(draws.mean(axis=0)) < 0.02)

    def test_sample_component_frequencies(self, rng):
        w = np.array([0.25, 0.75])
        post = MixturePosterior(
            w, np.array([[-100.0], [100.0]]), np.tile(np.eye(1), (2, 1, 1))
        )
        draws = mixture_sample(post, 100_000, rng)
        counts = np.array([(draws < 0).sum(), (draws > 0).sum()])
        assert stats.chisquare(counts, 100_000 * w).pvalue > 0.01

    def test_sample_reproducible(self):
        post = _standard_posterior(2)
        a = post.sample(10, np.random.default_rng(3))
        b = post.sample(10, np.random.default_rng(3))
        assert np.array_equal(a, b)

    def test_marginal_std_between_component_spread(self):
        post = MixturePosterior(
            np.array([0.5, 0.5]), np.array([[-1.0], [1.0]]),
            np.full((2, 1, 1), 0.1),
        )
        # var = within (0.01) + between (1.0)
        assert np.isclose(post.marginal_std()[0], np.sqrt(1.01))

    def test_dict_roundtrip(self, rng):
        L = np.tril(rng.random((2, 2))) + np.eye(2)
        post = MixturePosterior(np.array([0.4, 0.6]),
                                rng.standard_normal((2, 2)),
                                np.stack([L, 2 * L]))
        back = MixturePosterior.from_dict(post.to_dict())
        theta = rng.standard_normal(2)
        assert np.isclose(mixture_nll(back, theta), mixture_nll(post, theta))


class TestMDNForward:
    def test_zero_head_uniform_weights(self):
        model = MDNModel(input_dim=3, theta_dim=2, n_components=4, hidden=(8,))
        model.head.w[...] = 0.0
        model.head.b[...] = 0.0
        post = mdn_forward(np.ones(3), model)
        assert np.allclose(post.weights, 0.25)

    def test_simplex_and_pd_fuzz(self, rng):
        model = MDNModel(input_dim=5, theta_dim=3, n_components=3, hidden=(16,))
        for _ in range(20):
            post = model.posterior(rng.standard_normal(5))
            assert np.isclose(post.weights.sum(), 1.0, atol=1e-9)
            for cov in post.covariances():
                assert np.all(np.linalg.eigvalsh(cov) > 0)

    def test_dimension_mismatch(self):
        model = MDNModel(input_dim=5, theta_dim=2, hidden=(8,))
        with pytest.raises(ValueError):
            model.posterior(np.ones(4))

    def test_mean_nll_consistent_with_exported_posterior(self, rng):
        # de-normalization shifts NLL by the log-volume of the box
        low, high = np.array([0.0, -2.0]), np.array([4.0, 2.0])
        model = MDNModel(input_dim=3, theta_dim=2, n_components=2, hidden=(8,),
                         box_low=low, box_high=high, seed=2)
        x = rng.standard_normal(3)
        theta = rng.uniform(low, high)
        internal = model.mean_nll(x[None], theta[None])
        exported = mixture_nll(model.posterior(x), theta)
        assert np.isclose(exported, internal + np.sum(np.log(high - low)),
                          atol=1e-9)


class TestGradients:
    def _fd_check(self, model, x, theta, rng, max_coords=60, tol=1e-4):
        loss, grads = model.loss_and_grads(x, theta)
        grads = [g.copy() for g in grads]
        params = model.parameters()
        h = 1e-6
        worst = 0.0
        for p, g in zip(params, grads):
            flat, gflat = p.ravel(), g.ravel()
            coords = np.arange(flat.size)
            if flat.size > max_coords:
                coords = rng.choice(flat.size, size=max_coords, replace=False)
            for c in coords:
                old = flat[c]
                flat[c] = old + h
                fp = model.loss_and_grads(x, theta)[0]
                flat[c] = old - h
                fm = model.loss_and_grads(x, theta)[0]
                flat[c] = old
                fd = (fp - fm) / (2 * h)
                err = abs(fd - gflat[c]) / max(1e-6, abs(fd) + abs(gflat[c]))
                worst = max(worst, err)
        assert worst <= tol, worst

    def test_mdn_gradients_match_fd(self, rng):
        model = MDNModel(input_dim=3, theta_dim=2, n_components=2, hidden=(8,),
                         box_low=[0.0, 0.0], box_high=[1.0, 2.0], seed=0)
        x = rng.standard_normal((10, 3))
        theta = rng.uniform([0, 0], [1, 2], size=(10, 2))
        self._fd_check(model, x, theta, rng)

    def test_mdn_with_rkhs_frontend_gradients_match_fd(self, rng):
        basis = sample_basis(4, 2, 0.8, seed=1, trainable=True)
        frontend = RKHSFrontend(basis, n_frames=2, n_keypoints=2)
        model = MDNModel(input_dim=frontend.in_dim, theta_dim=2,
                         n_components=2, hidden=(8,), frontend=frontend,
                         box_low=[0.0, 0.0], box_high=[1.0, 1.0], seed=0)
        x = rng.standard_normal((6, frontend.in_dim))
        theta = rng.random((6, 2))
        self._fd_check(model, x, theta, rng)
        # the frontend's own parameters must be in the trained set
        names = [n for n, _ in model.named_parameters()]
        assert any("omega" in n for n in names)
        assert any("sigma" in n for n in names)

    def test_regressor_gradients_match_fd(self, rng):
        model = RegressorModel(input_dim=3, theta_dim=2, hidden=(8,),
                               box_low=[0.0, 0.0], box_high=[1.0, 1.0], seed=0)
        x = rng.standard_normal((10, 3))
        theta = rng.random((10, 2))
        self._fd_check(model, x, theta, rng)


class TestTrain:
    def _linear_task(self, rng, n=120):
        x = rng.uniform(0, 1, size=(n, 1))
        theta = np.concatenate([x, 1.0 - x], axis=1)  # in the unit box
        return x, theta

    def test_validation_split_required(self, rng):
        model = MDNModel(input_dim=1, theta_dim=2, hidden=(8,))
        with pytest.raises(ValueError):
            train(model, np.ones((1, 1)), np.ones((1, 2)),
                  TrainConfig(validation_fraction=0.5, epochs=1))

    def test_paper_learning_rate_strictly_improves(self, rng):
        x, theta = self._linear_task(rng)
        model = MDNModel(input_dim=1, theta_dim=2, n_components=1, hidden=(16,),
                         standardize=False, seed=0)
        config = TrainConfig(learning_rate=1e-6, epochs=200, batch_size=64,
                             seed=0)
        # same split the trainer will use
        perm = np.random.default_rng(0).permutation(len(x))
        val = perm[: max(1, int(round(len(x) * 0.2)))]
        before = model.mean_nll(x[val], theta[val])
        result = train(model, x, theta, config)
        assert result.val_nll[-1] < before

    def test_linear_task_r_squared(self, rng):
        x, theta = self._linear_task(rng, n=300)
        model = MDNModel(input_dim=1, theta_dim=2, n_components=1,
                         hidden=(32,), seed=1)
        result = train(model, x, theta,
                       TrainConfig(learning_rate=1e-3, epochs=300,
                                   batch_size=64, seed=1))
        xv, tv = x[result.val_idx], theta[result.val_idx]
        pred = np.array([model.posterior(xi).means[0] for xi in xv])
        ss_res = np.sum((pred - tv) ** 2)
        ss_tot = np.sum((tv - tv.mean(axis=0)) ** 2)
        assert 1.0 - ss_res / ss_tot > 0.99
        assert result.val_nll[-1] < result.val_nll[0]
        assert result.val_nll[-1] < 0.0  # far below the untrained scale

    def test_deterministic_under_seed(self, rng):
        x, theta = self._linear_task(rng)
        posts = []
        for _ in range(2):
            model = MDNModel(input_dim=1, theta_dim=2, n_components=1,
                             hidden=(8,), seed=3)
            train(model, x, theta,
                  TrainConfig(learning_rate=1e-3, epochs=5, seed=3))
            posts.append(model.posterior(np.array([0.5])))
        assert np.array_equal(posts[0].means, posts[1].means)
        assert np.array_equal(posts[0].scales, posts[1].scales)

    def test_nonfinite_loss_raises(self, rng):
        x, theta = self._linear_task(rng)
        model = MDNModel(input_dim=1, theta_dim=2, hidden=(8,), seed=0)
        model.head.w[0, 0] = np.nan
        with pytest.raises(TrainingDivergedError) as exc:
            train(model, x, theta, TrainConfig(learning_rate=1e-3, epochs=2))
        assert exc.value.epoch == 0

    def test_checkpoint_roundtrip(self, tmp_path, rng):
        x, theta = self._linear_task(rng)
        model = MDNModel(input_dim=1, theta_dim=2, n_components=2, hidden=(8,),
                         seed=0)
        train(model, x, theta, TrainConfig(learning_rate=1e-3, epochs=3))
        d = model.checkpoint()
        clone = MDNModel(input_dim=1, theta_dim=2, n_components=2, hidden=(8,),
                         seed=99)
        clone.load_weights(d)
        q = np.array([0.3])
        assert np.allclose(clone.forward(q[None]), model.forward(q[None]))


class TestRegressor:
    def test_posterior_mean_is_prediction(self, rng):
        model = RegressorModel(input_dim=2, theta_dim=2, hidden=(8,),
                               box_low=[0, 0], box_high=[2, 2], seed=0)
        model.val_l1 = np.array([0.1, 0.2])
        f = rng.standard_normal(2)
        post = regressor_posterior(model, f)
        assert np.array_equal(post.means[0], model.predict(f)[0])
        assert np.allclose(np.diagonal(post.covariances()[0]), [0.01, 0.04])

    def test_untrained_posterior_rejected(self):
        model = RegressorModel(input_dim=2, theta_dim=2, hidden=(8,))
        with pytest.raises(RuntimeError):
            regressor_posterior(model, np.zeros(2))

    def test_learnable_task_tight_std(self, rng):
        x = rng.uniform(0, 1, size=(300, 1))
        theta = np.concatenate([x, 1.0 - x], axis=1)
        model = RegressorModel(input_dim=1, theta_dim=2, hidden=(32, 32), seed=0)
        regressor_train(model, x, theta,
                        TrainConfig(learning_rate=3e-3, epochs=200,
                                    batch_size=64, seed=0))
        assert np.all(model.val_l1 < 0.05)  # < 5% of the unit prior width

    def test_pure_noise_task_std_matches_uniform_mad(self, rng):
        # uninformative features: validation L1 ~ E|u - 1/2| = 1/4
        x = rng.standard_normal((400, 2))
        theta = rng.uniform(0, 1, size=(400, 2))
        model = RegressorModel(input_dim=2, theta_dim=2, hidden=(16,), seed=0)
        regressor_train(model, x, theta,
                        TrainConfig(learning_rate=1e-3, epochs=60,
                                    batch_size=64, seed=0))
        assert np.all(np.abs(model.val_l1 - 0.25) < 0.05)


class TestGP:
    def test_single_point_interpolation(self):
        model = gp_fit(np.array([[0.5]]), np.array([2.0]),
                       hyper_grid=[(1.0, 1.0, 1e-6)])
        mean, var = gp_predict(model, np.array([[0.5]]))
        assert abs(mean[0] - 2.0) <= 1e-3
        assert var[0] <= 1e-3

    def test_two_point_closed_form(self):
        ell, s2, noise = 1.0, 1.0, 0.1
        x = np.array([[0.0], [1.0]])
        y = np.array([1.0, 2.0])
        model = gp_fit(x, y, hyper_grid=[(ell, s2, noise)])
        xq = np.array([[0.4]])
        mean, _ = gp_predict(model, xq)
        # hand 2x2 solve, including the implementation's fixed jitter
        k = lambda a, b: s2 * np.exp(-((a - b) ** 2) / (2 * ell**2))
        K = np.array([[k(0, 0), k(0, 1)], [k(1, 0), k(1, 1)]])
        K += (noise + JITTER_START) * np.eye(2)
        kstar = np.array([k(0.4, 0.0), k(0.4, 1.0)])
        expect = kstar @ np.linalg.solve(K, y)
        assert abs(mean[0] - expect) <= 1e-8

    def test_far_field_variance_reverts_to_signal(self):
        model = gp_fit(np.array([[0.0], [1.0]]), np.array([0.5, 1.5]),
                       hyper_grid=[(0.3, 2.0, 1e-4)])
        _, var = gp_predict(model, np.array([[100.0]]))
        assert abs(var[0] - 2.0) / 2.0 < 0.01

    def test_hyperparameters_by_marginal_likelihood(self, rng):
        x = rng.uniform(-2, 2, size=(40, 1))
        y = np.sin(2 * x[:, 0]) + 0.05 * rng.standard_normal(40)
        grid = [(0.5, 1.0, 0.01), (50.0, 1.0, 0.01)]
        model = gp_fit(x, y, hyper_grid=grid)
        assert model.lengthscale == 0.5  # the short scale explains a sine

    def test_contraction_on_linear_task(self, rng):
        x = rng.uniform(0, 1, size=(60, 1))
        y = 2.0 * x[:, 0] + 0.01 * rng.standard_normal(60)
        model = gp_fit(x, y)
        _, var = gp_predict(model, np.array([[0.5]]))
        assert var[0] <= np.var(y)

    def test_variance_nonnegative_fuzz(self, rng):
        x = rng.standard_normal((30, 2))
        y = rng.standard_normal(30)
        model = gp_fit(x, y)
        _, var = gp_predict(model, rng.standard_normal((50, 2)))
        assert np.all(var >= 0.0)

    def test_factorization_failure_raises(self):
        with pytest.raises(GPNumericalError):
            gp_fit(np.array([[0.0], [1.0]]), np.array([0.0, 1.0]),
                   hyper_grid=[(1.0, 1.0, -10.0)])

    def test_joint_posterior_product(self, rng):
        x = rng.uniform(0, 1, size=(30, 2))
        thetas = rng.uniform(0, 1, size=(30, 2))
        models = [gp_fit(x, thetas[:, d]) for d in range(2)]
        post = gp_posterior(models, x[0])
        assert post.n_components == 1
        cov = post.covariances()[0]
        assert cov[0, 1] == 0.0  # independent per-dimension GPs


class TestEMFit:
    def test_recovers_separated_clusters(self, rng):
        a = rng.standard_normal((300, 2)) * 0.1 + np.array([2.0, 0.0])
        b = rng.standard_normal((300, 2)) * 0.1 + np.array([-2.0, 0.0])
        post = fit_mixture_em(np.concatenate([a, b]), n_components=2, seed=0)
        centers = sorted(post.means[:, 0])
        assert abs(centers[0] + 2.0) < 0.1
        assert abs(centers[1] - 2.0) < 0.1
        assert np.all(np.abs(post.weights - 0.5) < 0.05)

    def test_components_capped_by_samples(self, rng):
        post = fit_mixture_em(rng.standard_normal((3, 2)), n_components=8, seed=0)
        assert post.n_components <= 3


class TestAdam:
    def test_descends_quadratic(self):
        p = np.array([5.0])
        opt = Adam([p], lr=0.1)
        for _ in range(300):
            opt.step([2.0 * p])
        assert abs(p[0]) < 0.05
