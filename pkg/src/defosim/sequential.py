"""Sequential likelihood-free inference loop and its six method variants.

Each round: sample parameters from the current proposal, simulate, train a
conditional density on everything collected so far, evaluate it at the real
observation, and correct for the proposal prior by importance resampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import features as feats
from . import observe, rkhs
from .models import (
    MDNModel,
    MixturePosterior,
    RegressorModel,
    RKHSFrontend,
    TrainConfig,
    fit_mixture_em,
    gp_fit,
    gp_posterior,
    regressor_posterior,
    regressor_train,
    train,
)
from .params import PriorBox, SimParams, default_prior
from .sim import SimConfig, build_scene, rollout

METHODS = (
    "bayessim-mdnn",
    "bayessim-mdrff",
    "bayessim-rkhs",
    "bayeszoom-rkhs",
    "nn-bulk",
    "gp-bulk",
)
SEQUENTIAL_METHODS = METHODS[:4]
BULK_METHODS = METHODS[4:]


class DegeneratePosteriorError(RuntimeError):
    """The learned posterior has no mass inside the prior box."""


class RoundError(RuntimeError):
    def __init__(self, round_index: int, cause: Exception):
        super().__init__(f"round {round_index} failed: {cause}")
        self.round_index = round_index
        self.cause = cause


# ---------------------------------------------------------------------------
# proposals


class BoxedProposal:
    """A sampleable density restricted to the prior box by rejection.

    The density reported is the untruncated one; the truncation constant
    cancels in self-normalized importance weights.
    """

    MAX_TRIES = 1000

    def __init__(self, dist, box: PriorBox):
        self.dist = dist
        self.box = box

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        out = np.empty((n, self.box.dim))
        filled = 0
        for _ in range(self.MAX_TRIES):
            want = n - filled
            cand = self.dist.sample(max(want * 2, 16), rng)
            good = cand[self.box.contains(cand)]
            take = min(want, good.shape[0])
            out[filled:filled + take] = good[:take]
            filled += take
            if filled == n:
                return out
        raise DegeneratePosteriorError("proposal rejection sampling exhausted")

    def logpdf(self, theta) -> np.ndarray:
        return self.dist.logpdf(theta)


class DefensiveProposal:
    """Mixture of a fitted posterior and the prior: eps*prior + (1-eps)*dist.

    Mixing a prior fraction into each round's proposal bounds the
    importance weights prior/proposal by 1/eps on the box, which prevents
    weight degeneracy (one tail sample absorbing all resampling mass and
    collapsing the refit to a point) once the proposal has narrowed.
    The correction stays exact because the reported density is the
    density actually sampled from.
    """

    def __init__(self, dist, prior: PriorBox, eps: float = 0.1):
        if not 0.0 < eps < 1.0:
            raise ValueError("eps must be in (0, 1)")
        self.dist = dist
        self.prior = prior
        self.eps = eps

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        from_prior = rng.random(n) < self.eps
        out = np.empty((n, self.prior.dim))
        k = int(from_prior.sum())
        if k:
            out[from_prior] = self.prior.sample(k, rng)
        if n - k:
            out[~from_prior] = self.dist.sample(n - k, rng)
        return out

    def logpdf(self, theta) -> np.ndarray:
        # prior term is -inf outside the box; logaddexp handles it
        return np.logaddexp(
            np.log(self.eps) + self.prior.logpdf(theta),
            np.log1p(-self.eps) + np.asarray(self.dist.logpdf(theta)),
        )


class ProposalHistory:
    """The effective proposal of a pooled training set.

    When the model trains on data accumulated across rounds, each round's
    parameters came from that round's own proposal, so the density the
    pooled thetas were actually drawn from is the count-weighted mixture
    of every round's sampling proposal. Using it as the correction
    divisor keeps prior(theta)/proposal(theta) consistent with what the
    model saw; dividing by only the latest (narrowest) proposal would
    strip density from exactly the region the posterior concentrates in.
    """

    def __init__(self, proposals, counts):
        if len(proposals) != len(counts) or not proposals:
            raise ValueError("need one count per proposal")
        self.proposals = list(proposals)
        self.counts = np.asarray(counts, dtype=np.float64)

    def logpdf(self, theta) -> np.ndarray:
        total = self.counts.sum()
        logs = [
            np.log(c / total) + np.asarray(p.logpdf(theta))
            for p, c in zip(self.proposals, self.counts)
        ]
        return np.logaddexp.reduce(logs, axis=0)


def as_proposal(dist, box: PriorBox):
    """Wrap a posterior/prior as a box-restricted proposal."""
    if isinstance(dist, PriorBox):
        return dist  # already box-supported
    return BoxedProposal(dist, box)


def systematic_resample(weights: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Systematic resampling: n indices with expected counts n*w."""
    positions = (rng.random() + np.arange(n)) / n
    return np.searchsorted(np.cumsum(weights), positions).clip(max=weights.size - 1)


def correct_posterior(
    q,
    prior: PriorBox,
    proposal,
    n: int = 10_000,
    n_components: int = 4,
    seed: int = 0,
):
    """Proposal-prior correction by importance resampling plus a mixture refit.

    Draw n samples from q, weight by prior(theta)/proposal(theta) (zero
    outside the box), resample systematically, and refit a mixture to the
    resampled set for use as the next proposal.
    Returns (resampled_samples, normalized_weights, refit_mixture).
    """
    if n < 1000:
        raise ValueError("correction needs n >= 1000 samples")
    rng = np.random.default_rng(seed)
    samples = q.sample(n, rng)
    with np.errstate(invalid="ignore"):  # -inf minus -inf outside the box
        logw = prior.logpdf(samples) - np.asarray(proposal.logpdf(samples))
    inside = np.isfinite(logw)
    if not np.any(inside):
        raise DegeneratePosteriorError("all correction weights are zero")
    logw = np.where(inside, logw, -np.inf)
    logw -= logw[inside].max()
    w = np.exp(logw)
    w /= w.sum()
    idx = systematic_resample(w, n, rng)
    resampled = samples[idx]
    refit = fit_mixture_em(resampled, n_components, seed=seed)
    return resampled, w, refit


# ---------------------------------------------------------------------------
# experiment setup and feature pipelines


@dataclass
class InferenceSetup:
    """Everything a method needs to turn a parameter draw into features."""

    scenario: str = "wipe"
    prior: PriorBox = field(default_factory=default_prior)
    T: int = 200
    sim: SimConfig = field(default_factory=SimConfig)
    cloth_n: int = 8
    rope_n: int = 16
    noise_profile: str = "unsupervised"
    keypoint_mode: str = "semantic"
    n_keypoints: int = 8
    n_frames: int = 10  # RKHS-net temporal subsampling
    rkhs_m: int = 128
    mdrff_m: int = 128
    hidden: tuple = (1024, 1024, 1024)
    n_components: int = 4
    train: TrainConfig = field(default_factory=TrainConfig)
    correction_samples: int = 10_000

    def scene_info(self):
        mesh, _ = build_scene(
            self.scenario, SimParams.from_array(self.prior.center),
            T=2, cloth_n=self.cloth_n, rope_n=self.rope_n,
        )
        diam = np.linalg.norm(
            mesh.positions.max(axis=0) - mesh.positions.min(axis=0)
        )
        return mesh.keypoint_anchors.get(self.n_keypoints), diam

    def observe_rollout(self, theta: np.ndarray, seed: int, noise_profile=None):
        """Simulate theta and observe it; returns (states, actions, diverged)."""
        anchors, diam = self.scene_info()
        noise = observe.resolve_noise(
            noise_profile or self.noise_profile, diam, seed=seed + 1
        )
        traj = rollout(
            self.scenario, SimParams.from_array(theta), T=self.T,
            config=replace(self.sim, seed=seed),
            cloth_n=self.cloth_n, rope_n=self.rope_n,
        )
        states, actions = observe.observe_trajectory(
            traj, self.keypoint_mode, self.n_keypoints, noise,
            semantic_indices=anchors,
        )
        return states, actions, traj.diverged

    @property
    def state_dim(self) -> int:
        return 2 + 2 * self.n_keypoints


class SummaryStatsPipeline:
    name = "summary"

    def __init__(self, setup: InferenceSetup):
        self.setup = setup
        ds, da = setup.state_dim, 2
        self.feature_dim = ds * da + 2 * ds

    def featurize(self, states, actions) -> np.ndarray:
        return feats.summary_stats(states, actions)

    def prepare(self, dataset_states):
        pass


class RawRFFPipeline:
    """Fixed RFF map over the flattened trajectory (frozen basis)."""

    name = "mdrff"

    def __init__(self, setup: InferenceSetup, seed: int = 0):
        self.setup = setup
        self.seed = seed
        self.basis = None
        self.feature_dim = 2 * setup.mdrff_m

    def prepare(self, dataset_states):
        if self.basis is not None:
            return
        flats = np.array([
            np.concatenate([s.ravel(), a.ravel()]) for s, a in dataset_states
        ])
        sigma = rkhs.median_heuristic(flats[: min(len(flats), 50)])
        self.basis = rkhs.sample_basis(
            self.setup.mdrff_m, flats.shape[1], sigma, seed=self.seed
        )

    def featurize(self, states, actions) -> np.ndarray:
        return feats.mdrff_features(states, actions, self.basis)


class RKHSNetPipeline:
    """Raw frame blocks; the trainable embedding lives inside the model."""

    name = "rkhs"

    def __init__(self, setup: InferenceSetup):
        self.setup = setup
        self.feature_dim = setup.n_frames * (4 + 2 * setup.n_keypoints)

    def featurize(self, states, actions) -> np.ndarray:
        return feats.frame_blocks(states, actions, self.setup.n_frames)

    def prepare(self, dataset_states):
        pass

    def make_frontend(self, sample_features, seed: int) -> RKHSFrontend:
        # bandwidth init: median pairwise keypoint distance in the sample batch
        K = self.setup.n_keypoints
        frames = np.asarray(sample_features).reshape(
            -1, self.setup.n_frames, 4 + 2 * K
        )
        kp = frames[: min(len(frames), 20), :, 4:].reshape(-1, 2)
        sigma = rkhs.median_heuristic(kp[:200])
        basis = rkhs.sample_basis(self.setup.rkhs_m, 2, sigma, seed=seed, trainable=True)
        return RKHSFrontend(basis, self.setup.n_frames, K)


def make_pipeline(method: str, setup: InferenceSetup, seed: int = 0):
    if method in ("bayessim-mdnn", "nn-bulk", "gp-bulk"):
        return SummaryStatsPipeline(setup)
    if method == "bayessim-mdrff":
        return RawRFFPipeline(setup, seed=seed)
    if method in ("bayessim-rkhs", "bayeszoom-rkhs"):
        return RKHSNetPipeline(setup)
    raise ValueError(f"unknown method {method!r}")


def _build_model(method: str, pipeline, setup: InferenceSetup, x_sample, seed: int):
    box = setup.prior
    frontend = None
    if isinstance(pipeline, RKHSNetPipeline):
        frontend = pipeline.make_frontend(x_sample, seed=seed)
    common = dict(
        input_dim=pipeline.feature_dim,
        theta_dim=box.dim,
        hidden=setup.hidden,
        frontend=frontend,
        box_low=box.low,
        box_high=box.high,
        seed=seed,
    )
    if method in ("bayessim-mdnn", "bayessim-mdrff", "bayessim-rkhs"):
        return MDNModel(n_components=setup.n_components, **common)
    if method in ("bayeszoom-rkhs", "nn-bulk"):
        return RegressorModel(**common)
    raise ValueError(f"method {method!r} has no trainable network")


# ---------------------------------------------------------------------------
# rounds


@dataclass
class RoundState:
    """Accumulated data and the current proposal for one method's run."""

    iteration: int = 0
    features: list = field(default_factory=list)
    thetas: list = field(default_factory=list)
    raw_observations: list = field(default_factory=list)  # (states, actions)
    diverged_flags: list = field(default_factory=list)
    proposal: object = None
    proposal_history: list = field(default_factory=list)  # one per round
    proposal_counts: list = field(default_factory=list)  # thetas per round
    metrics: list = field(default_factory=list)
    pipeline: object = None

    @property
    def dataset_size(self) -> int:
        return len(self.features)


def initial_round_state(setup: InferenceSetup, method: str, seed: int = 0) -> RoundState:
    return RoundState(
        proposal=setup.prior,
        pipeline=make_pipeline(method, setup, seed=seed),
    )


def _derived_seed(master_seed: int, *path) -> int:
    ss = np.random.SeedSequence([master_seed, *path])
    return int(ss.generate_state(1)[0])


def run_round(
    state: RoundState,
    method: str,
    real_obs,
    budget: int,
    setup: InferenceSetup,
    master_seed: int = 0,
):
    """One sequential iteration; returns (posterior, next RoundState).

    `real_obs` is the raw (states, actions) observation of the real
    trajectory; it is featurized by the method's own pipeline.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if method not in SEQUENTIAL_METHODS:
        raise ValueError(f"{method!r} is not a sequential method")
    i = state.iteration + 1
    try:
        rng = np.random.default_rng(_derived_seed(master_seed, i, 0))
        proposal = as_proposal(state.proposal, setup.prior)
        thetas = proposal.sample(budget, rng)

        raw = list(state.raw_observations)
        flags = list(state.diverged_flags)
        for j, theta in enumerate(thetas):
            s, a, div = setup.observe_rollout(theta, _derived_seed(master_seed, i, 1 + j))
            raw.append((s, a))
            flags.append(div)

        state.pipeline.prepare(raw)
        # earlier rounds' features are unchanged: pipelines freeze after prepare
        fs = list(state.features) + [
            state.pipeline.featurize(s, a) for s, a in raw[len(state.features):]
        ]
        ths = list(state.thetas) + [t for t in thetas]

        x = np.array(fs)
        th = np.array(ths)
        seed = _derived_seed(master_seed, i, 999)
        model = _build_model(method, state.pipeline, setup, x[:1], seed)
        if method == "bayeszoom-rkhs":
            result = regressor_train(model, x, th, replace(setup.train, seed=seed))
        else:
            result = train(model, x, th, replace(setup.train, seed=seed))

        x_real = state.pipeline.featurize(*real_obs)
        if method == "bayeszoom-rkhs":
            q = regressor_posterior(model, x_real)
        else:
            q = model.posterior(x_real)

        history = state.proposal_history + [proposal]
        counts = state.proposal_counts + [budget]
        _, _, corrected = correct_posterior(
            q, setup.prior, ProposalHistory(history, counts),
            n=setup.correction_samples,
            n_components=setup.n_components,
            seed=seed,
        )
    except Exception as e:  # annotate with the failing round
        if isinstance(e, RoundError):
            raise
        raise RoundError(i, e) from e

    metrics = {
        "round": i,
        "method": method,
        "budget": budget,
        "dataset_size": len(fs),
        "train_nll": result.train_nll[result.best_epoch],
        "val_nll": result.final_val_nll,
        "diverged_rollouts": int(np.sum(flags)),
    }
    next_state = RoundState(
        iteration=i,
        features=fs,
        thetas=ths,
        raw_observations=raw,
        diverged_flags=flags,
        proposal=DefensiveProposal(corrected, setup.prior),
        proposal_history=history,
        proposal_counts=counts,
        metrics=state.metrics + [metrics],
        pipeline=state.pipeline,
    )
    return corrected, next_state


def run_bulk(
    method: str,
    budget: int,
    real_obs,
    setup: InferenceSetup,
    master_seed: int = 0,
):
    """Single-shot training on uniform-prior data (the 'bulk' baselines).

    Bulk methods consume supervised-profile keypoint observations.
    Returns (posterior, info dict).
    """
    if method not in BULK_METHODS:
        raise ValueError(f"{method!r} is not a bulk method")
    if budget < 2:
        raise ValueError("bulk training needs budget >= 2")
    rng = np.random.default_rng(_derived_seed(master_seed, 0, 0))
    thetas = setup.prior.sample(budget, rng)
    pipeline = make_pipeline(method, setup, seed=master_seed)
    raw = []
    flags = []
    for j, theta in enumerate(thetas):
        s, a, div = setup.observe_rollout(
            theta, _derived_seed(master_seed, 0, 1 + j), noise_profile="supervised"
        )
        raw.append((s, a))
        flags.append(div)
    pipeline.prepare(raw)
    x = np.array([pipeline.featurize(s, a) for s, a in raw])
    x_real = pipeline.featurize(*real_obs)
    seed = _derived_seed(master_seed, 0, 999)

    if method == "nn-bulk":
        model = _build_model(method, pipeline, setup, x[:1], seed)
        result = regressor_train(model, x, thetas, replace(setup.train, seed=seed))
        posterior = regressor_posterior(model, x_real)
        info = {"val_l1": model.val_l1.tolist(), "val_nll": result.final_val_nll}
    else:  # gp-bulk
        models = [gp_fit(x, thetas[:, d]) for d in range(setup.prior.dim)]
        posterior = gp_posterior(models, x_real)
        info = {"log_marginal": [m.log_marginal for m in models]}
    info.update({
        "method": method,
        "budget": budget,
        "diverged_rollouts": int(np.sum(flags)),
    })
    return posterior, info


def make_real_observation(setup: InferenceSetup, theta_star, master_seed: int = 0):
    """The synthetic 'real' trajectory: hidden theta with the noise model."""
    return setup.observe_rollout(
        np.asarray(theta_star, dtype=np.float64),
        _derived_seed(master_seed, 7777),
    )[:2]
