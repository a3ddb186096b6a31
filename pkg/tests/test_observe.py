import itertools
import json

import numpy as np
import pytest
from scipy import stats

from defosim.observe import (
    KeypointObservation,
    NOISE_PROFILES,
    ObservationConfigError,
    ObservationNoise,
    assemble_state,
    disassemble_state,
    dump_observations_jsonl,
    extract_keypoints,
    ground_truth_points,
    observe_trajectory,
    resolve_noise,
)
from defosim.sim import build_scene, rollout

QUIET = ObservationNoise()


class TestObservationNoise:
    def test_probability_bounds(self):
        with pytest.raises(ObservationConfigError):
            ObservationNoise(relocation_prob=1.5)
        with pytest.raises(ObservationConfigError):
            ObservationNoise(gaussian_std=-0.1)

    def test_profiles_resolve_against_diameter(self):
        n = resolve_noise("unsupervised", object_diameter=0.5)
        assert np.isclose(n.gaussian_std, 0.02 * 0.5)
        assert n.permute and n.relocation_prob == 0.1
        n = resolve_noise("supervised", object_diameter=0.5)
        assert np.isclose(n.gaussian_std, 0.01 * 0.5)
        assert n.relocation_prob == 0.02
        n = resolve_noise("none", object_diameter=0.5)
        assert n.gaussian_std == 0.0 and not n.permute

    def test_unknown_profile(self):
        with pytest.raises(ObservationConfigError):
            resolve_noise("bogus", 1.0)

    def test_profile_names(self):
        assert set(NOISE_PROFILES) == {"none", "supervised", "unsupervised"}


class TestExtractKeypoints:
    def test_semantic_zero_noise_hits_anchors(self, mid_params, rng):
        mesh, _ = build_scene("wipe", mid_params, T=2)
        anchors = mesh.keypoint_anchors[4]
        obs = extract_keypoints(mesh.positions, "semantic", 4, QUIET, rng,
                                semantic_indices=anchors)
        assert np.array_equal(obs.points, mesh.positions[anchors])

    @pytest.mark.parametrize("k", [4, 8])
    def test_primary_k_configurations(self, mid_params, rng, k):
        mesh, _ = build_scene("wind", mid_params, T=2)
        anchors = mesh.keypoint_anchors[k]
        obs = extract_keypoints(mesh.positions, "semantic", k, QUIET, rng,
                                semantic_indices=anchors)
        assert obs.k == k

    def test_permute_only_is_set_equal(self, mid_params):
        mesh, _ = build_scene("wipe", mid_params, T=2)
        anchors = mesh.keypoint_anchors[8]
        noisy = ObservationNoise(permute=True)
        obs = extract_keypoints(mesh.positions, "semantic", 8, noisy,
                                np.random.default_rng(3),
                                semantic_indices=anchors)
        clean = mesh.positions[anchors]
        assert sorted(map(tuple, obs.points)) == sorted(map(tuple, clean))

    def test_k_exceeds_particles(self, rng):
        with pytest.raises(ObservationConfigError):
            extract_keypoints(np.zeros((3, 2)), "diffuse", 5, QUIET, rng)

    def test_diffuse_samples_particles(self, mid_params, rng):
        mesh, _ = build_scene("wipe", mid_params, T=2)
        obs = extract_keypoints(mesh.positions, "diffuse", 6, QUIET, rng)
        for p in obs.points:
            assert np.any(np.all(np.isclose(mesh.positions, p), axis=1))

    def test_permutations_uniform_chi_square(self):
        # K=3 over 10^4 frames: all 6 permutations equally likely (p > 0.01)
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
        noise = ObservationNoise(permute=True)
        perms = {p: i for i, p in enumerate(itertools.permutations(range(3)))}
        counts = np.zeros(6)
        streams = np.random.SeedSequence(77).spawn(10_000)
        for s in streams:
            obs = extract_keypoints(pts, "semantic", 3, noise,
                                    np.random.default_rng(s),
                                    semantic_indices=[0, 1, 2])
            key = tuple(int(round(x)) for x in obs.points[:, 0])
            counts[perms[key]] += 1
        assert stats.chisquare(counts).pvalue > 0.01

    def test_relocation_moves_to_surface_particles(self, mid_params):
        mesh, _ = build_scene("wipe", mid_params, T=2)
        anchors = mesh.keypoint_anchors[8]
        noise = ObservationNoise(relocation_prob=1.0)
        obs = extract_keypoints(mesh.positions, "semantic", 8, noise,
                                np.random.default_rng(0),
                                semantic_indices=anchors)
        for p in obs.points:
            assert np.any(np.all(np.isclose(mesh.positions, p), axis=1))

    def test_reproducible_under_seed(self, mid_params):
        mesh, _ = build_scene("wipe", mid_params, T=2)
        anchors = mesh.keypoint_anchors[8]
        noise = ObservationNoise(gaussian_std=0.01, permute=True,
                                 relocation_prob=0.3)
        a = extract_keypoints(mesh.positions, "semantic", 8, noise,
                              np.random.default_rng(9), semantic_indices=anchors)
        b = extract_keypoints(mesh.positions, "semantic", 8, noise,
                              np.random.default_rng(9), semantic_indices=anchors)
        assert np.array_equal(a.points, b.points)


class TestStateVector:
    def test_assemble_ordering_and_dim(self):
        kp = KeypointObservation(points=np.array([[1.0, 2.0], [3.0, 4.0]]))
        s = assemble_state([9.0, 8.0], kp)
        assert np.array_equal(s, [9.0, 8.0, 1.0, 2.0, 3.0, 4.0])
        assert s.size == 2 + 2 * kp.k

    def test_roundtrip(self):
        kp = KeypointObservation(points=np.array([[1.0, 2.0], [3.0, 4.0]]))
        pose, kp2 = disassemble_state(assemble_state([0.5, -0.5], kp))
        assert np.array_equal(pose, [0.5, -0.5])
        assert np.array_equal(kp2.points, kp.points)

    def test_nonfinite_pose_rejected(self):
        kp = KeypointObservation(points=np.zeros((1, 2)))
        with pytest.raises(ObservationConfigError):
            assemble_state([np.nan, 0.0], kp)


class TestGroundTruth:
    def test_full_particle_count(self, mid_params):
        mesh, _ = build_scene("wipe", mid_params, T=2, cloth_n=8)
        assert ground_truth_points(mesh.positions).shape == (64, 2)

    def test_matches_trajectory_record(self, mid_params):
        traj = rollout("wipe", mid_params, T=10)
        assert np.array_equal(ground_truth_points(traj.particles[7]),
                              traj.particles[7])

    def test_returns_copy(self, mid_params):
        mesh, _ = build_scene("wipe", mid_params, T=2)
        pts = ground_truth_points(mesh.positions)
        pts += 1.0
        assert not np.allclose(pts, mesh.positions)


class TestObserveTrajectory:
    def test_shapes_and_determinism(self, mid_params):
        traj = rollout("wipe", mid_params, T=12)
        mesh, _ = build_scene("wipe", mid_params, T=2)
        noise = ObservationNoise(gaussian_std=0.002, permute=True, seed=4)
        s1, a1 = observe_trajectory(traj, "semantic", 8, noise,
                                    semantic_indices=mesh.keypoint_anchors[8])
        s2, _ = observe_trajectory(traj, "semantic", 8, noise,
                                   semantic_indices=mesh.keypoint_anchors[8])
        assert s1.shape == (12, 2 + 16)
        assert a1.shape == (12, 2)
        assert np.array_equal(s1, s2)

    def test_frames_are_independent_streams(self, mid_params):
        # identical particle fields in two frames still get different noise
        traj = rollout("wipe", mid_params, T=5)
        traj.particles[1] = traj.particles[0]
        mesh, _ = build_scene("wipe", mid_params, T=2)
        noise = ObservationNoise(gaussian_std=0.01, seed=0)
        s, _ = observe_trajectory(traj, "semantic", 8, noise,
                                  semantic_indices=mesh.keypoint_anchors[8])
        assert not np.allclose(s[0, 2:], s[1, 2:])

    def test_dump_schema(self, tmp_path, mid_params):
        traj = rollout("wipe", mid_params, T=4)
        mesh, _ = build_scene("wipe", mid_params, T=2)
        states, _ = observe_trajectory(traj, "semantic", 4, QUIET,
                                       semantic_indices=mesh.keypoint_anchors[4])
        path = tmp_path / "obs.jsonl"
        dump_observations_jsonl(path, states)
        rec = json.loads(path.read_text().strip().splitlines()[1])
        assert rec["t"] == 1
        assert len(rec["keypoints"]) == 4
