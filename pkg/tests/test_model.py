import numpy as np
import pytest

from molgat.autodiff import Tape, constant, parameter
from molgat.chem import Atom, Bond, ComplexRecord
from molgat.errors import CheckpointError, NumericError
from molgat.graphs import GraphSample, build_sample
from molgat.model import (
    CHECKPOINT_MAGIC,
    ModelConfig,
    ModelParams,
    load_params,
    materialize_a2,
    predict,
    save_params,
    score,
)
from molgat.training import bce_loss

from helpers import check_gradients

SMALL = ModelConfig(num_gat_layers=2, gat_dim=8, fc_dims=(6, 1), dropout_rate=0.3)


def atom(element, pos, is_ligand):
    return Atom(element, tuple(float(c) for c in pos), is_ligand, 1, 0, 0, False)


def sample_with_contact(distance, extra_protein=()):
    """Two-atom ligand plus one protein atom at a controlled distance from L0."""
    atoms = [
        atom("C", (0, 0, 0), True),
        atom("N", (1.4, 0, 0), True),
        atom("O", (0, 0, distance), False),
    ]
    atoms += [atom("C", pos, False) for pos in extra_protein]
    return build_sample(ComplexRecord("c", "p", atoms, [Bond(0, 1)]))


def no_contact_sample(seed=0):
    rng = np.random.default_rng(seed)
    atoms = [atom("C", rng.normal(size=3) * 0.5, True) for _ in range(3)]
    atoms += [atom("O", (6.0 + k * 0.6, 0, 0), False) for k in range(3)]
    rec = ComplexRecord("c", "p", atoms, [Bond(0, 1), Bond(1, 2), Bond(3, 4)])
    s = build_sample(rec)
    assert s.inter_mask.sum() == 0
    return s


def fresh_params(config=SMALL, seed=0):
    return ModelParams.initialize(config, np.random.default_rng(seed))


class TestMaterializeA2:
    def test_distance_at_mu_gives_one(self):
        s = sample_with_contact(3.0)
        params = fresh_params()
        params.mu.data[0, 0] = 3.0
        t = Tape()
        a2 = materialize_a2(t, s.dist, s.inter_mask, constant(s.a1), params.mu, params.sigma_on(t))
        assert a2.data[0, 2] == pytest.approx(1.0, abs=1e-12)

    def test_no_contacts_reproduces_a1_exactly(self):
        s = no_contact_sample()
        params = fresh_params()
        t = Tape()
        a2 = materialize_a2(t, s.dist, s.inter_mask, constant(s.a1), params.mu, params.sigma_on(t))
        assert np.array_equal(a2.data, s.a1)

    def test_gaussian_value(self):
        # d=3, mu=2, sigma=4 -> exp(-0.25)
        s = sample_with_contact(3.0)
        t = Tape()
        mu = parameter([[2.0]])
        sigma = constant([[4.0]])
        a2 = materialize_a2(t, s.dist, s.inter_mask, constant(s.a1), mu, sigma)
        assert a2.data[0, 2] == pytest.approx(np.exp(-0.25), abs=1e-12)
        assert a2.data[2, 0] == pytest.approx(np.exp(-0.25), abs=1e-12)

    def test_nonpositive_sigma_rejected(self):
        s = sample_with_contact(3.0)
        with pytest.raises(NumericError):
            materialize_a2(
                Tape(), s.dist, s.inter_mask, constant(s.a1), parameter([[2.0]]), constant([[0.0]])
            )

    def test_distance_at_mu_maximizes_weight(self):
        params = fresh_params()
        mu = params.mu_value()
        weights = []
        for d in np.linspace(0.5, 4.9, 23):
            s = sample_with_contact(d)
            t = Tape()
            a2 = materialize_a2(
                t, s.dist, s.inter_mask, constant(s.a1), params.mu, params.sigma_on(t)
            )
            weights.append((abs(d - mu), a2.data[0, 2]))
        best = min(weights, key=lambda p: p[0])
        assert max(weights, key=lambda p: p[1]) == best


class TestPredict:
    def test_probability_in_open_interval(self):
        s = sample_with_contact(3.2)
        p = score(s, fresh_params(), SMALL)
        assert 0.0 < p < 1.0

    def test_no_contact_output_is_constant_sigmoid_mlp_zero(self):
        params = fresh_params(seed=3)
        # nonzero biases so the constant is not trivially 0.5
        for _, b in params.fc:
            b.data[:] = np.random.default_rng(4).uniform(-0.5, 0.5, size=b.data.shape)
        internals = {}
        p1 = predict(Tape(), no_contact_sample(0), params, SMALL, internals=internals).item()
        p2 = predict(Tape(), no_contact_sample(99), params, SMALL).item()
        assert p1 == p2  # independent of the complex
        assert np.array_equal(internals["pooled"].data, np.zeros((1, SMALL.gat_dim)))
        # hand-computed sigmoid(MLP(0))
        y = np.zeros((1, SMALL.gat_dim))
        for k, (w, b) in enumerate(params.fc):
            y = y @ w.data + b.data
            if k < len(params.fc) - 1:
                y = np.maximum(y, 0.0)
        expected = 1.0 / (1.0 + np.exp(-y[0, 0]))
        assert p1 == pytest.approx(expected, abs=1e-14)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(5)
        s = sample_with_contact(3.0, extra_protein=[(0, 3.0, 3.0), (1.5, 0, 4.0)])
        params = fresh_params()
        base = score(s, params, SMALL)
        perm = rng.permutation(s.num_atoms)
        permuted = GraphSample(
            features=s.features[perm],
            a1=s.a1[np.ix_(perm, perm)],
            dist=s.dist[np.ix_(perm, perm)],
            inter_mask=s.inter_mask[np.ix_(perm, perm)],
            complex_id=s.complex_id,
            protein_id=s.protein_id,
        )
        assert abs(score(permuted, params, SMALL) - base) <= 1e-10

    def test_rotation_invariance(self):
        rng = np.random.default_rng(6)
        rotation, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        shift = rng.normal(scale=5.0, size=3)
        atoms = [
            atom("C", (0, 0, 0), True),
            atom("N", (1.4, 0, 0), True),
            atom("O", (0, 0, 3.2), False),
            atom("C", (2.5, 2.5, 0), False),
        ]
        bonds = [Bond(0, 1)]
        base = build_sample(ComplexRecord("c", "p", atoms, bonds))
        moved_atoms = [
            Atom(a.element, tuple(rotation @ np.asarray(a.position) + shift), a.is_ligand,
                 a.degree, a.num_hydrogens, a.implicit_valence, a.aromatic)
            for a in atoms
        ]
        moved = build_sample(ComplexRecord("c", "p", moved_atoms, bonds))
        params = fresh_params()
        assert abs(score(base, params, SMALL) - score(moved, params, SMALL)) < 1e-9

    def test_inference_deterministic(self):
        s = sample_with_contact(2.8)
        params = fresh_params()
        assert score(s, params, SMALL) == score(s, params, SMALL)

    def test_training_dropout_reproducible_with_seed(self):
        s = sample_with_contact(2.8)
        params = fresh_params()
        p1 = predict(Tape(), s, params, SMALL, training=True, rng=np.random.default_rng(7)).item()
        p2 = predict(Tape(), s, params, SMALL, training=True, rng=np.random.default_rng(7)).item()
        assert p1 == p2

    def test_training_requires_rng(self):
        with pytest.raises(ValueError):
            predict(Tape(), sample_with_contact(3.0), fresh_params(), SMALL, training=True)

    def test_parameter_count_layer_sharing(self):
        cfg = SMALL
        params = fresh_params(cfg)
        f = cfg.gat_dim
        per_layer = 2 * f * f + 2 * f + 1  # one shared GatParams per layer, not two
        fc = 0
        prev = f
        for d in cfg.fc_dims:
            fc += prev * d + d
            prev = d
        expected = cfg.input_dim * f + cfg.num_gat_layers * per_layer + 2 + fc
        assert params.num_parameters() == expected

    def test_branches_read_identical_parameter_objects(self):
        params = fresh_params()
        names = [name for name, _ in params.named_values()]
        assert sum(1 for n in names if n.startswith("gat")) == 4 * SMALL.num_gat_layers


class TestGradientsThroughModel:
    def test_mu_sigma_end_to_end(self):
        s = sample_with_contact(3.4, extra_protein=[(0, 2.8, 2.8)])
        params = fresh_params(seed=8)
        cfg = SMALL

        def forward():
            t = Tape()
            return bce_loss(t, predict(t, s, params, cfg), 1).item()

        t = Tape()
        loss = bce_loss(t, predict(t, s, params, cfg), 1)
        params.zero_grad()
        t.backward(loss)
        check_gradients(forward, [params.mu, params.sigma_raw], tol=1e-4)
        assert abs(params.mu.grad[0, 0]) > 0  # contacts exist, so mu must matter

    def test_mu_gradient_zero_without_contacts(self):
        s = no_contact_sample()
        params = fresh_params()
        t = Tape()
        loss = bce_loss(t, predict(t, s, params, SMALL), 0)
        params.zero_grad()
        t.backward(loss)
        assert params.mu.grad is None or np.all(params.mu.grad == 0.0)


class TestCheckpoint:
    def roundtrip(self, tmp_path, config=SMALL, seed=0):
        params = fresh_params(config, seed)
        path = tmp_path / "model.ckpt"
        save_params(path, params, config, iteration=1234)
        return params, path

    def test_bitwise_round_trip(self, tmp_path):
        params, path = self.roundtrip(tmp_path)
        loaded, config, iteration = load_params(path)
        assert iteration == 1234
        assert config == SMALL
        for (name_a, a), (name_b, b) in zip(params.named_values(), loaded.named_values()):
            assert name_a == name_b
            assert np.array_equal(a.data, b.data), name_a

    def test_save_is_deterministic(self, tmp_path):
        params = fresh_params()
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_params(p1, params, SMALL, 7)
        save_params(p2, params, SMALL, 7)
        assert p1.read_bytes() == p2.read_bytes()

    def test_corruption_detected(self, tmp_path):
        _, path = self.roundtrip(tmp_path)
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 0x01
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="checksum"):
            load_params(path)

    def test_version_mismatch_detected(self, tmp_path):
        import struct
        import zlib

        _, path = self.roundtrip(tmp_path)
        blob = path.read_bytes()
        body = bytearray(blob[len(CHECKPOINT_MAGIC) : -4])
        body[0:4] = struct.pack("<I", 99)
        path.write_bytes(CHECKPOINT_MAGIC + bytes(body) + struct.pack("<I", zlib.crc32(bytes(body))))
        with pytest.raises(CheckpointError, match="version"):
            load_params(path)

    def test_config_mismatch_rejected(self, tmp_path):
        two_layer = ModelConfig(num_gat_layers=2, gat_dim=8, fc_dims=(6, 1))
        four_layer = ModelConfig(num_gat_layers=4, gat_dim=8, fc_dims=(6, 1))
        _, path = self.roundtrip(tmp_path, config=two_layer)
        with pytest.raises(CheckpointError, match="does not match"):
            load_params(path, expected_config=four_layer)

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"garbage bytes here")
        with pytest.raises(CheckpointError, match="not a checkpoint"):
            load_params(path)

    def test_loaded_params_produce_identical_scores(self, tmp_path):
        params, path = self.roundtrip(tmp_path)
        loaded, config, _ = load_params(path)
        s = sample_with_contact(3.1)
        assert score(s, params, SMALL) == score(s, loaded, config)
