import numpy as np
import pytest

from molgat.chem import Atom, Bond, ComplexRecord
from molgat.errors import CheckpointError, DataError
from molgat.graphs import (
    GraphSample,
    build_sample,
    compute_rmsd,
    label_pose,
    ligand_rmsd,
    prune_protein,
    read_cache,
    write_cache,
)


def atom(element, pos, is_ligand, degree=1):
    return Atom(element, tuple(float(c) for c in pos), is_ligand, degree, 0, 0, False)


def complex_with_protein_at(distances):
    """Two-atom ligand at the origin plus protein atoms at given x offsets from L0."""
    atoms = [atom("C", (0, 0, 0), True), atom("N", (1.4, 0, 0), True)]
    atoms += [atom("O", (d, 0, 0), False) for d in distances]
    return ComplexRecord("c", "p", atoms, [Bond(0, 1)])


class TestPrune:
    def test_boundary_cases(self):
        rec = complex_with_protein_at([7.9 + 1.4, 8.1 + 1.4])  # min dist via L1 at x=1.4
        pruned = prune_protein(rec)
        kept = [a for a in pruned.atoms if not a.is_ligand]
        assert len(kept) == 1
        assert kept[0].position[0] == pytest.approx(7.9 + 1.4)

    def test_exactly_eight_kept(self):
        # the rule removes atoms strictly farther than the cutoff
        rec = complex_with_protein_at([8.0 + 1.4])
        assert prune_protein(rec).num_protein_atoms == 1

    def test_ligand_never_pruned(self):
        rec = complex_with_protein_at([3.0])
        far_ligand = ComplexRecord(
            "c",
            "p",
            rec.atoms + [atom("C", (50, 0, 0), True)],
            rec.bonds,
        )
        pruned = prune_protein(far_ligand)
        assert pruned.num_ligand_atoms == 3

    def test_matches_brute_force_filter(self):
        rng = np.random.default_rng(0)
        lig = [atom("C", rng.normal(scale=2.0, size=3), True) for _ in range(5)]
        prot = [atom("O", rng.normal(scale=8.0, size=3), False) for _ in range(30)]
        rec = ComplexRecord("c", "p", lig + prot, [])
        expected_kept = []
        for p in prot:
            dmin = min(np.linalg.norm(np.subtract(p.position, l.position)) for l in lig)
            if dmin <= 8.0:
                expected_kept.append(p.position)
        pruned = prune_protein(rec)
        got = [a.position for a in pruned.atoms if not a.is_ligand]
        assert got == expected_kept

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        lig = [atom("C", rng.normal(scale=2.0, size=3), True) for _ in range(4)]
        prot = [atom("O", rng.normal(scale=8.0, size=3), False) for _ in range(25)]
        rec = ComplexRecord("c", "p", lig + prot, [])
        once = prune_protein(rec)
        twice = prune_protein(once)
        assert once == twice

    def test_bonds_to_removed_atoms_dropped(self):
        atoms = [
            atom("C", (0, 0, 0), True),
            atom("O", (3, 0, 0), False),
            atom("O", (12, 0, 0), False),
        ]
        rec = ComplexRecord("c", "p", atoms, [Bond(1, 2)])
        pruned = prune_protein(rec)
        assert pruned.bonds == []
        assert pruned.num_protein_atoms == 1

    def test_all_protein_pruned_rejected(self):
        rec = complex_with_protein_at([20.0])
        with pytest.raises(DataError):
            prune_protein(rec)


class TestBuildSample:
    def fixture_record(self):
        # 3 ligand + 5 protein atoms with controlled distances
        atoms = [
            atom("C", (0.0, 0.0, 0.0), True),
            atom("C", (1.5, 0.0, 0.0), True),
            atom("N", (0.0, 1.5, 0.0), True),
            atom("O", (4.0, 0.0, 0.0), False),  # 2.5 A from L1: contact
            atom("N", (0.0, 0.0, 4.9), False),  # 4.9 A from L0: contact
            atom("C", (0.0, 0.0, 5.2), False),  # 5.2 A from L0: no contact
            atom("C", (6.0, 6.0, 0.0), False),
            atom("S", (7.0, 0.0, 0.0), False),  # 3.0 A from P0 (bonded below)
        ]
        bonds = [Bond(0, 1), Bond(0, 2), Bond(3, 7)]
        return ComplexRecord("fix", "p", atoms, bonds)

    def test_adjacency_matches_hand_matrix(self):
        sample = build_sample(self.fixture_record())
        expected = np.eye(8)
        for i, j in ((0, 1), (0, 2), (3, 7)):
            expected[i, j] = expected[j, i] = 1.0
        np.testing.assert_array_equal(sample.a1, expected)

    def test_distances_match_brute_force(self):
        rec = self.fixture_record()
        sample = build_sample(rec)
        coords = rec.coordinates()
        n = len(rec.atoms)
        expected = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                expected[i, j] = np.linalg.norm(coords[i] - coords[j])
        np.testing.assert_allclose(sample.dist, expected, atol=1e-12)

    def test_contact_mask(self):
        sample = build_sample(self.fixture_record())
        assert sample.inter_mask[1, 3] == 1.0 and sample.inter_mask[3, 1] == 1.0
        assert sample.inter_mask[0, 4] == 1.0
        assert sample.inter_mask[0, 5] == 0.0  # 5.2 A: beyond the strict cutoff
        # covalent pairs are never contacts
        assert sample.inter_mask[0, 1] == 0.0
        # intramolecular protein pairs are never contacts
        assert sample.inter_mask[3, 7] == 0.0

    def test_contact_boundary_excluded(self):
        atoms = [
            atom("C", (0, 0, 0), True),
            atom("N", (1.4, 0, 0), True),
            atom("O", (0, 0, 5.0), False),
            atom("O", (0, 0, 4.999), False),
        ]
        sample = build_sample(ComplexRecord("c", "p", atoms, [Bond(0, 1)]))
        assert sample.inter_mask[0, 2] == 0.0
        assert sample.inter_mask[0, 3] == 1.0

    def test_structural_invariants(self):
        sample = build_sample(self.fixture_record())
        assert np.array_equal(sample.a1, sample.a1.T)
        assert np.all(np.diagonal(sample.a1) == 1.0)
        assert np.array_equal(sample.inter_mask, sample.inter_mask.T)
        assert np.all(sample.inter_mask * sample.a1 == 0.0)
        assert np.array_equal(sample.dist, sample.dist.T)
        assert np.all(np.diagonal(sample.dist) == 0.0)
        assert np.all(sample.inter_mask * sample.dist < 5.0)

    def test_rigid_motion_leaves_matrices_unchanged(self):
        rec = self.fixture_record()
        base = build_sample(rec)
        rng = np.random.default_rng(5)
        rotation, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        shift = rng.normal(scale=10.0, size=3)
        moved_atoms = [
            Atom(
                a.element,
                tuple(rotation @ np.asarray(a.position) + shift),
                a.is_ligand,
                a.degree,
                a.num_hydrogens,
                a.implicit_valence,
                a.aromatic,
            )
            for a in rec.atoms
        ]
        moved = build_sample(ComplexRecord("fix", "p", moved_atoms, rec.bonds))
        np.testing.assert_allclose(moved.dist, base.dist, atol=1e-9)
        np.testing.assert_array_equal(moved.a1, base.a1)
        np.testing.assert_array_equal(moved.inter_mask, base.inter_mask)

    def test_interleaved_input_reordered(self):
        atoms = [
            atom("O", (3.0, 0, 0), False),
            atom("C", (0, 0, 0), True),
            atom("N", (1.4, 0, 0), True),
        ]
        sample = build_sample(ComplexRecord("c", "p", atoms, [Bond(1, 2)]))
        # ligand rows first: feature block 0..27 populated for rows 0-1 only
        assert sample.features[0, :28].any() and sample.features[1, :28].any()
        assert sample.features[2, 28:].any()
        assert sample.a1[0, 1] == 1.0


class TestRmsd:
    def test_identity_is_zero(self):
        coords = np.random.default_rng(0).normal(size=(7, 3))
        assert compute_rmsd(coords, coords) == 0.0

    def test_uniform_translation(self):
        coords = np.random.default_rng(1).normal(size=(6, 3))
        shifted = coords + np.array([2.0, 0.0, 0.0])
        assert compute_rmsd(shifted, coords) == pytest.approx(2.0, abs=1e-12)

    def test_matches_per_atom_oracle(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(10, 3))
        b = rng.normal(size=(10, 3))
        expected = np.sqrt(sum(np.sum((a[i] - b[i]) ** 2) for i in range(10)) / 10)
        assert compute_rmsd(a, b) == pytest.approx(expected, abs=1e-12)

    def test_count_mismatch_rejected(self):
        with pytest.raises(DataError):
            compute_rmsd(np.zeros((3, 3)), np.zeros((4, 3)))

    def test_ligand_rmsd_skips_hydrogens_and_protein(self):
        base_atoms = [
            atom("C", (0, 0, 0), True),
            Atom("H", (1.0, 0, 0), True, 1, 0, 0, False),
            atom("O", (4, 0, 0), False),
        ]
        moved_atoms = [
            atom("C", (3, 0, 0), True),
            Atom("H", (99.0, 0, 0), True, 1, 0, 0, False),  # H displacement ignored
            atom("O", (4, 0, 0), False),
        ]
        ref = ComplexRecord("c", "p", base_atoms, [])
        pose = ComplexRecord("c", "p", moved_atoms, [])
        assert ligand_rmsd(pose, ref) == pytest.approx(3.0, abs=1e-12)


class TestLabelPose:
    @pytest.mark.parametrize(
        "rmsd,expected",
        [(1.5, 1), (3.0, None), (5.0, 0), (0.0, 1), (2.0, None), (4.0, None), (4.001, 0)],
    )
    def test_thresholds(self, rmsd, expected):
        assert label_pose(rmsd) == expected

    def test_negative_rejected(self):
        with pytest.raises(DataError):
            label_pose(-0.1)


class TestCache:
    def samples(self):
        recs = [
            complex_with_protein_at([2.5, 3.5]),
            complex_with_protein_at([4.0]),
        ]
        out = []
        for i, rec in enumerate(recs):
            rec = ComplexRecord(
                f"c{i}", f"p{i}", rec.atoms, rec.bonds, category="dude_active", label=1,
                rmsd=1.25 if i == 0 else None,
            )
            out.append(build_sample(rec))
        return out

    def test_round_trip(self, tmp_path):
        samples = self.samples()
        path = tmp_path / "graphs.cache"
        write_cache(samples, path)
        loaded = read_cache(path)
        assert len(loaded) == len(samples)
        for a, b in zip(samples, loaded):
            assert a.complex_id == b.complex_id and a.protein_id == b.protein_id
            assert a.category == b.category and a.label == b.label and a.rmsd == b.rmsd
            np.testing.assert_array_equal(a.features, b.features)
            np.testing.assert_array_equal(a.a1, b.a1)
            np.testing.assert_array_equal(a.inter_mask, b.inter_mask)
            np.testing.assert_array_equal(a.dist, b.dist)

    def test_write_is_deterministic(self, tmp_path):
        samples = self.samples()
        p1, p2 = tmp_path / "a.cache", tmp_path / "b.cache"
        write_cache(samples, p1)
        write_cache(samples, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_corruption_detected(self, tmp_path):
        path = tmp_path / "graphs.cache"
        write_cache(self.samples(), path)
        blob = bytearray(path.read_bytes())
        blob[30] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="checksum"):
            read_cache(path)

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "not.cache"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 40)
        with pytest.raises(CheckpointError, match="not a graph cache"):
            read_cache(path)
