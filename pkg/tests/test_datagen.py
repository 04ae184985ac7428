import json

import numpy as np
import pytest

from rancl import datagen
from rancl.errors import ChecksumError, SchemaError, StructuralError
from rancl.graph import EntityDims
from rancl.identify import ConflictKind, ground_truth_conflicts


def _one_to_one(noise_std=0.1, seed=0):
    return datagen.ConflictModelSpec(
        EntityDims(1, 1, 1), control=[[1]], subscribe=[[1]], influence=[[1.0]],
        param_coupling=[[0]], kpi_coupling=[[0]], noise_std=noise_std, seed=seed,
    )


def _assert_datasets_equal(a, b):
    np.testing.assert_array_equal(a.x_p, b.x_p)
    np.testing.assert_array_equal(a.x_k, b.x_k)
    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(a.truth_learned.matrix, b.truth_learned.matrix)
    np.testing.assert_array_equal(a.known.matrix, b.known.matrix)
    assert a.spec.to_json() == b.spec.to_json()


class TestDefaultTopology:
    def test_counts(self, default_spec):
        d = default_spec.dims
        assert (d.n_agents, d.n_params, d.n_kpis) == (4, 7, 4)

    def test_valid_and_deterministic(self, default_spec):
        assert default_spec.problems() == []
        assert datagen.default_topology().to_json() == default_spec.to_json()

    def test_every_conflict_kind_present(self, default_spec):
        counts = ground_truth_conflicts(default_spec).counts()
        assert all(counts[str(k)] >= 1 for k in ConflictKind)

    def test_truth_block_layout(self, default_spec):
        t = default_spec.truth_learned().matrix
        np.testing.assert_array_equal(t[:7, 7:], default_spec.labels())
        np.testing.assert_array_equal(t[:7, :7], default_spec.param_coupling)
        np.testing.assert_array_equal(t[7:, 7:], default_spec.kpi_coupling)
        assert np.array_equal(t, t.T) and not np.any(np.diag(t))


class TestGenerate:
    def test_shapes_at_full_length(self, default_spec):
        ds = datagen.generate(default_spec, 10000)
        assert ds.x_p.shape == (7, 10000) and ds.x_k.shape == (4, 10000)

    def test_identity_propagation_vanishing_noise(self):
        devs = []
        for noise in (1e-1, 1e-3, 1e-6):
            ds = datagen.generate(_one_to_one(noise), 500)
            devs.append(np.max(np.abs(ds.x_k - ds.x_p)))
        assert devs[0] > devs[1] > devs[2]
        assert devs[2] < 1e-4

    def test_uninfluential_parameter_has_zero_label_row(self, default_spec):
        w = default_spec.influence.copy()
        w[3] = 0.0
        w[4, 1] = 0.9  # keep k1 influenced
        spec = datagen.ConflictModelSpec(**{**default_spec.__dict__, "influence": w})
        ds = datagen.generate(spec, 10)
        assert not ds.labels[3].any()

    def test_labels_match_nonzero_influence(self, default_spec):
        ds = datagen.generate(default_spec, 10)
        np.testing.assert_array_equal(ds.labels, (default_spec.influence != 0).astype(int))

    def test_deterministic(self, default_spec):
        _assert_datasets_equal(datagen.generate(default_spec, 100), datagen.generate(default_spec, 100))

    def test_seed_changes_samples(self, default_spec):
        a = datagen.generate(default_spec, 50)
        b = datagen.generate(default_spec.with_seed(1), 50)
        assert not np.array_equal(a.x_p, b.x_p)

    @pytest.mark.parametrize("length", [0, -3, 2.5])
    def test_bad_length(self, default_spec, length):
        with pytest.raises(ValueError):
            datagen.generate(default_spec, length)

    def test_non_finite_spec_rejected(self, default_spec):
        w = default_spec.influence.copy()
        w[0, 2] = np.inf
        spec = datagen.ConflictModelSpec(**{**default_spec.__dict__, "influence": w})
        with pytest.raises(ValueError):
            datagen.generate(spec, 10)

    def test_invalid_spec_problems(self):
        spec = datagen.ConflictModelSpec(
            EntityDims(1, 2, 1), control=[[1, 0]], subscribe=[[1]], influence=[[0.0], [0.0]],
            param_coupling=[[0, 1], [0, 0]], kpi_coupling=[[0]],
        )
        problems = spec.problems()
        assert "param_coupling is not symmetric" in problems
        assert "parameter p1 is controlled by no agent" in problems
        assert "KPI k0 is influenced by no parameter" in problems

    def test_statistical_sanity(self, default_spec):
        ds = datagen.generate(default_spec, 5000)
        w = default_spec.influence
        c = np.corrcoef(np.vstack([ds.x_p, ds.x_k]))[:7, 7:]
        # linked through any path (direct influence or a coupling on either side)
        cp = default_spec.param_coupling + np.eye(7)
        ck = default_spec.kpi_coupling + np.eye(4)
        reach = (cp @ (w != 0) @ ck) > 0
        strong = (np.abs(w) >= 0.5)
        assert np.all(np.abs(c[strong]) > 0.2)
        assert np.all(np.abs(c[~reach]) < 0.1)


class TestDiskFormat:
    def test_round_trip_bit_exact(self, tmp_path, default_spec):
        ds = datagen.generate(default_spec.with_seed(7), 64)
        datagen.write_dataset(ds, tmp_path / "d")
        assert sorted(p.name for p in (tmp_path / "d").iterdir()) == sorted(datagen.DATASET_FILES)
        _assert_datasets_equal(datagen.read_dataset(tmp_path / "d"), ds)

    def test_wrong_column_count(self, tmp_path, default_spec):
        datagen.write_dataset(datagen.generate(default_spec, 8), tmp_path)
        lines = (tmp_path / "x_p.csv").read_text().splitlines()
        lines[2] = lines[2].rsplit(",", 1)[0]
        (tmp_path / "x_p.csv").write_text("\n".join(lines) + "\n")
        with pytest.raises(SchemaError):
            datagen.read_dataset(tmp_path)

    def test_mismatched_dims_metadata(self, tmp_path, default_spec):
        datagen.write_dataset(datagen.generate(default_spec, 8), tmp_path)
        lines = (tmp_path / "x_k.csv").read_text().splitlines()
        (tmp_path / "x_k.csv").write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(StructuralError):
            datagen.read_dataset(tmp_path)

    def test_checksum_mismatch(self, tmp_path, default_spec):
        datagen.write_dataset(datagen.generate(default_spec, 8), tmp_path)
        text = (tmp_path / "x_p.csv").read_text()
        first = text.split(",", 1)[0]
        (tmp_path / "x_p.csv").write_text(text.replace(first, repr(float(first) + 1.0), 1))
        with pytest.raises(ChecksumError):
            datagen.read_dataset(tmp_path)

    def test_schema_version_mismatch(self, tmp_path, default_spec):
        datagen.write_dataset(datagen.generate(default_spec, 8), tmp_path)
        meta = json.loads((tmp_path / "spec.json").read_text())
        meta["schema_version"] = 99
        (tmp_path / "spec.json").write_text(json.dumps(meta))
        with pytest.raises(SchemaError):
            datagen.read_dataset(tmp_path)

    def test_spec_json_round_trip(self, default_spec):
        back = datagen.ConflictModelSpec.from_json(json.loads(json.dumps(default_spec.to_json())))
        assert back.to_json() == default_spec.to_json()
