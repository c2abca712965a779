import json

import numpy as np
import pytest

from hgsel.data import load_dataset, save_dataset
from hgsel.errors import DataFormatError
from hgsel.hetgraph import compose_metapath, mhr
from hgsel.synth import AttributeTypeSpec, SyntheticSpec, synth_generate


def write_minimal_dataset(root, edges=((0, 0), (1, 0)), labels=True):
    """Two papers, one author, a PAP metapath."""
    (root / "edges").mkdir(parents=True)
    (root / "graph.json").write_text(json.dumps({
        "target_type": "paper",
        "node_types": [{"name": "paper", "count": 2},
                       {"name": "author", "count": 1}],
        "relations": [{"name": "PA", "src": "paper", "dst": "author"}],
        "metapaths": [{"name": "PAP",
                       "chain": [{"relation": "PA", "reverse": False},
                                 {"relation": "PA", "reverse": True}]}],
    }))
    (root / "edges" / "PA.tsv").write_text(
        "\n".join(f"{s}\t{d}" for s, d in edges) + "\n")
    (root / "features.tsv").write_text("1.0\t0.0\n0.0\t1.0\n")
    if labels:
        (root / "labels.tsv").write_text("0\t0\n1\t0\n")


class TestLoad:
    def test_minimal_fixture_composes(self, tmp_path):
        write_minimal_dataset(tmp_path)
        graph, specs = load_dataset(tmp_path)
        assert graph.n_targets == 2
        sub = compose_metapath(graph, specs[0])
        assert sub.adjacency[0, 1] == 1
        assert mhr(sub, graph.labels) == 1.0

    def test_labels_optional(self, tmp_path):
        write_minimal_dataset(tmp_path, labels=False)
        graph, _ = load_dataset(tmp_path)
        assert graph.labels is None

    def test_out_of_range_edge_names_line(self, tmp_path):
        write_minimal_dataset(tmp_path, edges=((0, 0), (5, 0)))
        with pytest.raises(DataFormatError) as err:
            load_dataset(tmp_path)
        assert "PA.tsv line 2" in str(err.value)
        assert "out of range" in str(err.value)

    def test_feature_width_mismatch_names_line(self, tmp_path):
        write_minimal_dataset(tmp_path)
        (tmp_path / "features.tsv").write_text("1.0\t0.0\n0.0\n")
        with pytest.raises(DataFormatError) as err:
            load_dataset(tmp_path)
        assert "features.tsv line 2" in str(err.value)

    def test_feature_row_count_checked(self, tmp_path):
        write_minimal_dataset(tmp_path)
        (tmp_path / "features.tsv").write_text("1.0\t0.0\n")
        with pytest.raises(DataFormatError):
            load_dataset(tmp_path)

    def test_missing_edge_file(self, tmp_path):
        write_minimal_dataset(tmp_path)
        (tmp_path / "edges" / "PA.tsv").unlink()
        with pytest.raises(DataFormatError) as err:
            load_dataset(tmp_path)
        assert "missing file" in str(err.value)

    def test_incomplete_labels_rejected(self, tmp_path):
        write_minimal_dataset(tmp_path)
        (tmp_path / "labels.tsv").write_text("0\t0\n")
        with pytest.raises(DataFormatError):
            load_dataset(tmp_path)

    def test_invalid_json_reported(self, tmp_path):
        write_minimal_dataset(tmp_path)
        (tmp_path / "graph.json").write_text("{nope")
        with pytest.raises(DataFormatError) as err:
            load_dataset(tmp_path)
        assert "invalid JSON" in str(err.value)

    def test_duplicate_edge_lines_accumulate(self, tmp_path):
        write_minimal_dataset(tmp_path, edges=((0, 0), (0, 0), (1, 0)))
        graph, specs = load_dataset(tmp_path)
        assert graph.relation("PA").entries[0, 0] == 2
        # two parallel edges from paper 0 -> two PAP paths to paper 1
        assert compose_metapath(graph, specs[0]).adjacency[0, 1] == 2


class TestRoundTrip:
    def test_synthetic_round_trip_identical(self, tmp_path):
        spec = SyntheticSpec(
            n_classes=2, n_targets=30,
            attributes=(AttributeTypeSpec("a", 12, 0.4, 0.1),),
            feature_dim=5, seed=9)
        graph, specs = synth_generate(spec)
        save_dataset(graph, specs, tmp_path / "ds")
        loaded, loaded_specs = load_dataset(tmp_path / "ds")
        assert loaded.node_types == graph.node_types
        assert np.array_equal(loaded.labels, graph.labels)
        assert np.allclose(loaded.features, graph.features)
        for a, b in zip(loaded.relations, graph.relations):
            assert np.array_equal(a.entries.toarray(), b.entries.toarray())
        assert [s.name for s in loaded_specs] == [s.name for s in specs]
        assert [s.chain for s in loaded_specs] == [s.chain for s in specs]
