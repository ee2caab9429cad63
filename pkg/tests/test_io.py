import numpy as np
import pytest

from krikf import io as csvio
from krikf.errors import EmptyPath, NonNumeric, ParseError, RaggedRows
from krikf.graph import build_graph

from conftest import random_connected_graph


def test_signals_round_trip_is_exact(tmp_path, rng):
    x = rng.standard_normal((4, 6)) * 10.0 ** rng.integers(-8, 8, (4, 6))
    path = tmp_path / "s.csv"
    csvio.write_signals_csv(path, x)
    np.testing.assert_array_equal(csvio.load_signals_csv(path), x)


def test_ragged_rows_report_line(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("1,2,3\n4,5,6\n7,8\n")
    with pytest.raises(RaggedRows) as exc:
        csvio.load_signals_csv(path)
    assert exc.value.line == 3


def test_non_numeric_cell(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("1,2\n3,abc\n")
    with pytest.raises(NonNumeric) as exc:
        csvio.load_signals_csv(path)
    assert exc.value.line == 2


def test_single_edge_list(tmp_path):
    path = tmp_path / "g.csv"
    path.write_text("src,dst,weight\n0,1,1.0\n")
    g = csvio.load_graph_csv(path)
    np.testing.assert_array_equal(g.adjacency, [[0, 1], [1, 0]])
    assert csvio.load_graph_csv(path, num_nodes=3).num_nodes == 3


def test_graph_round_trip(tmp_path, rng):
    g = random_connected_graph(7, rng, weighted=True)
    path = tmp_path / "g.csv"
    csvio.write_graph_csv(path, g)
    assert path.read_text().startswith("src,dst,weight\n")
    np.testing.assert_array_equal(csvio.load_graph_csv(path, 7).adjacency, g.adjacency)


@pytest.mark.parametrize("body", ["src,dst\n0,1\n", "src,dst,weight\n1,1,1.0\n",
                                  "src,dst,weight\n0,1,1\n1,0,2\n", "src,dst,weight\n-1,0,1\n"])
def test_bad_edge_lists(tmp_path, body):
    path = tmp_path / "g.csv"
    path.write_text(body)
    with pytest.raises(ParseError):
        csvio.load_graph_csv(path)


def test_routing_csv(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("path,link\n0,0\n0,1\n1,1\n1,2\n")
    r = csvio.load_routing_csv(path)
    np.testing.assert_array_equal(r.entries, [[1, 1, 0], [0, 1, 1]])
    path.write_text("path,link\n0,0\n")
    with pytest.raises(EmptyPath):
        csvio.load_routing_csv(path, num_paths=2)


def test_fmt():
    assert csvio.fmt(3) == "3"
    assert float(csvio.fmt(0.1 + 0.2)) == 0.1 + 0.2
    assert build_graph(np.zeros((1, 1))).num_nodes == 1
