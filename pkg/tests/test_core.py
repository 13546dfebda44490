import numpy as np
import pytest

from falsibench.core import LaggedAdjacency, ScoreMatrix, Series, off_diagonal_mask
from falsibench.errors import DegenerateExtractionError, ParameterError


def test_series_validates_shape_and_values():
    with pytest.raises(ParameterError):
        Series(np.zeros(5))
    with pytest.raises(ParameterError):
        Series(np.zeros((5, 1)))
    with pytest.raises(ParameterError):
        Series(np.array([[0.0, np.nan], [1.0, 2.0]]))
    s = Series(np.zeros((4, 3)))
    assert s.var_names == ("x0", "x1", "x2")
    assert (s.t, s.k) == (4, 3)


def test_series_csv_round_trip_is_exact(tmp_path, rng):
    s = Series(rng.standard_normal((20, 3)) * 1e3, ("a", "b", "c"))
    s.to_csv(tmp_path / "s.csv")
    back = Series.from_csv(tmp_path / "s.csv")
    assert back.var_names == s.var_names
    np.testing.assert_array_equal(back.values, s.values)


def test_adjacency_lifts_static_and_collapses():
    edges = np.zeros((3, 3, 2), dtype=bool)
    edges[0, 1, 1] = True
    edges[2, 0, 0] = True
    adj = LaggedAdjacency(edges)
    assert adj.max_lag == 2
    assert adj.collapsed().edges[:, :, 0].sum() == 2
    assert LaggedAdjacency(np.eye(3)).edges.shape == (3, 3, 1)
    assert adj.n_edges() == 2
    assert adj.is_evaluable()


def test_adjacency_csv_round_trip(tmp_path, rng):
    adj = LaggedAdjacency(rng.random((4, 4, 3)) < 0.3)
    adj.to_csv(tmp_path / "a.csv")
    np.testing.assert_array_equal(LaggedAdjacency.from_csv(tmp_path / "a.csv").edges, adj.edges)


def test_score_matrix_from_raw_normalizes_and_zeroes_diagonal():
    raw = np.array([[5.0, -2.0], [1.0, 9.0]])
    s = ScoreMatrix.from_raw(raw)
    np.testing.assert_allclose(s.scores[:, :, 0], [[0.0, 1.0], [0.5, 0.0]])
    assert s.scores.max() == 1.0


def test_score_matrix_all_zero_off_diagonal():
    with pytest.raises(DegenerateExtractionError):
        ScoreMatrix.from_raw(np.eye(3))
    s = ScoreMatrix.from_raw(np.eye(3), allow_zero=True)
    assert "all_zero" in s.flags


def test_score_matrix_rejects_negative_scores():
    with pytest.raises(ParameterError):
        ScoreMatrix(-np.ones((2, 2)))


def test_score_csv_requires_full_grid(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("effect,cause,lag,score\n0,1,1,0.5\n1,0,1,0.2\n")
    with pytest.raises(ParameterError):
        ScoreMatrix.from_csv(path)
    path.write_text("effect,cause,lag\n0,1,1\n")
    with pytest.raises(ParameterError):
        ScoreMatrix.from_csv(path)


def test_off_diagonal_mask_counts():
    assert off_diagonal_mask(4, 3).sum() == 4 * 3 * 3
