import json

import numpy as np
import pytest

import lrf_dse as L


def test_original_cost_of_fc():
    c = L.original_cost(L.fc(400, 120))
    assert c == {"params": 48000, "fm": 120, "flops": 96000, "overall_mem": 48120}


def test_svd_solution_cost():
    s = L.solution(L.fc(400, 120), "svd", [30])
    assert s["cost"]["params"] == 30 * (400 + 120)
    assert s["valid"]
    assert s["ratio"]["params"] == pytest.approx(0.675)


def test_space_and_census_counts():
    layer = L.conv([3, 3, 256, 512], [8, 8], stride=2)
    assert L.space_size(layer, "tucker") == 256 * 512
    (entry,) = L.census(layer, ["tucker"])["census"]
    assert entry["all"] == 131072
    assert entry["valid"] == 121246
    assert [b["count"] for b in entry["buckets"]] == [695, 1498, 2222]


def test_constrained_query_lands_in_band():
    res = L.constrained_query(L.fc(400, 120), ["svd", "qr"], fix="params", value=0.85, tol=0.005)
    for sol in res.values():
        assert abs(sol["ratio"]["params"] - 0.85) <= 0.005


def test_full_rank_decomposition_reconstructs():
    w = np.random.default_rng(0).standard_normal((8, 6)).astype(np.float32)
    d = L.decompose(L.fc(8, 6), w, "svd", [6])
    assert d["relative_error"] < 1e-5
    assert d["reconstruction"].shape == (8, 6)
    assert [s["kind"] for s in d["sub_layers"]] == ["FC", "FC"]


def test_tucker_decomposition_is_deterministic():
    layer = L.conv([3, 3, 8, 8], [6, 6])
    w = np.random.default_rng(1).standard_normal((3, 3, 8, 8)).astype(np.float32)
    a = L.decompose(layer, w, "tucker", [4, 4], seed=3)
    b = L.decompose(layer, w, "tucker", [4, 4], seed=3)
    np.testing.assert_array_equal(a["reconstruction"], b["reconstruction"])
    assert 0 < a["relative_error"] < 1


def test_scoring():
    assert L.score_level("decomposition_time", 3) == 5
    assert L.score_level("exploration_space", 5.2e5) == 4
    assert L.flexibility_level("per-dim-ranks") == 4
    card = L.scorecard([L.conv([3, 3, 32, 32], [8, 8])], "tt", 2.0)
    assert len(card["scores"]) == 12


def test_errors_surface_as_lrf_error():
    with pytest.raises(L.LrfError):
        L.solution(L.fc(8, 8), "cp", [1])
    with pytest.raises(L.LrfError):
        L.solution(L.fc(8, 8), "svd", [0])
    with pytest.raises(L.LrfError):
        L.original_cost("{not json")


def test_cli_in_process():
    code, out, _ = L.cli("census", "--layer", "3,3,256,512", "--method", "tucker")
    assert code == 0
    assert "131072" in json.dumps(json.loads(out))
    code, _, err = L.cli("frobnicate")
    assert code == 2 and "usage error" in err
