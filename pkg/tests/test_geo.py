import json
import math

import numpy as np
import pytest

from localhealth.data import BlockGroup
from localhealth.geo import (
    ALL_STRATA,
    QuerySpec,
    build_query,
    collection_radius,
    load_keyword_table,
    stratify_and_sample,
    write_query_specs,
)
from localhealth.synthgen import generate_universe


def make_bg(i, region="South", adi=50, population=1200, density=100.0):
    return BlockGroup(
        bg_id=f"T{i:05d}", region=region, adi=adi, population=population,
        centroid=(33.0, -84.0), county_density=density,
    )


def test_forty_strata():
    assert len(ALL_STRATA) == 40
    assert len(set(ALL_STRATA)) == 40


def test_sample_full_universe_gives_25_per_stratum():
    universe = generate_universe(4000, seed=3)  # 100 per stratum by construction
    sampled = stratify_and_sample(universe, per_stratum=25, seed=0)
    assert len(sampled) == 1000
    per_stratum = {}
    for bg in sampled:
        per_stratum.setdefault((bg.region, bg.adi_bin), []).append(bg.bg_id)
    assert len(per_stratum) == 40
    assert all(len(v) == 25 for v in per_stratum.values())
    ids = [bg.bg_id for bg in sampled]
    assert len(ids) == len(set(ids))


def test_sample_exhausts_small_stratum():
    universe = [make_bg(i, adi=5) for i in range(25)]
    for seed in (0, 1, 99):
        sampled = stratify_and_sample(universe, per_stratum=25, seed=seed)
        assert sorted(bg.bg_id for bg in sampled) == sorted(bg.bg_id for bg in universe)


def test_sample_deterministic_and_seed_sensitive():
    universe = generate_universe(400, seed=5)
    a = stratify_and_sample(universe, 5, seed=42)
    b = stratify_and_sample(universe, 5, seed=42)
    c = stratify_and_sample(universe, 5, seed=43)
    assert [x.bg_id for x in a] == [x.bg_id for x in b]
    assert [x.bg_id for x in a] != [x.bg_id for x in c]


def test_sample_errors():
    with pytest.raises(ValueError):
        stratify_and_sample([], 5, seed=0)
    with pytest.raises(ValueError):
        stratify_and_sample([make_bg(0)], 0, seed=0)


def test_sample_frequency_matches_hypergeometric():
    # one stratum of 100, draw 25: inclusion probability is exactly 0.25
    universe = [make_bg(i, region="West", adi=7) for i in range(100)]
    hits = np.zeros(100)
    n_draws = 10_000
    index_of = {bg.bg_id: i for i, bg in enumerate(universe)}
    for seed in range(n_draws):
        for bg in stratify_and_sample(universe, 25, seed=seed):
            hits[index_of[bg.bg_id]] += 1
    freq = hits / n_draws
    sigma = math.sqrt(0.25 * 0.75 / n_draws)
    assert np.all(np.abs(freq - 0.25) < 3 * sigma + 1e-12)


def test_radius_formula_and_clamps():
    # direct evaluation just above the floor
    r = collection_radius(1257, 100.0)
    assert abs(r - math.sqrt(1257 / (math.pi * 100.0))) < 1e-12
    assert 2.0 < r < 2.01
    assert collection_radius(0, 50.0) == 2.0
    assert collection_radius(10_000_000, 1.0) == 10.0
    with pytest.raises(ValueError):
        collection_radius(100, 0.0)
    with pytest.raises(ValueError):
        collection_radius(-1, 10.0)


def test_radius_monotonicity():
    rng = np.random.default_rng(0)
    for _ in range(200):
        pop = int(rng.integers(0, 5_000_000))
        rho = float(rng.uniform(0.5, 5000))
        base = collection_radius(pop, rho)
        assert collection_radius(pop + 1000, rho) >= base - 1e-12
        assert collection_radius(pop, rho * 1.5) <= base + 1e-12


def test_keyword_table_contents():
    table = load_keyword_table()
    assert table["General"] == [" "]
    assert len(table["FI"]) == 19
    assert "food stamps" in table["FI"]
    assert "no groceries" in table["FI"]
    assert len(table["MH"]) == 66
    assert "depressed" in table["MH"]
    assert len(set(table["MH"])) == len(table["MH"])


def test_build_query():
    table = load_keyword_table()
    bg = make_bg(1, population=2000, density=40.0)
    general = build_query(bg, 2017, "General", table)
    assert general.keywords == (" ",)
    assert general.max_results == 1000
    fi = build_query(bg, 2017, "FI", table)
    assert fi.max_results is None
    assert len(fi.keywords) == 19
    # radius and center do not depend on the category
    assert fi.center == general.center
    assert fi.radius_miles == general.radius_miles
    with pytest.raises(ValueError):
        build_query(bg, 2017, "Sports", table)


def test_queryspec_validation():
    with pytest.raises(ValueError):
        QuerySpec("b", 2015, "MH", ("x",), (0.0, 0.0), 1.0)  # radius below floor
    with pytest.raises(ValueError):
        QuerySpec("b", 2015, "MH", (), (0.0, 0.0), 5.0)  # no keywords
    with pytest.raises(ValueError):
        QuerySpec("b", 2015, "MH", ("x",), (0.0, 0.0), 5.0, max_results=1000)  # cap only for General


def test_query_spec_serialization(tmp_path):
    table = load_keyword_table()
    bg = make_bg(2)
    specs = [build_query(bg, 2015, cat, table) for cat in ("MH", "FI", "General")]
    path = tmp_path / "queries.jsonl"
    assert write_query_specs(path, specs) == 3
    lines = path.read_text("utf-8").splitlines()
    assert len(lines) == 3
    rows = [json.loads(line) for line in lines]
    assert rows[2]["max_results"] == 1000
    assert rows[0]["keywords"] == list(table["MH"])
    assert all(round(r["radius_miles"], 6) == r["radius_miles"] for r in rows)
