import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mcoc.data import benchmark_spec, generate_synthetic, QualityPolicy
from mcoc.errors import EmptyClass, MissingQuality
from mcoc.model import CentroidBank, init_encoder
from mcoc.numerics import make_rng
from mcoc.scoring import (
    compute_eer,
    export_distributions,
    export_embeddings,
    read_scores_csv,
    score,
    score_dataset,
    write_scores_csv,
)

BANK = CentroidBank(np.array([[1.0, 0.0], [0.0, 1.0]]))


def embedding_with_sims(s0, s1):
    # 2-D embedding whose similarities to BANK rows are exactly (s0, s1)
    return np.array([s0, s1])


def test_score_max():
    assert score(embedding_with_sims(0.8, 0.6), BANK, "max") == 0.8


def test_score_ensemble():
    assert score(embedding_with_sims(0.8, 0.6), BANK, "ensemble") == \
        pytest.approx(0.7)


def test_score_labeled():
    assert score(embedding_with_sims(0.8, 0.6), BANK, "labeled", quality=1) == 0.6


def test_score_labeled_needs_quality():
    with pytest.raises(MissingQuality):
        score(embedding_with_sims(0.8, 0.6), BANK, "labeled")


@given(st.lists(st.floats(-1, 1), min_size=2, max_size=6))
def test_ensemble_never_exceeds_max(sims):
    bank = CentroidBank(np.eye(len(sims)))
    emb = np.array(sims)
    e = score(emb, bank, "ensemble")
    m = score(emb, bank, "max")
    assert e <= m + 1e-15
    if len(set(sims)) == 1:
        assert e == pytest.approx(m)


# ---- EER ----

def eer_oracle(bona, spoof):
    """Brute force: FAR/FRR at every midpoint, crossing by interpolation."""
    uniq = sorted(set(bona) | set(spoof))
    thr = [uniq[0] - 1.0]
    thr += [(a + b) / 2.0 for a, b in zip(uniq, uniq[1:])]
    thr += [uniq[-1] + 1.0]
    pts = []
    for t in thr:
        far = sum(s >= t for s in spoof) / len(spoof)
        frr = sum(b < t for b in bona) / len(bona)
        pts.append((far, frr, t))
    for k, (far, frr, t) in enumerate(pts):
        if far <= frr:
            if far == frr:
                return far, t
            f1, r1, t1 = pts[k - 1]
            d1, d2 = f1 - r1, far - frr
            w = d1 / (d1 - d2)
            return f1 + w * (far - f1), t1 + w * (t - t1)
    raise AssertionError("no crossing")


def test_eer_perfect_separation():
    assert compute_eer([0.9, 0.8], [0.1, 0.2]) == (0.0, 0.5)


def test_eer_inverted_polarity():
    eer, _ = compute_eer([0.1, 0.2], [0.9, 0.8])
    assert eer == 1.0


def test_eer_one_third():
    eer, thr = compute_eer([0.9, 0.6, 0.4], [0.5, 0.3, 0.1])
    assert eer == pytest.approx(1 / 3, abs=1e-12)
    assert thr == pytest.approx(0.45, abs=1e-12)


def test_eer_empty_class():
    with pytest.raises(EmptyClass):
        compute_eer([], [0.5])


def test_eer_matches_oracle_randomized():
    rng = make_rng(100)
    for _ in range(300):
        nb = int(rng.integers(1, 50))
        ns = int(rng.integers(1, 50))
        bona = rng.normal(0.5, 0.4, size=nb)
        spoof = rng.normal(-0.2, 0.4, size=ns)
        if rng.random() < 0.3:  # inject ties
            bona = np.round(bona, 1)
            spoof = np.round(spoof, 1)
        eer, thr = compute_eer(bona, spoof)
        oe, ot = eer_oracle(list(bona), list(spoof))
        assert abs(eer - oe) < 1e-9
        assert abs(thr - ot) < 1e-9


@given(st.floats(min_value=0.1, max_value=10),
       st.floats(min_value=-5, max_value=5))
def test_eer_invariant_under_increasing_affine(scale, shift):
    bona = np.array([0.9, 0.55, 0.4, 0.35])
    spoof = np.array([0.5, 0.45, 0.3, 0.1])
    base, _ = compute_eer(bona, spoof)
    tr, _ = compute_eer(scale * bona + shift, scale * spoof + shift)
    assert tr == pytest.approx(base, abs=1e-9)


# ---- dataset scoring and exports ----

@pytest.fixture(scope="module")
def scored():
    policy = QualityPolicy()
    records = generate_synthetic(benchmark_spec(1, train=False), policy)
    encoder = init_encoder(8, (16,), 8, make_rng(0))
    bank = CentroidBank(np.eye(8)[:2])
    report = score_dataset(records, encoder, bank, "ensemble", policy)
    return records, encoder, bank, report


def test_score_dataset_summary(scored):
    _, _, _, report = scored
    assert report.eer is not None and 0.0 <= report.eer <= 1.0
    assert set(report.class_stats) == {"bonafide", "spoof"}
    assert len(report.scores) == 200


def test_score_dataset_deterministic(scored):
    records, encoder, bank, report = scored
    again = score_dataset(records, encoder, bank, "ensemble", QualityPolicy())
    assert again.scores == report.scores and again.eer == report.eer


def test_score_dataset_no_labels_no_eer(scored):
    records, encoder, bank, _ = scored
    import dataclasses
    bona_only = [r for r in records if r.label == 0]
    rep = score_dataset(bona_only, encoder, bank, "max", QualityPolicy())
    assert rep.eer is None and "spoof" not in rep.class_stats


def test_scores_csv_round_trip(tmp_path, scored):
    _, _, _, report = scored
    path = tmp_path / "scores.csv"
    write_scores_csv(report, path)
    ids, scores, labels = read_scores_csv(path)
    assert ids == report.ids
    assert scores == report.scores  # repr() round-trips float64 exactly
    assert labels == report.labels


def test_histogram_counts_conserved(tmp_path, scored):
    _, _, _, report = scored
    path = tmp_path / "hist.csv"
    export_distributions(report, path, bins=17)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 17
    total = sum(int(r["bona_count"]) + int(r["spoof_count"]) for r in rows)
    assert total == len(report.scores)


def test_histogram_single_class(tmp_path, scored):
    records, encoder, bank, _ = scored
    bona_only = [r for r in records if r.label == 0]
    rep = score_dataset(bona_only, encoder, bank, "ensemble", QualityPolicy())
    path = tmp_path / "hist.csv"
    export_distributions(rep, path, bins=5)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert all(int(r["spoof_count"]) == 0 for r in rows)


def test_export_embeddings(tmp_path, scored):
    records, encoder, _, _ = scored
    path = tmp_path / "emb.csv"
    export_embeddings(records[:10], encoder, path)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 10
    emb = encoder.encode(records[0].features)
    assert float(rows[0]["e0"]) == emb[0]
