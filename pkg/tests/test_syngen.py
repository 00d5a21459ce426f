import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcan.data import dumps_dataset
from mcan.errors import ConfigError, ContractError
from mcan.evaluator import build_fitb
from mcan.syngen import (
    GenConfig,
    LatentRecord,
    dumps_latent,
    generate,
    load_latent,
    oracle_best_item,
    oracle_compat,
    save_latent,
)


def test_noiseless_identity_outfits_share_features():
    ds, lat = generate(GenConfig(style_dim=4, d_img=4, noise_sigma=0.0, identity_maps=True, num_outfits=5, items_per_fine=2))
    for o in ds.outfits.values():
        for i in o.item_ids:
            assert np.array_equal(ds.items[i].features, lat.outfit_styles[o.outfit_id])


def test_single_outfit_plus_distractors():
    cfg = GenConfig(num_coarse=2, fines_per_coarse=2, items_per_fine=3, num_outfits=1, outfit_len=2)
    ds, lat = generate(cfg)
    assert len(ds.outfits) == 1 and len(ds.outfits[0].item_ids) == 2
    assert len(ds.items) == 4 * 3
    assert sum(1 for i in ds.items if i not in lat.item_outfit) == 10


def test_same_seed_same_bytes():
    cfg = GenConfig(num_outfits=30, items_per_fine=5, seed=4)
    (a, la), (b, lb) = generate(cfg), generate(cfg)
    assert dumps_dataset(a) == dumps_dataset(b)
    assert dumps_latent(la) == dumps_latent(lb)
    assert dumps_dataset(generate(GenConfig(num_outfits=30, items_per_fine=5, seed=5))[0]) != dumps_dataset(a)


@pytest.mark.parametrize(
    "kw",
    [
        {"outfit_len": 13},
        {"num_outfits": 0},
        {"noise_sigma": -1.0},
        {"identity_maps": True},
    ],
)
def test_bad_configs(kw):
    with pytest.raises(ConfigError):
        generate(GenConfig(**kw))


@settings(max_examples=25, deadline=None)
@given(
    st.integers(1, 3),
    st.integers(1, 3),
    st.integers(1, 6),
    st.integers(1, 12),
    st.integers(0, 10**6),
)
def test_generated_datasets_are_valid(n_coarse, fpc, per_fine, n_outfits, seed):
    n_fine = n_coarse * fpc
    if n_fine < 2:
        return
    cfg = GenConfig(n_coarse, fpc, per_fine, n_outfits, outfit_len=2, style_dim=3, d_img=4, seed=seed)
    ds, lat = generate(cfg)
    assert all(np.isclose(np.linalg.norm(v), 1.0, atol=1e-12) for v in lat.item_styles.values())
    counts = np.bincount(ds.fine_of_row, minlength=n_fine)
    assert counts.min() >= per_fine
    outfit_styles = [lat.outfit_styles[o] for o in lat.outfit_styles]
    for iid, style in lat.item_styles.items():
        if iid not in lat.item_outfit:
            assert not any(np.array_equal(style, u) for u in outfit_styles)
    sizes = {s: len(v) for s, v in ds.splits.items()}
    assert sizes == {"train": n_outfits * 70 // 100, "val": n_outfits * 15 // 100, "test": n_outfits - n_outfits * 70 // 100 - n_outfits * 15 // 100}


def _toy_latent(rng, n):
    styles = {i: v / np.linalg.norm(v) for i, v in enumerate(rng.normal(size=(n, 3)))}
    return LatentRecord({}, styles, np.zeros((1, 2, 3)), np.zeros((1, 2)))


def test_oracle_best_item_examples(syn):
    ds, lat = syn
    o = ds.outfits[0]
    true = o.item_ids[-1]
    others = [i for i in ds.items if ds.items[i].fine_category == ds.items[true].fine_category and i not in o.item_ids]
    # noise does not touch styles, so the outfit member wins outright
    assert oracle_best_item(lat, o.item_ids[:-1], 0, others[:5] + [true]) == true
    assert oracle_best_item(lat, [0], 0, [7]) == 7
    with pytest.raises(ContractError):
        oracle_best_item(lat, [0], 0, [])


def test_oracle_best_item_exhaustive():
    rng = np.random.default_rng(0)
    for _ in range(100):
        lat = _toy_latent(rng, 12)
        prefix = list(rng.choice(12, size=3, replace=False))
        cands = [int(c) for c in rng.choice(12, size=5, replace=False)]
        centre = sum(lat.item_styles[i] for i in prefix) / 3
        scores = {c: lat.item_styles[c] @ centre for c in cands}
        best = max(scores.values())
        expect = min(c for c in cands if scores[c] == best)
        assert oracle_best_item(lat, prefix, 0, cands) == expect


def test_oracle_best_item_ties_go_to_lowest_id():
    s = np.array([1.0, 0.0])
    lat = LatentRecord({}, {0: s, 5: s, 3: s}, np.zeros((1, 2, 2)), np.zeros((1, 2)))
    assert oracle_best_item(lat, [0], 0, [5, 3]) == 3


def test_oracle_compat_examples():
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    lat = LatentRecord({}, {0: e1, 1: e1, 2: e1, 3: e2}, np.zeros((1, 2, 2)), np.zeros((1, 2)))
    assert oracle_compat(lat, [0, 1, 2]) == pytest.approx(1.0)
    assert oracle_compat(lat, [0, 3]) == 0.0
    with pytest.raises(ContractError):
        oracle_compat(lat, [0])


def test_oracle_compat_double_loop():
    rng = np.random.default_rng(1)
    for _ in range(50):
        lat = _toy_latent(rng, 8)
        ids = list(rng.choice(8, size=int(rng.integers(2, 6)), replace=False))
        pairs = [lat.item_styles[a] @ lat.item_styles[b] for a in ids for b in ids if a != b]
        assert oracle_compat(lat, ids) == pytest.approx(np.mean(pairs), abs=1e-12)
        assert -1.0 - 1e-12 <= oracle_compat(lat, ids) <= 1.0 + 1e-12


def test_latent_round_trip(tmp_path, syn):
    _, lat = syn
    save_latent(lat, tmp_path / "lat.txt")
    assert load_latent(tmp_path / "lat.txt") == lat


def test_oracle_solves_fitb_on_default_config():
    ds, lat = generate(GenConfig(num_outfits=300, seed=2))
    for level in ("easy", "hard"):
        qs = build_fitb(ds, "test", level, seed=0)
        right = sum(oracle_best_item(lat, q.prefix.item_ids, q.blank_category[0], q.choices) == q.choices[q.answer_index] for q in qs)
        assert right / len(qs) >= 0.95
