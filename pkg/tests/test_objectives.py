import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from mcan import autograd as ag
from mcan.data import Pools, TupleSeq
from mcan.errors import ContractError, SamplingError
from mcan.model import McanParams, outfit_loglik
from mcan.objectives import (
    SamplingLevel,
    Triplet,
    eligible_negatives,
    loss_coarse,
    loss_fine,
    loss_triplet,
    sample_negative,
    sample_negatives,
    schedule_level,
    total_loss,
    weighted_total,
)

from conftest import make_dataset, small_model
from oracles import finite_difference, max_rel_err


def _brute_eligible(ds, target, level):
    o = ds.outfits[target[0]]
    t = ds.items[o.item_ids[target[1]]]
    coarse = ds.taxonomy.fine_to_coarse
    out = []
    for i, it in sorted(ds.items.items()):
        if i in o.item_ids:
            continue
        if level == "hard" and it.fine_category != t.fine_category:
            continue
        if level == "semi_hard" and coarse[it.fine_category] != coarse[t.fine_category]:
            continue
        out.append(i)
    return out


@pytest.mark.parametrize("level", ["easy", "semi_hard", "hard"])
def test_eligible_sets_match_enumeration(syn, level):
    ds = syn[0]
    for oid in list(ds.outfits)[:10]:
        for j in range(len(ds.outfits[oid].item_ids)):
            assert eligible_negatives(ds, (oid, j), level) == _brute_eligible(ds, (oid, j), level)


@pytest.mark.parametrize("level", ["easy", "semi_hard", "hard"])
def test_sampler_is_uniform_over_eligible_set(syn, level):
    ds = syn[0]
    target = (0, 1)
    allowed = _brute_eligible(ds, target, level)
    rng = np.random.default_rng(123)
    draws = [sample_negative(ds, rng, target, level) for _ in range(10_000)]
    assert set(draws) <= set(allowed)
    counts = np.array([draws.count(i) for i in allowed])
    assert chisquare(counts).pvalue > 0.01


def test_constraints_hold_for_every_draw(syn):
    ds = syn[0]
    rng = np.random.default_rng(5)
    t = ds.taxonomy
    for oid in list(ds.outfits)[:20]:
        o = ds.outfits[oid]
        for j, iid in enumerate(o.item_ids):
            h = sample_negative(ds, rng, (oid, j), "hard")
            s = sample_negative(ds, rng, (oid, j), SamplingLevel.SEMI_HARD)
            assert h not in o.item_ids and s not in o.item_ids
            assert ds.items[h].fine_category == ds.items[iid].fine_category
            assert t.fine_to_coarse[ds.items[s].fine_category] == t.fine_to_coarse[ds.items[iid].fine_category]


def test_hard_sampling_with_no_rival_names_the_category():
    ds = make_dataset(items_per_fine=1, outfits=((0, 2),))
    with pytest.raises(SamplingError, match="fine category 0"):
        sample_negative(ds, np.random.default_rng(0), (0, 0), "hard")


def test_sample_negatives_distinct_and_excluding(syn):
    ds = syn[0]
    rng = np.random.default_rng(9)
    allowed = _brute_eligible(ds, (3, 0), "semi_hard")
    got = sample_negatives(ds, rng, (3, 0), "semi_hard", 5, exclude=allowed[:2])
    assert len(set(got)) == 5 and not set(got) & set(allowed[:2]) and set(got) <= set(allowed)
    with pytest.raises(SamplingError):
        sample_negatives(ds, rng, (3, 0), "semi_hard", len(allowed) + 1)


def test_same_rng_state_same_draws(syn):
    ds = syn[0]
    a = [sample_negative(ds, np.random.default_rng(4), (2, 1), "easy") for _ in range(3)]
    assert len(set(a)) == 1


@pytest.mark.parametrize("epoch,total,level", [(0, 10, "semi_hard"), (5, 10, "hard"), (0, 1, "semi_hard"), (4, 10, "semi_hard"), (2, 5, "semi_hard"), (3, 5, "hard")])
def test_schedule_examples(epoch, total, level):
    assert schedule_level(epoch, total) == level


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 200), st.data())
def test_schedule_splits_at_ceiling_half(total, data):
    epoch = data.draw(st.integers(0, total - 1))
    half = -(-total // 2)
    assert schedule_level(epoch, total) is (SamplingLevel.SEMI_HARD if epoch < half else SamplingLevel.HARD)


@pytest.mark.parametrize("epoch,total", [(-1, 3), (3, 3), (0, 0)])
def test_schedule_range(epoch, total):
    with pytest.raises(ContractError):
        schedule_level(epoch, total)


# ---------------------------------------------------------------------------
# likelihood losses


def _single_pool_dataset():
    ds = make_dataset(n_fine_per_coarse=(2,), items_per_fine=1, outfits=((0, 1),))
    return ds


def test_trivial_losses_are_zero():
    ds = _single_pool_dataset()
    # one item per fine category, one coarse category; the fine head still has
    # two classes, so the category-free model is needed for an exact zero there
    p = small_model(ds, use_cpl=False)
    seq_f = ds.tuple_seq(0)
    assert loss_fine(p, ds, [seq_f], Pools(ds)).item() == 0.0
    coarse = TupleSeq.of(seq_f.item_ids, "coarse")
    single = Pools(ds, [seq_f.item_ids[1]])
    p = small_model(ds)
    assert loss_coarse(p, ds, [coarse], single).item() == pytest.approx(0.0, abs=1e-15)


def test_losses_match_outfit_loglik(syn, syn_pools):
    ds = syn[0]
    p = small_model(ds, seed=3)
    ids = list(ds.outfits)[:2]
    seqs = [ds.tuple_seq(o) for o in ids]
    want = -np.mean([outfit_loglik(p, ds, s, syn_pools) for s in seqs])
    got = loss_fine(p, ds, seqs, syn_pools).item()
    assert got >= 0 and got == pytest.approx(want, rel=1e-12)
    cs = [TupleSeq.of(s.item_ids, "coarse") for s in seqs]
    want_c = -np.mean([outfit_loglik(p, ds, s, syn_pools) for s in cs])
    assert loss_coarse(p, ds, cs, syn_pools).item() == pytest.approx(want_c, rel=1e-12)


def test_loss_rejects_empty_and_mixed(syn, syn_pools):
    ds = syn[0]
    p = small_model(ds)
    with pytest.raises(ContractError):
        loss_fine(p, ds, [], syn_pools)
    with pytest.raises(ContractError):
        loss_fine(p, ds, [TupleSeq.of(ds.outfits[0].item_ids, "coarse")], syn_pools)


def test_coarse_path_equals_fine_path_on_bijective_taxonomy():
    ds = make_dataset(n_fine_per_coarse=(1, 1, 1), items_per_fine=3, outfits=((0, 1, 2), (2, 0)))
    assert ds.taxonomy.fine_to_coarse == (0, 1, 2)
    p = small_model(ds, seed=8)
    tied = dict(p.items())
    tied["E_coarse"] = p["E_fine"]
    for part in ("W1", "b1", "W2", "b2"):
        tied[f"fprime.{part}"] = p[f"f.{part}"]
    tied["cplC.W"], tied["cplC.b"] = p["cplF.W"], p["cplF.b"]
    p = McanParams(p.config, tied)
    pools = Pools(ds)
    seqs = [ds.tuple_seq(o) for o in ds.outfits]
    coarse = [TupleSeq.of(s.item_ids, "coarse") for s in seqs]
    assert loss_coarse(p, ds, coarse, pools).item() == pytest.approx(loss_fine(p, ds, seqs, pools).item(), abs=1e-12)


# ---------------------------------------------------------------------------
# triplet loss


def _direct_triplet(p, ds, tr, mu):
    """Recompute one hinge term from independently built single-pair scores."""
    from mcan.model import candidate_repr, encode, score

    t = encode(p, ds, [tr.anchor]).t_last()
    cat, g = tr.category

    def s(item):
        u = candidate_repr(p, ds.features[ds.rows([item])], [cat], g)
        return float(score(p, t, ag.reshape(u, (1, 1, -1))).data[0, 0])

    return max(0.0, s(tr.negative) - s(tr.positive) + mu)


def _random_triplets(ds, rng, n, level="hard"):
    out = []
    oids = list(ds.outfits)
    for _ in range(n):
        oid = oids[rng.integers(len(oids))]
        items = ds.outfits[oid].item_ids
        j = int(rng.integers(1, len(items)))
        neg = sample_negative(ds, rng, (oid, j), level)
        anchor = TupleSeq.of(items[:j], "fine")
        out.append(Triplet(anchor, items[j], neg, (ds.items[items[j]].fine_category, "fine")))
    return out


def test_triplet_matches_direct_evaluation(syn):
    ds = syn[0]
    rng = np.random.default_rng(2)
    p = small_model(ds, seed=4)
    for mu in (0.0, 0.05, 1.0):
        batch = _random_triplets(ds, rng, 6)
        want = np.mean([_direct_triplet(p, ds, tr, mu) for tr in batch])
        assert loss_triplet(p, ds, batch, mu).item() == pytest.approx(want, abs=1e-12)


def test_triplet_identical_items_give_margin(syn):
    ds = syn[0]
    o = ds.outfits[0].item_ids
    tr = Triplet(TupleSeq.of(o[:1], "fine"), o[1], o[1], (ds.items[o[1]].fine_category, "fine"))
    assert loss_triplet(small_model(ds), ds, [tr], 0.05).item() == pytest.approx(0.05, abs=1e-15)


def test_triplet_zero_when_margin_beaten(syn):
    ds = syn[0]
    rng = np.random.default_rng(3)
    p = small_model(ds, seed=1)
    batch = _random_triplets(ds, rng, 20)
    # keep only triplets already won by more than the margin, flipping the rest
    fixed = []
    for tr in batch:
        gap = _direct_triplet(p, ds, tr, 0.0)
        if gap > 0:
            tr = Triplet(tr.anchor, tr.negative, tr.positive, tr.category)
        if _direct_triplet(p, ds, tr, 1e-3) == 0.0:
            fixed.append(tr)
    assert fixed
    assert loss_triplet(p, ds, fixed, 1e-3).item() == 0.0


def test_triplet_errors(syn):
    ds = syn[0]
    p = small_model(ds)
    with pytest.raises(ContractError):
        loss_triplet(p, ds, [], 0.05)
    tr = _random_triplets(ds, np.random.default_rng(0), 1)
    with pytest.raises(ContractError):
        loss_triplet(p, ds, tr, -0.1)


# ---------------------------------------------------------------------------
# total loss


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10), st.floats(0, 1), st.floats(0, 1))
def test_weighted_total_arithmetic(a, b, c, l1, l2):
    assert weighted_total(a, b, c, l1, l2) == a + l1 * b + l2 * c
    assert weighted_total(ag.Tensor(a), b, c, l1, l2).item() == pytest.approx(a + l1 * b + l2 * c, rel=1e-15, abs=1e-300)
    assert weighted_total(a, b, c, 0.1, 0.1) == a + 0.1 * b + 0.1 * c


def test_weighted_total_rejects_negative_weights():
    with pytest.raises(ContractError):
        weighted_total(1.0, 1.0, 1.0, -0.1, 0.1)
    assert weighted_total(0.0, 0.0, 0.0) == 0.0


def test_total_loss_with_zero_lambdas_is_loss_fine(syn, syn_pools):
    ds = syn[0]
    p = small_model(ds, seed=6)
    ids = list(ds.outfits)[:4]
    parts = total_loss(p, ds, ids, syn_pools, 0.0, 0.0)
    assert parts.total.item() == pytest.approx(loss_fine(p, ds, [ds.tuple_seq(o) for o in ids], syn_pools).item(), rel=1e-12)


def test_total_loss_parts_recombine(syn, syn_pools):
    ds = syn[0]
    p = small_model(ds, seed=6)
    ids = list(ds.outfits)[:4]
    parts = total_loss(p, ds, ids, syn_pools, 0.1, 0.1, 0.05, "hard", np.random.default_rng(1))
    assert parts.total.item() == pytest.approx(parts.fine + 0.1 * parts.coarse + 0.1 * parts.triplet, rel=1e-12)
    seqs = [ds.tuple_seq(o) for o in ids]
    assert parts.fine == pytest.approx(loss_fine(p, ds, seqs, syn_pools).item(), rel=1e-12)
    coarse = [TupleSeq.of(s.item_ids, "coarse") for s in seqs]
    assert parts.coarse == pytest.approx(loss_coarse(p, ds, coarse, syn_pools).item(), rel=1e-12)


def test_total_loss_triplet_matches_explicit_batch(syn, syn_pools):
    ds = syn[0]
    p = small_model(ds, seed=2)
    ids = list(ds.outfits)[:3]
    parts = total_loss(p, ds, ids, syn_pools, 0.1, 0.1, 0.05, "semi_hard", np.random.default_rng(7))
    # replay the same draws in the same order
    rng = np.random.default_rng(7)
    batch = []
    for oid in ids:
        items = ds.outfits[oid].item_ids
        for j in range(1, len(items)):
            neg = sample_negative(ds, rng, (oid, j), "semi_hard")
            batch.append(Triplet(TupleSeq.of(items[:j], "fine"), items[j], neg, (ds.items[items[j]].fine_category, "fine")))
    assert parts.triplet == pytest.approx(loss_triplet(p, ds, batch, 0.05).item(), abs=1e-12)


def test_total_loss_needs_rng_for_triplets(syn, syn_pools):
    with pytest.raises(ContractError):
        total_loss(small_model(syn[0]), syn[0], [0], syn_pools, level="hard")


def test_total_loss_gradient_is_weighted_sum_and_matches_fd(syn, syn_pools):
    ds = syn[0]
    p = small_model(ds, seed=5, d=4, d_c=2, a_hidden=3, f_hidden=4, s_hidden=3)
    ids = list(ds.outfits)[:2]
    tensors = list(p)

    def grads(l1, l2):
        with ag.Tape() as tape:
            parts = total_loss(p, ds, ids, syn_pools, l1, l2, 0.05, "hard", np.random.default_rng(0))
        g = ag.backward(parts.total, tape, tensors)
        return [g[t] for t in tensors]

    full = grads(0.1, 0.1)
    g_f, g_fc, g_ft = grads(0.0, 0.0), grads(1.0, 0.0), grads(0.0, 1.0)
    for a, f, fc, ft in zip(full, g_f, g_fc, g_ft):
        np.testing.assert_allclose(a, f + 0.1 * (fc - f) + 0.1 * (ft - f), rtol=1e-9, atol=1e-12)

    def value():
        return total_loss(p, ds, ids, syn_pools, 0.1, 0.1, 0.05, "hard", np.random.default_rng(0)).total.item()

    for t, g in zip(tensors, full):
        num = finite_difference(value, [t.data], h=1e-6)
        assert max_rel_err([g], num) < 1e-4, t.name
