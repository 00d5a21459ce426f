import numpy as np
import pytest

from mcan.data import CategoryTaxonomy, Dataset, Item, Outfit, Pools
from mcan.model import ModelConfig, init_params
from mcan.syngen import GenConfig, generate


def small_model(ds, seed=0, **kw):
    widths = dict(d=6, d_c=3, a_hidden=5, f_hidden=7, s_hidden=5)
    widths.update(kw)
    return init_params(ModelConfig.for_dataset(ds, seed=seed, **widths))


def make_dataset(n_fine_per_coarse=(2, 2), items_per_fine=3, outfits=((0, 2), (1, 3, 0)), d_img=3, seed=0):
    """Hand-sized dataset; outfit tuples list fine ids and take the first free item of each."""
    rng = np.random.default_rng(seed)
    fine_to_coarse = [c for c, n in enumerate(n_fine_per_coarse) for _ in range(n)]
    tax = CategoryTaxonomy(
        [f"f{i}" for i in range(len(fine_to_coarse))],
        [f"c{i}" for i in range(len(n_fine_per_coarse))],
        fine_to_coarse,
    )
    items = {}
    for f in range(len(fine_to_coarse)):
        for _ in range(items_per_fine):
            iid = len(items)
            items[iid] = Item(iid, rng.normal(size=d_img), f)
    used = set()
    outs = {}
    for oid, fines in enumerate(outfits):
        ids = []
        for f in fines:
            iid = next(i for i, it in items.items() if it.fine_category == f and i not in used)
            used.add(iid)
            ids.append(iid)
        outs[oid] = Outfit(oid, tuple(ids))
    splits = {"train": list(outs), "val": [], "test": []}
    return Dataset(tax, items.values(), outs.values(), splits, d_img)


@pytest.fixture(scope="session")
def syn():
    """A small synthetic dataset with its latent record."""
    return generate(GenConfig(num_coarse=2, fines_per_coarse=2, items_per_fine=8, num_outfits=40, outfit_len=3, style_dim=3, d_img=5, seed=11))


@pytest.fixture(scope="session")
def syn_pools(syn):
    return Pools(syn[0])


# one "criterion N: PASS|FAIL ..." line per acceptance check, printed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
