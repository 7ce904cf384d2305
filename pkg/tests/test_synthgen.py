import numpy as np
import pytest

from symclique.chain_mrf import viterbi
from symclique.potentials import Majority, MaxLabelTable, Potts
from symclique.synthgen import (
    FAMILIES,
    CliqueDatasetSpec,
    CorpusSpec,
    gen_clique_dataset,
    gen_corpus,
    lambda_grid,
)


def test_potts_suite_counts_and_ranges():
    probs = gen_clique_dataset(CliqueDatasetSpec("potts"))
    assert len(probs) == 225
    for p in probs:
        assert (p.n, p.R) == (100, 24)
        assert p.psi.min() >= 0.0 and p.psi.max() < 2.0
        assert isinstance(p.potential, Potts)
    lams = sorted({p.potential.lam for p in probs})
    assert lams[0] == 0.8 and lams[-1] == 1.2 and len(lams) == 9


def test_half_open_grid():
    grid = lambda_grid(0.7, 1.1, 0.02, closed=False)
    assert len(grid) == 20
    assert grid[0] == 0.7 and grid[-1] == pytest.approx(1.08)
    with pytest.raises(ValueError):
        lambda_grid(1.0, 0.5, 0.1)
    with pytest.raises(ValueError):
        lambda_grid(0.0, 1.0, 0.0)


@pytest.mark.parametrize("family", FAMILIES)
def test_determinism(family):
    spec = CliqueDatasetSpec(family, n=6, R=4, per_lambda=2, seed=5)
    a, b = gen_clique_dataset(spec), gen_clique_dataset(spec)
    for p, q in zip(a, b):
        assert p.psi.tobytes() == q.psi.tobytes()
        if isinstance(p.potential, Majority):
            assert p.potential.W.tobytes() == q.potential.W.tobytes()
    other = gen_clique_dataset(CliqueDatasetSpec(family, n=6, R=4, per_lambda=2, seed=6))
    assert any(p.psi.tobytes() != q.psi.tobytes() for p, q in zip(a, other))


def test_majority_recipes():
    dense = gen_clique_dataset(CliqueDatasetSpec("maj-dense", n=5, R=8, per_lambda=3))
    for p in dense:
        W, lam = p.potential.W, p.meta["lambda"]
        np.testing.assert_array_equal(W, W.T)
        np.testing.assert_allclose(np.diag(W), lam)
        assert W.min() >= 0.0 and W.max() <= 2.0 * lam
    sparse = gen_clique_dataset(CliqueDatasetSpec("maj-sparse", n=5, R=8, lam_lo=1.0, lam_hi=1.0,
                                                  per_lambda=100, seed=3))
    zero = np.mean([np.mean(p.potential.W == 0.0) for p in sparse])
    assert 0.6 <= zero <= 0.8
    for p in sparse:
        np.testing.assert_array_equal(p.potential.W, p.potential.W.T)


def test_maxlabel_tables_monotone():
    for p in gen_clique_dataset(CliqueDatasetSpec("maxlabel", n=6, R=3, per_lambda=4)):
        assert isinstance(p.potential, MaxLabelTable)
        t = p.potential.tables
        assert t.shape == (3, 7)
        assert np.all(t[:, 0] == 0.0) and np.all(np.diff(t, axis=1) >= 0.0)


def test_conll_scaling():
    probs = gen_clique_dataset(CliqueDatasetSpec("potts", n=10, R=3, per_lambda=1,
                                                 conll_scaling=True))
    assert all(p.potential.lam == pytest.approx(0.09) for p in probs)


def test_spec_validation():
    with pytest.raises(ValueError):
        CliqueDatasetSpec("nope")
    with pytest.raises(ValueError):
        CliqueDatasetSpec("potts", R=1)
    with pytest.raises(ValueError):
        CorpusSpec(noise=1.5)
    with pytest.raises(ValueError):
        CorpusSpec(templates=(("Other", "Title"),))


def test_noise_free_corpus_viterbi_recovers_gold():
    c = gen_corpus(CorpusSpec(ambiguous_fraction=0.0, seed=4))
    assert len(c.instances) == 15
    for inst, y in zip(c.instances, c.gold):
        assert viterbi(inst)[0] == y


def test_ambiguous_instances_fool_viterbi():
    c = gen_corpus(CorpusSpec(seed=2))
    assert len(c.ambiguous) == 3
    for i in c.ambiguous:
        assert viterbi(c.instances[i])[0] != c.gold[i]
    for i in set(range(15)) - set(c.ambiguous):
        assert viterbi(c.instances[i])[0] == c.gold[i]


def test_corpus_determinism():
    a, b = gen_corpus(CorpusSpec(noise=0.2, seed=9)), gen_corpus(CorpusSpec(noise=0.2, seed=9))
    assert a.gold == b.gold and a.templates == b.templates
    for p, q in zip(a.instances, b.instances):
        assert p.tokens == q.tokens and p.node.tobytes() == q.node.tobytes()
