import numpy as np
import pytest

from streamassoc import assoc
from streamassoc.assoc import AssocLossConfig
from streamassoc.backbone import one_hot
from streamassoc.numgrad import ContractError, DimensionError, Graph, grad_check


def _aff(src, tgt, kind):
    g = Graph()
    return assoc.affinity(g.constant(src), g.constant(tgt), kind).value


def test_affinity_examples():
    assert _aff([[1.0, 2.0]], [[1.0, 2.0]], "euclidean")[0, 0] == 0.0
    assert _aff([[1.0, 0.0]], [[0.0, 1.0]], "dot")[0, 0] == 0.0
    assert _aff([[1.0, 2.0]], [[3.0, 4.0]], "euclidean")[0, 0] == pytest.approx(-8.0, abs=1e-12)
    with pytest.raises(DimensionError):
        _aff(np.ones((2, 3)), np.ones((2, 2)), "dot")


def test_euclidean_affinity_matches_pairwise_distance():
    rng = np.random.default_rng(0)
    s, t = rng.normal(size=(5, 3)), rng.normal(size=(4, 3))
    expected = -((s[:, None, :] - t[None, :, :]) ** 2).sum(-1)
    np.testing.assert_allclose(_aff(s, t, "euclidean"), expected, atol=1e-12)


def _trans(a):
    g = Graph()
    p_st, p_ts = assoc.transitions(g.constant(a))
    return p_st.value, p_ts.value


def test_transition_examples():
    p_st, p_ts = _trans(np.full((3, 4), 2.0))
    np.testing.assert_allclose(p_st, 0.25)
    assert p_st.shape == (3, 4) and p_ts.shape == (4, 3)
    p_st, _ = _trans(np.array([[0.0, 1000.0, 0.0]]))
    assert p_st[0, 1] == pytest.approx(1.0)
    p_st, _ = _trans(np.array([[0.0, np.log(3.0)]]))
    np.testing.assert_allclose(p_st, [[0.25, 0.75]], rtol=1e-15)


def test_round_trip_examples():
    g = Graph()
    np.testing.assert_allclose(assoc.round_trip(g.constant([[1.0]]), g.constant([[1.0]])).value, [[1.0]])
    half = g.constant(np.full((2, 2), 0.5))
    np.testing.assert_allclose(assoc.round_trip(half, half).value, 0.5)
    with pytest.raises(DimensionError):
        assoc.round_trip(g.constant(np.ones((2, 3))), g.constant(np.ones((2, 2))))


def test_round_trip_rows_sum_to_one():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        ns, nt = rng.integers(1, 9, size=2)
        g = Graph()
        p_st = g.row_softmax(rng.normal(size=(ns, nt)) * 3)
        p_ts = g.row_softmax(rng.normal(size=(nt, ns)) * 3)
        np.testing.assert_allclose(assoc.round_trip(p_st, p_ts).value.sum(axis=1), 1.0, atol=1e-9)


def test_equality_matrix_examples():
    np.testing.assert_array_equal(assoc.equality_matrix(one_hot([0, 0], 2)), [[0.5, 0.5], [0.5, 0.5]])
    np.testing.assert_array_equal(assoc.equality_matrix(one_hot([0, 1], 2)), np.eye(2))
    E = assoc.equality_matrix(one_hot([0, 0, 1], 2))
    np.testing.assert_array_equal(E[0], [0.5, 0.5, 0.0])
    np.testing.assert_array_equal(E[2], [0.0, 0.0, 1.0])
    with pytest.raises(ContractError):
        assoc.equality_matrix(np.array([[0.5, 0.5]]))


def test_walker_loss_examples():
    g = Graph()
    E = assoc.equality_matrix(one_hot([0, 0], 2))
    loss = assoc.walker_loss(E, g.constant(np.full((2, 2), 0.5)))
    assert loss.value[0, 0] == pytest.approx(np.log(2), abs=1e-15)
    perfect = assoc.walker_loss(np.eye(3), g.constant(np.eye(3)))
    assert perfect.value[0, 0] == pytest.approx(0.0, abs=1e-11)
    with pytest.raises(DimensionError):
        assoc.walker_loss(np.eye(2), g.constant(np.eye(3)))


def test_walker_loss_permutation_invariant():
    rng = np.random.default_rng(4)
    labels = one_hot([0, 1, 1, 2, 0], 3)
    rt = rng.dirichlet(np.ones(5), size=5)
    perm = rng.permutation(5)
    E = assoc.equality_matrix(labels)
    g = Graph()
    a = assoc.walker_loss(E, g.constant(rt)).value[0, 0]
    b = assoc.walker_loss(E[np.ix_(perm, perm)], g.constant(rt[np.ix_(perm, perm)])).value[0, 0]
    assert a == pytest.approx(b, rel=1e-14)


def test_visit_probs_examples():
    g = Graph()
    np.testing.assert_allclose(assoc.visit_probs(g.constant(np.full((3, 4), 0.25))).value, 0.25)
    np.testing.assert_array_equal(assoc.visit_probs(g.constant([[1.0, 0.0], [1.0, 0.0]])).value, [[1.0, 0.0]])
    np.testing.assert_array_equal(assoc.visit_probs(g.constant(np.eye(2))).value, [[0.5, 0.5]])


def test_visit_loss_examples():
    g = Graph()
    vp = g.constant([[0.5, 0.5]])
    assert assoc.visit_loss(vp).value[0, 0] == pytest.approx(np.log(2), abs=1e-15)
    weighted = assoc.visit_loss(vp, [0.625, 2.5]).value[0, 0]
    assert weighted == pytest.approx(-0.5 * (0.625 + 2.5) * np.log(0.5), abs=1e-12)
    assert weighted == pytest.approx(1.0830, abs=5e-5)
    with pytest.raises(DimensionError):
        assoc.visit_loss(vp, [1.0, 1.0, 1.0])
    with pytest.raises(ContractError):
        assoc.visit_loss(vp, [1.0, 0.0])


def test_visit_loss_gamma_ones_is_bitwise_unweighted():
    rng = np.random.default_rng(5)
    g = Graph()
    vp = g.constant(rng.dirichlet(np.ones(7))[None, :])
    assert assoc.visit_loss(vp).value.tobytes() == assoc.visit_loss(vp, np.ones(7)).value.tobytes()


def test_renormalized_gamma_sums_to_target_count():
    w = assoc.visit_weights(4, [1.0, 2.0, 3.0, 6.0], renormalize=True)
    assert w.sum() == pytest.approx(1.0)


def _embeddings(seed, ns=4, nt=5, d=3):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(ns, d)), rng.normal(size=(nt, d)), one_hot(rng.integers(0, 2, ns), 2)


def test_assoc_loss_beta_linearity():
    xs, xt, y = _embeddings(0)
    g = Graph()
    s, t = g.constant(xs), g.constant(xt)
    l0 = assoc.assoc_loss(s, y, t, AssocLossConfig(beta=0.0))
    assert l0.total.value[0, 0] == l0.walker.value[0, 0]
    a = assoc.assoc_loss(s, y, t, AssocLossConfig(beta=0.25))
    b = assoc.assoc_loss(s, y, t, AssocLossConfig(beta=0.5))
    assert a.walker.value[0, 0] == b.walker.value[0, 0]
    diff_a = a.total.value[0, 0] - a.walker.value[0, 0]
    diff_b = b.total.value[0, 0] - b.walker.value[0, 0]
    assert diff_b == pytest.approx(2 * diff_a, rel=1e-12)


def test_config_validation():
    with pytest.raises(ContractError):
        AssocLossConfig(beta=-1.0)
    with pytest.raises(ContractError):
        AssocLossConfig(affinity="cosine")
    with pytest.raises(ContractError):
        AssocLossConfig(gamma=[1.0, -2.0])


def test_translation_invariance_of_euclidean_losses():
    xs, xt, y = _embeddings(6)
    shift = np.array([3.0, -1.5, 0.7])
    cfg = AssocLossConfig(beta=0.5, affinity="euclidean")
    g = Graph()
    a = assoc.assoc_loss(g.constant(xs), y, g.constant(xt), cfg)
    b = assoc.assoc_loss(g.constant(xs + shift), y, g.constant(xt + shift), cfg)
    assert abs(a.walker.value[0, 0] - b.walker.value[0, 0]) < 1e-9
    assert abs(a.visit.value[0, 0] - b.visit.value[0, 0]) < 1e-9


def test_row_shift_invariance_of_transitions():
    rng = np.random.default_rng(7)
    a = rng.normal(size=(4, 6))
    shifted = a.copy()
    shifted[2] += 123.0
    np.testing.assert_allclose(_trans(a)[0][2], _trans(shifted)[0][2], atol=1e-12)


@pytest.mark.parametrize("kind", ["dot", "euclidean"])
def test_assoc_gradient_on_random_4x3_embeddings(kind):
    xs, xt, y = _embeddings(8, 4, 4, 3)
    gamma = np.random.default_rng(8).uniform(0.5, 3.0, size=4)
    cfg = AssocLossConfig(beta=0.5, affinity=kind, gamma=gamma)
    err = grad_check(lambda g, s, t: assoc.assoc_loss(s, y, t, cfg).total, (xs, xt), step=1e-5)
    assert err < 1e-4
