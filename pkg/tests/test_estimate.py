import numpy as np
import pytest
from scipy.cluster.hierarchy import fcluster, linkage

from streamassoc.estimate import (ClassDistribution, ClusterAssignment, agglomerative_cluster,
                                  estimate_target_distribution, estimated_gamma, gamma_weights,
                                  oracle_gamma)
from streamassoc.numgrad import ContractError


def same_partition(a, b):
    a, b = np.asarray(a), np.asarray(b)
    pairs = set(zip(a.tolist(), b.tolist()))
    return len(pairs) == len(set(a.tolist())) == len(set(b.tolist()))


def two_blobs(seed, n=100, sigma=0.1, gap=10.0, dim=2):
    rng = np.random.default_rng(seed)
    truth = (np.arange(n) >= n // 2).astype(int)
    rng.shuffle(truth)
    x = rng.normal(scale=sigma, size=(n, dim))
    x[:, 0] += gap * truth
    return x, truth


def test_k_equal_n_gives_singletons():
    a = agglomerative_cluster(np.random.default_rng(0).normal(size=(5, 2)), 5)
    assert sorted(a.labels.tolist()) == list(range(5))
    np.testing.assert_array_equal(a.sizes, 1)


def test_nearest_pair_merges_first():
    a = agglomerative_cluster(np.array([[0.0], [0.1], [10.0]]), 2)
    assert a.labels.tolist() == [0, 0, 1]
    assert a.sizes.tolist() == [2, 1]


def test_k_larger_than_n_is_rejected():
    with pytest.raises(ContractError):
        agglomerative_cluster(np.zeros((2, 2)), 3)


def test_two_blobs_recovered_every_seed():
    for seed in range(100):
        x, truth = two_blobs(seed)
        assert same_partition(agglomerative_cluster(x, 2).labels, truth), seed


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("k", [2, 3, 5])
def test_matches_scipy_average_linkage(seed, k):
    # independent reference: scipy's average-linkage dendrogram cut at k clusters
    x = np.random.default_rng(seed).normal(size=(40, 3))
    ref = fcluster(linkage(x, method="average", metric="euclidean"), k, criterion="maxclust")
    assert same_partition(agglomerative_cluster(x, k).labels, ref)


def test_deterministic_and_permutation_consistent():
    x = np.random.default_rng(3).normal(size=(30, 4))
    a, b = agglomerative_cluster(x, 4), agglomerative_cluster(x, 4)
    np.testing.assert_array_equal(a.labels, b.labels)
    perm = np.random.default_rng(4).permutation(30)
    c = agglomerative_cluster(x[perm], 4)
    assert same_partition(a.labels[perm], c.labels)


def test_sizes_sum_and_ids_nonempty():
    a = agglomerative_cluster(np.random.default_rng(5).normal(size=(25, 2)), 6)
    assert a.sizes.sum() == 25
    assert set(a.labels.tolist()) == set(range(6))
    assert np.all(a.sizes > 0)


@pytest.mark.parametrize("sizes,expected", [
    ([5, 5], [0.5, 0.5]),
    ([8, 2], [0.8, 0.2]),
    ([6, 3, 1], [0.6, 0.3, 0.1]),
])
def test_estimate_distribution_from_sizes(sizes, expected):
    labels = np.repeat(np.arange(len(sizes)), sizes)
    a = ClusterAssignment(labels, np.array(sizes))
    np.testing.assert_allclose(estimate_target_distribution(a, len(sizes)).probs, expected, rtol=1e-15)
    with pytest.raises(ContractError):
        estimate_target_distribution(a, len(sizes) + 1)


def test_gamma_uniform_clusters_are_one():
    a = ClusterAssignment(np.array([0, 1, 0, 1]), np.array([2, 2]))
    np.testing.assert_allclose(gamma_weights(ClassDistribution.uniform(2), a), 1.0)


def test_gamma_for_eighty_twenty_split():
    labels = np.array([0] * 8 + [1] * 2)
    a = ClusterAssignment(labels, np.array([8, 2]))
    dist = estimate_target_distribution(a, 2)
    gamma = gamma_weights(ClassDistribution.uniform(2), a, dist)
    np.testing.assert_allclose(gamma[:8], 0.5 / 0.8)
    np.testing.assert_allclose(gamma[8:], 0.5 / 0.2)
    np.testing.assert_array_equal(oracle_gamma(ClassDistribution.uniform(2), labels), gamma)


def test_gamma_requires_uniform_source():
    a = ClusterAssignment(np.array([0, 1]), np.array([1, 1]))
    with pytest.raises(ContractError):
        gamma_weights(ClassDistribution(np.array([0.7, 0.3])), a)


def test_oracle_gamma_examples():
    u = ClassDistribution.uniform(3)
    np.testing.assert_allclose(oracle_gamma(u, [0, 1, 2, 2, 1, 0]), 1.0)
    labels = np.array([0] * 9 + [1])
    gamma = oracle_gamma(ClassDistribution.uniform(2), labels)
    np.testing.assert_allclose(gamma[:9], 5 / 9)
    np.testing.assert_allclose(gamma[9], 5.0)


def test_gamma_inverts_cluster_frequencies():
    for seed in range(20):
        x = np.random.default_rng(seed).normal(size=(50, 3))
        C = 4
        a = agglomerative_cluster(x, C)
        dist = estimate_target_distribution(a, C)
        gamma = gamma_weights(ClassDistribution.uniform(C), a, dist)
        total = np.sum(gamma * dist.probs[a.labels] * C) / 50
        assert total == pytest.approx(1.0, abs=1e-12)


def test_separated_data_gives_exact_distribution():
    rng = np.random.default_rng(9)
    counts = [30, 15, 5]
    truth = np.repeat(np.arange(3), counts)
    centers = np.array([[0.0, 0.0], [20.0, 0.0], [0.0, 20.0]])
    x = centers[truth] + rng.normal(scale=0.1, size=(50, 2))
    dist = estimate_target_distribution(agglomerative_cluster(x, 3), 3)
    assert sorted(dist.probs.tolist()) == sorted((np.array(counts) / 50).tolist())
    gamma = estimated_gamma(x, 3)
    np.testing.assert_allclose(gamma, oracle_gamma(ClassDistribution.uniform(3), truth))


def test_class_distribution_validation():
    with pytest.raises(ContractError):
        ClassDistribution(np.array([0.5, 0.6]))
    with pytest.raises(ContractError):
        ClassDistribution(np.array([1.5, -0.5]))
