"""
Estimating target class shares by clustering
============================================

"""

import numpy as np
from streamassoc.estimate import (ClassDistribution, agglomerative_cluster,
                                  estimate_target_distribution, estimated_gamma, oracle_gamma)
from streamassoc.sampling import make_divergent_distribution

C = 4
target = make_divergent_distribution(C, 0.4, seed=3)
print("target class shares:", np.round(target.distribution.probs, 3),
      "KL %.3f" % target.achieved_kl)

# sample a batch with those shares around well separated centres
rng = np.random.default_rng(3)
counts = np.round(target.distribution.probs * 80).astype(int)
labels = np.repeat(np.arange(C), counts)
centres = 8 * np.eye(C, 3)
x = centres[labels] + rng.normal(size=(labels.size, 3))

a = agglomerative_cluster(x, C)
print("cluster sizes:", a.sizes)
print("estimated shares:", np.round(estimate_target_distribution(a, C).probs, 3))

est = estimated_gamma(x, C)
orc = oracle_gamma(ClassDistribution.uniform(C), labels)
print("max |estimated - oracle| gamma:", np.abs(est - orc).max())
