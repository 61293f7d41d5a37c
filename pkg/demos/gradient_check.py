"""
Checking gradients against finite differences
=============================================

"""

import numpy as np
from streamassoc.gradcheck import run_suites
from streamassoc.numgrad import grad_check

rng = np.random.default_rng(1)
a = rng.normal(size=(4, 3))
b = rng.normal(size=(3, 5))


def loss(g, x, w):
    # mean log-probability after a row softmax of tanh(x @ w)
    p = g.row_softmax(g.tanh(g.matmul(x, w)))
    return g.mean(g.log(p))


print("hand-written loss, max relative error: %.2e" % grad_check(loss, (a, b)))

# the package suites, then again with the walker gradient sign flipped
for fault in (None, "walker-sign"):
    for r in run_suites(seeds=5, kinds=("euclidean",), fault=fault):
        print("%-4s %-24s %.2e" % ("ok" if r.passed else "BAD", r.name, r.max_error))
