"""
Walker and visit losses on a toy batch
======================================

"""

import numpy as np
from streamassoc import assoc
from streamassoc.backbone import one_hot
from streamassoc.numgrad import Graph

rng = np.random.default_rng(0)

# two labelled source clusters, and targets that mostly sit on the first one
src = np.vstack([rng.normal(-2, 0.3, (5, 2)), rng.normal(2, 0.3, (5, 2))])
y = one_hot(np.repeat([0, 1], 5), 2)
tgt = np.vstack([rng.normal(-2, 0.3, (8, 2)), rng.normal(2, 0.3, (2, 2))])

p_st, p_ts = assoc.transition_arrays(src, tgt)
print("visit probability per target:", np.round(p_st.mean(0), 3))

# losses live on a graph so they can be differentiated
g = Graph()
s, t = g.leaf(src), g.leaf(tgt)
losses = assoc.assoc_loss(s, y, t, assoc.AssocLossConfig(beta=0.5))
print("walker %.4f  visit %.4f  total %.4f" % (losses.walker.value[0, 0],
                                               losses.visit.value[0, 0],
                                               losses.total.value[0, 0]))

grads = g.backward(losses.total)
print("largest target gradient row:", np.round(grads[t][np.abs(grads[t]).sum(1).argmax()], 4))

# weighting each target by 1/(its class share) flattens the visit target
gamma = np.where(np.arange(10) < 8, 0.5 / 0.8, 0.5 / 0.2)
g = Graph()
w = assoc.assoc_loss(g.leaf(src), y, g.leaf(tgt), assoc.AssocLossConfig(gamma=gamma))
print("weighted visit %.4f" % w.visit.value[0, 0])
