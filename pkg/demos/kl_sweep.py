"""
Adaptation accuracy as the target label shift grows
===================================================

A short version of the sweep run by ``streamassoc sweep-kl``: three seeds
and a reduced step budget, so it finishes in about a minute.
"""

from dataclasses import replace

from streamassoc.experiments import REFERENCE_ADAPT, aggregate_kl, kl_trial

adapt = replace(REFERENCE_ADAPT, steps=300)
trials = [kl_trial(kl, seed, adapt_cfg=adapt) for kl in (0.05, 0.4) for seed in range(3)]

print("%-5s %-10s %8s %8s" % ("kl", "mode", "acc", "source"))
for row in aggregate_kl(trials):
    print("%-5s %-10s %8.3f %8.3f" % (row["kl"], row["mode"], row["mean_accuracy"],
                                      row["source_only_mean"]))
