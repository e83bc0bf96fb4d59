"""Discounted online learners for non-stationary streams.

The package bundles:

* synthetic drifting regression streams (`streams`),
* dynamic/discounted regret accounting and conversion identities (`regret`),
* the discounted VAW forecaster for online linear regression (`linreg`),
* discounted AIOLI and a mixability ensemble for online logistic
  regression (`logreg`),
* clipped and clip-free Adam update rules viewed as discounted FTRL,
  plus tuning calculators (`adam`),
* the exponentiated online-to-non-convex driver (`o2nc`),
* numerical oracles for the supporting inequalities (`lemmas`),
* a reproducible experiment CLI (`cli`).
"""

from driftlearn import adam, lemmas, linreg, logreg, o2nc, regret, streams

__all__ = ["adam", "lemmas", "linreg", "logreg", "o2nc", "regret", "streams"]

__version__ = "0.1.0"
