"""Reinforced feature selection by a single traversing agent.

One agent walks the feature list, deciding per feature whether it joins the
working subset.  Episodes are scored by a downstream random forest plus
information-theoretic terms, learned off-policy with weighted Monte Carlo
returns, early-stopped when importance weights degenerate, and nudged early
on by potential-based utility advice.
"""

__version__ = "0.1.0"
