"""Two-layer energy balance model estimation in state space form.

Subpackages and modules:

- ``ssm``: generic linear Gaussian state space engine (filter, smoother,
  simulation) with a compiled hot kernel and a NumPy fallback.
- ``model``: the physical model and its mapping to system matrices.
- ``estimation``: maximum-likelihood fitting with asymptotic uncertainty.
- ``simulation``: synthetic-data generation and parameter-recovery studies.
- ``pipeline``: anomaly-series loading, baseline synchronization, panel assembly.
- ``diagnostics``: unit-root tests and residual diagnostics.
- ``projection``: scenario projections with parameter-uncertainty fans.
- ``cli``: the ``ebmfit`` command-line interface.
"""

__version__ = "0.1.0"
