"""p-Wasserstein distances, Stein exchangeable pairs and Cramér-type moderate deviations.

Modules: ``core`` (special functions, summand laws), ``wasserstein``
(transport distances), ``models`` (samplers and exchangeable pairs),
``bounds`` (closed-form bound shapes), ``oracles`` (exact small-instance
laws), ``montecarlo`` (tail ratios and scaling fits) and ``cli``.
"""

__version__ = "0.1.0"
