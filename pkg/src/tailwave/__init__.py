"""Late-time tails of linear and quasilinear waves on Schwarzschild.

Modules: ``geometry`` (metric, tortoise map, null frames), ``coefficients``
(quasilinear profiles and the symbol-class check), ``evolution``
(double-null characteristic solver), ``analysis`` (tail fits and pointwise
diagnostics), ``lightcone`` (backward-cone quadrature), ``iteration``
(exact decay-exponent bookkeeping) and ``cli``.
"""

__version__ = "0.1.0"
