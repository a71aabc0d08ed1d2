"""driftlab: a laboratory for slow passage through pattern-forming instabilities.

Modules:

* :mod:`driftlab.models` -- registry of the four model PDEs (m1-m4).
* :mod:`driftlab.geometry` -- blow-up coordinates, charts, transition maps,
  closed-form slow flows.
* :mod:`driftlab.spectra` -- dispersion relations, unstable bands,
  bifurcation classification.
* :mod:`driftlab.opexpand` -- exact graded expansion of differential
  operators under d/dx -> d/dx + r d/dxbar.
* :mod:`driftlab.derivation` -- symbolic multiple-scales engine producing
  the amplitude (modulation) equations and their coefficients.
* :mod:`driftlab.physical` -- direct pseudospectral solvers for the model
  PDEs with drifting parameter.
* :mod:`driftlab.modulation` -- solvers for the derived non-autonomous
  amplitude equations in each chart.
* :mod:`driftlab.validate` -- reconstruction, error measurement, residuals,
  delay metrics.
* :mod:`driftlab.cli` -- experiment runner.
"""

__version__ = "0.1.0"
