"""megaquant: metabolite quantification laboratory for edited MRS spectra.

Synthesises labelled mixture spectra from basis sets, runs the
harmonised preprocessing/export pipeline, trains from-scratch neural
regressors (a CNN and a Y-shaped autoencoder), selects configurations
with Gaussian-process Bayesian optimisation, and scores everything
against ground truth, including a non-negative least-squares baseline.
"""

__version__ = "0.1.0"
