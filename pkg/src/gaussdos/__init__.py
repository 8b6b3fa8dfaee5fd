"""Numerical lab for Schrodinger operators with homogeneous Gaussian random potentials.

Subpackages cover the pipeline end to end: sampling correlated Gaussian
fields on grids (``field``), assembling and diagonalizing finite-volume
Hamiltonians (``operator``), Monte Carlo estimation of the integrated
density of states (``ids``), the explicit Lipschitz bound on the
disorder-averaged eigenvalue counting function (``wegner``), and
eigenfunction localization diagnostics (``probes``).  The ``cli`` module
drives batch experiments from config files.
"""

__version__ = "0.1.0"
