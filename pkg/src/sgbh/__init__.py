"""Spectral simulation and deviation analysis for the stochastic generalized
Burgers-Huxley equation on (0,1) with Dirichlet boundary conditions.

Subpackages by capability:

spectral    sine basis, heat kernel (images and eigen), semigroup, kernel-estimate fits
model       parameters, polynomial nonlinearities and derivatives, noise coefficient family
noise       Q-Wiener realizations, Brownian-bridge refinement, Cameron-Martin controls
solvers     exponential-Euler mild-form integrators for all five evolution problems
deviation   speed functions, minimum-energy rate function, Gramian, tail estimates
montecarlo  coupled-epsilon ensembles, convergence-rate fits, OU oracle
cli         configuration files and the command-line entry point
"""

from . import cli, deviation, model, montecarlo, noise, solvers, spectral

__version__ = "0.1.0"
