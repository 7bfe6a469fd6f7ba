"""
Mixed-dispersion 4NLS Lab
Spectral solvers, stability and dynamics studies for
i psi_t - gamma*Delta^2 psi + beta*Delta psi + |psi|^(2 sigma) psi = 0.
"""

__version__ = "1.0.0"
