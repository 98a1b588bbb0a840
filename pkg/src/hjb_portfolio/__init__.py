"""Dynamic portfolio selection through the Riccati-transformed HJB equation.

The pipeline is: asset statistics -> parametric value function alpha(x, phi)
-> quasilinear parabolic PDE for the risk-aversion field phi(x, tau)
-> optimal allocations theta(x, tau).
"""

__version__ = "0.1.0"
