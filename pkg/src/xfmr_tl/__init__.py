"""Transfer-learning workbench for NN synthesis of 1:1 on-chip transformer matching networks."""

__version__ = "0.1.0"
