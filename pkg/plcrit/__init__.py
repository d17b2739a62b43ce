"""plcrit: criticality theory of the p-Laplacian on one-dimensional radial reductions."""

__version__ = "0.1.0"
