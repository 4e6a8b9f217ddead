"""Scale-adaptive expert routing and density-guided query allocation at desk scale."""

__version__ = "0.1.0"
