"""UAV data collection: slot simulator, optimal RB allocation and a
critic-regularized decision transformer trained offline."""

__version__ = "0.1.0"
