"""Predictive process monitoring with from-scratch LSTM networks.

Next activity and timestamp, full case suffix and remaining cycle time
prediction over event logs, with transition-system time baselines.
"""

__version__ = "0.1.0"
