"""Ransomware detection from hardware performance counter timeseries.

The package covers the full loop: synthesize or ingest labeled counter
traces, train a small recurrent classifier under several optimizers,
report accuracy and confusion statistics, and score new traces from
their first measurement window.
"""

__version__ = "0.1.0"
