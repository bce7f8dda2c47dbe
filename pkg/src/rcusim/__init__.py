"""Tree RCU state machine and verification harness."""

__version__ = "0.1.0"
