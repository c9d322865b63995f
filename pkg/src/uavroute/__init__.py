"""Secure multi-hop UAV relay routing: trust ledger, beam screening and policy learning."""

__version__ = "0.1.0"
