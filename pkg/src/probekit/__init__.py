"""Probe-request capture analysis: parsing, MAC classification, device
clustering, presence density and anonymization, plus a labelled synthetic
trace generator."""

__version__ = "0.1.0"
