"""Photon-mediated 4x4 CNOT between two spin-pair qudits in cavities."""

__version__ = "0.1.0"
