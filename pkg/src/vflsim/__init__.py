"""Deterministic simulator for vertical federated learning.

Feature-holding nodes and a label-holding server train jointly (gradient
relay), blindly (server-issued synthetic labels), or with untrained node
maps; every node-server transfer is metered exactly, and a label-inference
attack harness measures what the synthetic labels leak.
"""

__version__ = "0.1.0"
