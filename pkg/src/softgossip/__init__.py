"""Decentralized SGD over unreliable links.

Simulation and analysis toolkit for gossip-style distributed training where
parameter exchange rides on a lossy, best-effort transport.  Missing entries
are patched with the receiver's own parameters, so every iteration finishes
in a single communication round regardless of packet loss.  The package
bundles the averaging-matrix theory (effective first and second moments of
the realized mixing), a convex optimizer for the mixing weights, a
retransmission baseline, desk-scale training experiments, and a verification
suite, all behind a FastAPI service with a thin command-line client.
"""

__version__ = "0.1.0"
