"""Sequential generation of photonic matrix product states from a
Rydberg-blockaded atomic array: pulse synthesis, open-system propagation,
photon retrieval, and fidelity pipelines."""

__version__ = "0.1.0"
