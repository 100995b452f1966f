"""Spectral Galerkin simulation of stochastic compressible shear-dependent
flow, with a verification-diagnostics suite built around the energy ledger,
empirical Young measures and defect estimates."""

__version__ = "0.1.0"
