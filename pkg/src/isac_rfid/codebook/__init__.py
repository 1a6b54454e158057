"""Sector codebooks: polar grids, relaxed SINR forms, GBD and extraction."""

from .design import (Codebook, Codeword, benchmark_codebook, design_codebook,  # noqa: F401
                     design_sector, evaluate_codebook, rank1_extract, upper_bound)
from .gbd import gbd_sector, solve_primal  # noqa: F401
from .grid import ConstantRadius, EmptyGridError, RadiusProfile, SectorGrid, build_grid  # noqa: F401
from .io import load_codebook, save_codebook  # noqa: F401
from .sdr import sdr_sinr_forms  # noqa: F401
