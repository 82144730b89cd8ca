"""Block semidefinite programs: containers, interior-point solver, SDPA I/O."""

from .problem import Block, SDPProblem, SDPSolution, Status, verify_infeasibility_certificate
from .sdpa import SDPAFormatError, export_sdpa, import_sdpa, read_sdpa, write_sdpa
from .solver import SolverOptions, solve

__all__ = [
    "Block", "SDPProblem", "SDPSolution", "Status", "SolverOptions", "solve",
    "verify_infeasibility_certificate", "export_sdpa", "import_sdpa", "read_sdpa",
    "write_sdpa", "SDPAFormatError",
]
