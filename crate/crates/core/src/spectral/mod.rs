mod cholesky;
mod eigen;

pub use cholesky::{reverse_cuthill_mckee, EnvelopeCholesky, EnvelopePlan};
pub use eigen::{
    normalize_sign, solve_spectrum, solver_registry, DenseSolver, Eigensolver, LanczosSolver, SolveOptions,
    SpectrumReport, DENSE_LIMIT,
};
mod experiments;

pub use experiments::{
    abs_correlation, boundary_derivative, cloud_spectrum, codim2_locality, fold_invariance, mode_correlations,
    neumann_check, spectrum_diff, write_eigenvectors_csv, BoundaryDerivative, FoldReport, LocalityEntry,
    LocalityReport, ModeCorrelation, CONSTANT_SPREAD, NeumannMode, NeumannReport, SolverChoice, LOCALITY_T_GRID, MULTIPLICITY_GAP,
};
