//! Standard-form conic programs and an embedded solver.

mod admm;
mod cones;
mod ipm;
mod ldl;
mod presolve;
mod program;
mod quadratic;
mod scaling;
mod simplex;
mod solution;
mod solver;
mod sparse;

pub use cones::{margin, project_cone, project_in_place, rotate_in_place, Cone, ConeError};
pub use ldl::{LdlError, LdlFactor, Regularization};
pub use program::{ConicProgram, ProgramError};
pub use quadratic::{reformulate_quadratic, QuadraticError};
pub use simplex::{project_simplex, SimplexError};
pub use solution::{residuals, solution_residuals, ConfigError, Method, ResidualError, Solution, SolverConfig, Status};
pub use solver::{solve, solve_quadratic, SolveError};
pub use sparse::{dot, norm2, norm_inf, CscMatrix};
