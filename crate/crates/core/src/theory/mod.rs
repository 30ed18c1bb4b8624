//! Convergence bounds, the Lyapunov machinery behind them, a high-accuracy
//! reference solver, and seeded sweeps that check the bounds empirically.

pub mod bounds;
pub mod checks;
pub mod lyapunov;
pub mod reference;

pub use bounds::{
    prop1_bound, prop2_bound, sgd_averaged_iterates, sgd_avg_bound, sgd_init_phase,
    sgd_init_phase_with_rng, sgd_step_size, sigma_sq_at_optimum, TheoryParams,
};
pub use lyapunov::{
    contraction_check, enumerate_next, expected_next_quadratic, lyapunov_q, quadratic_form,
    Contraction, LyapunovSpec, Optimum, Theta, Variant,
};
pub use reference::{reference_solution, reference_solution_from, Reference};
