//! Reference oracles, gradient checks and the acceptance suite behind
//! `selftest`.

mod criteria;
mod gradcheck;
mod oracles;

pub use criteria::{
    alignment, assignment, attention_normalization, collisions, determinism, ego_preservation, gradients,
    run_selftest, run_selftest_timed, template_contracts, CriterionReport, GRADIENT_BUDGET, GRADIENT_CASES,
    SELFTEST_BUDGET,
};
pub use gradcheck::{
    check_bilinear, check_deformable, check_linear, check_matmul, check_softmax, check_temporal_fusion,
    check_v2x_fusion, finite_difference_check, gradient_suite, rel_error, GradCheck, GRAD_EPS, GRAD_TOL, REL_FLOOR,
};
pub use oracles::{
    brute_force_collisions, cells_inside, dense_deformable_attention, energy_difference, exhaustive_assignment,
    point_box_distance,
    sampled_min_distance,
};
