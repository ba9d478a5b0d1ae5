//! Generalized EM fitting of coalesced generalized hyperbolic mixtures.

mod estep;
mod fit;
mod kmeans;
mod mstep;

pub use estep::{e_step, EStepCache, SufficientStats};
pub use fit::{
    aitken_converged, fit, fit_classification, fit_discriminant, init_model, map_rows, predict,
    run_em, FitConfig, FitResult, Init, Scaling,
};
pub use kmeans::{kmeans_init, kmeans_labels};
pub use mstep::{
    fix_column_signs, gamma_objective, gig_q, m_step_gamma, m_step_gig_hyper,
    m_step_location_skewness, m_step_mixing, m_step_phi, phi_floor_hits, rejected_hyper_steps,
    update_gig_pair, GigHyper, MCMSGHD_LAMBDA_FLOOR, OMEGA_MAX, OMEGA_MIN, PHI_FLOOR,
};
