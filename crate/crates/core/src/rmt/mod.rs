//! Random-matrix reference models: the Marchenko–Pastur bulk, the BBP
//! detectability threshold, and seeded synthetic ensembles.

pub mod mp;
mod quad;
pub mod synth;

pub use mp::{
    bbp_threshold, estimate_sigma_sq_from_init, fit_mp_sigma, mp_cdf, mp_edges, mp_ks, MpFit,
    MpParams,
};
pub use quad::integrate;
pub use synth::{
    gen_iid_gaussian, gen_pareto_sample, gen_poisson_levels, gen_spiked, SpikeSpec,
};
