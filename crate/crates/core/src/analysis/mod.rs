//! Gradient integration, grid selection and spectral reconstruction.

mod integrate;
mod ldos;

pub use integrate::{choose_grid, cumulative_weights, integrate_gradient, IntegrationScheme, Method};
pub use ldos::{energy_grid, filter_coefficients, ldos, LdosSpectrum};
