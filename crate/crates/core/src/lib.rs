//! Mixed-effects regression for the extreme value index of clustered
//! heavy-tailed data.
//!
//! The cluster-`j` tail index is `exp[(β_A + u_j)'x_A + β_B'x_B]` with
//! `u_j ~ N(0, Σ)`. Exceedances over per-cluster thresholds are fitted by
//! maximizing the marginal likelihood, integrated by adaptive Gauss-Hermite
//! quadrature (or Laplace). [`threshold`] picks the thresholds,
//! [`estimation`] fits, [`inference`] predicts `u_j`, tests slopes and checks
//! fit, and [`mc`] runs simulation studies.

pub mod error;
pub mod rng;
pub mod stats;
pub mod quadrature;
pub mod optim;

pub mod model;
pub mod tail;
pub mod likelihood;
pub mod threshold;
pub mod estimation;
pub mod inference;
pub mod compare;
pub mod mc;
pub mod io;
