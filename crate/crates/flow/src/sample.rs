//! Euler integration of the learned flow ODE.

use std::ops::{Add, Mul};

use crate::cfa::CfaConfig;
use crate::model::{Conditioning, ToyDiT};
use crate::train::standard_normal_vec;
use crate::FlowError;
use hdrforge_core::rng::{label, seeded_chacha};

pub const DEFAULT_STEPS: usize = 20;

/// State element type for [`euler_integrate_generic`]: anything closed under
/// `+` and `*` that can represent the step fraction `1 / n`.
pub trait StepScalar: Clone + Add<Output = Self> + Mul<Output = Self> {
    fn reciprocal_of(n: usize) -> Self;
}

impl StepScalar for f64 {
    fn reciprocal_of(n: usize) -> Self {
        1.0 / n as f64
    }
}

/// Euler scheme over any [`StepScalar`]; `velocity` receives the state and
/// the step index `k` of `t = k / steps`.
pub fn euler_integrate_generic<T, F>(x0: Vec<T>, steps: usize, mut velocity: F) -> Result<Vec<T>, FlowError>
where
    T: StepScalar,
    F: FnMut(&[T], usize) -> Result<Vec<T>, FlowError>,
{
    if steps == 0 {
        return Err(FlowError::Config("sampler needs at least one step".into()));
    }
    let h = T::reciprocal_of(steps);
    let mut x = x0;
    for k in 0..steps {
        let u = velocity(&x, k)?;
        if u.len() != x.len() {
            return Err(FlowError::Shape(format!("velocity has {} values, state {}", u.len(), x.len())));
        }
        x = x.into_iter().zip(u).map(|(xi, ui)| xi + h.clone() * ui).collect();
    }
    Ok(x)
}

/// Integrates `dx/dt = u(x, t)` from `t = 0` to `1` in `steps` equal steps.
pub fn euler_integrate<F>(x0: Vec<f64>, steps: usize, mut velocity: F) -> Result<Vec<f64>, FlowError>
where
    F: FnMut(&[f64], f64) -> Result<Vec<f64>, FlowError>,
{
    euler_integrate_generic(x0, steps, |x, k| {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::NonFinite(format!("sampler state before step {}", k + 1)));
        }
        velocity(x, k as f64 / steps as f64)
    })
    .and_then(|x| {
        if x.iter().any(|v| !v.is_finite()) {
            Err(FlowError::NonFinite("sampler endpoint".into()))
        } else {
            Ok(x)
        }
    })
}

/// Initial noise for sampling with `seed`.
pub fn initial_noise(seed: u64, len: usize) -> Vec<f64> {
    standard_normal_vec(&mut seeded_chacha(seed, &[label("sample-noise")]), len)
}

/// Draws `x0 ~ N(0, I)` and integrates the model's velocity field.
pub fn euler_sample(
    model: &ToyDiT,
    cond: &Conditioning,
    cfa: &CfaConfig,
    steps: usize,
    seed: u64,
) -> Result<Vec<f64>, FlowError> {
    let x0 = initial_noise(seed, model.config.latent.len());
    euler_integrate(x0, steps, |x, t| model.velocity(x, t, cond, cfa))
}
