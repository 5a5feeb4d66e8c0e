//! Predicting error at larger sketch sizes (CS) and later iterations (IHS).

use crate::error::{Error, Result};

/// A fitted error-extrapolation rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtrapolationModel {
    /// `eps(m) = sqrt(m0 / m) * eps_init`, from an estimate at sketch size `m0`.
    SketchSize { m0: usize, eps_init: f64 },
    /// `eps(i) = c_hat * eta_hat^i`, from estimates at iterations 1 and 2.
    Geometric { c_hat: f64, eta_hat: f64 },
}

impl ExtrapolationModel {
    pub fn sketch_size(m0: usize, eps_init: f64) -> Result<Self> {
        if m0 == 0 {
            return Err(Error::invalid("m0 must be positive"));
        }
        if !(eps_init >= 0.0 && eps_init.is_finite()) {
            return Err(Error::invalid(format!(
                "initial estimate must be finite and nonnegative, got {eps_init}"
            )));
        }
        Ok(ExtrapolationModel::SketchSize { m0, eps_init })
    }
}

/// Rescales the initial estimate to sketch size `m >= m0`.
pub fn extrapolate_m(model: &ExtrapolationModel, m: usize) -> Result<f64> {
    let ExtrapolationModel::SketchSize { m0, eps_init } = *model else {
        return Err(Error::invalid("extrapolate_m needs a sketch-size model"));
    };
    if m < m0 {
        return Err(Error::invalid(format!(
            "cannot extrapolate backwards: m={m} < m0={m0}"
        )));
    }
    Ok((m0 as f64 / m as f64).sqrt() * eps_init)
}

/// Two-point geometric fit through `(1, eps1)` and `(2, eps2)`.
pub fn fit_geometric(eps1: f64, eps2: f64) -> Result<ExtrapolationModel> {
    if !(eps1 > 0.0 && eps2 > 0.0 && eps1.is_finite() && eps2.is_finite()) {
        return Err(Error::invalid(format!(
            "geometric fit needs positive finite estimates, got ({eps1}, {eps2})"
        )));
    }
    let eta_hat = eps2 / eps1;
    let c_hat = eps1 / eta_hat;
    Ok(ExtrapolationModel::Geometric { c_hat, eta_hat })
}

/// `c_hat * eta_hat^i`.
pub fn extrapolate_t(model: &ExtrapolationModel, i: usize) -> Result<f64> {
    let ExtrapolationModel::Geometric { c_hat, eta_hat } = *model else {
        return Err(Error::invalid("extrapolate_t needs a geometric model"));
    };
    if i == 0 {
        return Err(Error::invalid("iteration index must be >= 1"));
    }
    Ok(geometric_value(c_hat, eta_hat, i))
}

fn geometric_value(c_hat: f64, eta_hat: f64, i: usize) -> f64 {
    // i = 1, 2 are written out so the fit reproduces its inputs exactly
    match i {
        1 => c_hat * eta_hat,
        2 => c_hat * (eta_hat * eta_hat),
        _ => c_hat * eta_hat.powi(i as i32),
    }
}

/// Smallest `i >= 1` with `c_hat * eta_hat^i <= target`.
pub fn iterations_needed(model: &ExtrapolationModel, target: f64) -> Result<usize> {
    let ExtrapolationModel::Geometric { c_hat, eta_hat } = *model else {
        return Err(Error::invalid("iterations_needed needs a geometric model"));
    };
    if !(target > 0.0) {
        return Err(Error::invalid(format!("target must be positive, got {target}")));
    }
    let value = |i: usize| geometric_value(c_hat, eta_hat, i);
    let first = value(1);
    if first <= target {
        return Ok(1);
    }
    if eta_hat >= 1.0 {
        return Err(Error::NoFiniteHorizon {
            eta_hat,
            target,
            first,
        });
    }
    // The logarithm only seeds the search; the answer is settled by
    // evaluating the model itself on either side of the guess.
    let guess = ((target / c_hat).ln() / eta_hat.ln()).ceil();
    let mut i = if guess.is_finite() && guess >= 1.0 {
        guess.min(i32::MAX as f64) as usize
    } else {
        1
    };
    while i > 1 && value(i - 1) <= target {
        i -= 1;
    }
    while value(i) > target {
        i += 1;
    }
    Ok(i)
}
