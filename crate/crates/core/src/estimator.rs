//! Residual energy estimators: the full-data reference `‖v − P_S v‖²`, the
//! incomplete-data statistic `‖v_Ω − P_{S_Ω} v_Ω‖²`, and the zero-filling
//! baseline `‖v_Ω − (P_S v₀)_Ω‖²`.
//!
//! Residuals are always formed as vectors and then squared; the energy is
//! never obtained by subtracting the fitted energy from `‖v_Ω‖²`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::vecspace::{
    decompose, project_full, restrict, restrict_vector, DenseVector, SampleIndexSet, SubspaceBasis,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    /// `‖v_Ω − P_{S_Ω} v_Ω‖²`.
    pub t: f64,
    pub m: usize,
    pub n: usize,
    /// `(n/m)·t`, comparable to `‖v − P_S v‖²`.
    pub rescaled: f64,
    /// Numerical rank of `U_Ω`.
    pub rank: usize,
}

/// `‖v − P_S v‖²`.
pub fn full_residual_energy(basis: &SubspaceBasis, v: &DenseVector) -> Result<f64> {
    let (_, y) = decompose(basis, v)?;
    Ok(y.norm_squared())
}

/// Least-squares residual of the observed entries against `U_Ω`.
pub fn residual_energy(
    basis: &SubspaceBasis,
    v: &DenseVector,
    omega: &SampleIndexSet,
) -> Result<ResidualReport> {
    let v_omega = restrict_vector(v, omega)?;
    observed_residual_energy(basis, omega, &v_omega)
}

/// Same as [`residual_energy`] when only the observed values `v_Ω` are
/// available (e.g. a noisy measurement).
pub fn observed_residual_energy(
    basis: &SubspaceBasis,
    omega: &SampleIndexSet,
    v_omega: &DenseVector,
) -> Result<ResidualReport> {
    if v_omega.len() != omega.m() {
        return Err(Error::mismatch(format!(
            "observed vector has length {}, index set has m = {}",
            v_omega.len(),
            omega.m()
        )));
    }
    let rb = restrict(basis, omega)?;
    let qr = rb.factorize();
    let residual = qr.residual(v_omega.as_dvector())?;
    let t = residual.norm_squared();
    let (m, n) = (omega.m(), omega.n());
    Ok(ResidualReport {
        t,
        m,
        n,
        rescaled: n as f64 / m as f64 * t,
        rank: qr.rank(),
    })
}

/// `t₀ = ‖v_Ω − (P_S v₀)_Ω‖²` where `v₀` is `v` with unobserved entries set to
/// zero. Repeated indices write the same value into `v₀` once but are
/// counted once per occurrence in the residual.
pub fn zero_fill_residual(
    basis: &SubspaceBasis,
    v: &DenseVector,
    omega: &SampleIndexSet,
) -> Result<f64> {
    let v_omega = restrict_vector(v, omega)?;
    if basis.n() != v.len() {
        return Err(Error::mismatch(format!(
            "basis has n = {}, vector has length {}",
            basis.n(),
            v.len()
        )));
    }
    let mut filled = DVector::zeros(v.len());
    for &i in omega.indices() {
        filled[i] = v[i];
    }
    let projected = project_full(basis, &DenseVector::from_trusted(filled))?;
    Ok(omega
        .indices()
        .iter()
        .zip(v_omega.as_slice())
        .map(|(&i, &obs)| (obs - projected[i]).powi(2))
        .sum())
}
