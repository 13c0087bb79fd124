//! Coherence of subspaces and vectors with respect to the standard basis.

use crate::error::{Error, Result};
use crate::vecspace::{DenseVector, SubspaceBasis};

/// A coherence value together with the coordinate that attains it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceReport {
    pub mu: f64,
    /// Smallest index `j` maximizing `‖P e_j‖²`.
    pub argmax_index: usize,
}

/// `μ(S) = (n/r) max_j ‖P_S e_j‖²`, with `‖P_S e_j‖²` read off as the squared
/// norm of row `j` of the orthonormal basis.
pub fn subspace_coherence(basis: &SubspaceBasis) -> CoherenceReport {
    let (n, r) = (basis.n(), basis.r());
    let (argmax_index, best) = (0..n)
        .map(|j| (j, basis.row_norm_squared(j)))
        .fold((0, f64::NEG_INFINITY), |acc, cand| if cand.1 > acc.1 { cand } else { acc });
    CoherenceReport {
        mu: n as f64 / r as f64 * best,
        argmax_index,
    }
}

/// `μ(z) = n ‖z‖∞² / ‖z‖₂²`.
pub fn vector_coherence(z: &DenseVector) -> Result<CoherenceReport> {
    let (argmax_index, peak) = z
        .as_slice()
        .iter()
        .map(|x| x.abs())
        .enumerate()
        .fold((0, 0.0f64), |acc, cand| if cand.1 > acc.1 { cand } else { acc });
    if peak == 0.0 {
        return Err(Error::ZeroVector);
    }
    // Normalize by the peak so huge entries cannot overflow.
    let energy: f64 = z.as_slice().iter().map(|x| (x / peak).powi(2)).sum();
    Ok(CoherenceReport {
        mu: z.len() as f64 / energy,
        argmax_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecspace::orthonormalize;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn axis_aligned_subspace_is_maximally_coherent() {
        let n = 9;
        let basis = SubspaceBasis::from_orthonormal(DMatrix::from_fn(n, 1, |i, _| (i == 3) as u8 as f64)).unwrap();
        let rep = subspace_coherence(&basis);
        assert_eq!(rep.mu, n as f64);
        assert_eq!(rep.argmax_index, 3);
    }

    #[test]
    fn dft_columns_are_incoherent() {
        // Realified DFT pair for frequency 1 plus the constant column.
        let n = 16;
        let tau = std::f64::consts::TAU;
        let m = DMatrix::from_fn(n, 3, |j, c| match c {
            0 => 1.0 / (n as f64).sqrt(),
            1 => (2.0 / n as f64).sqrt() * (tau * j as f64 / n as f64).cos(),
            _ => (2.0 / n as f64).sqrt() * (tau * j as f64 / n as f64).sin(),
        });
        let basis = orthonormalize(&m).unwrap();
        assert_relative_eq!(subspace_coherence(&basis).mu, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn full_space_has_unit_coherence() {
        let basis = SubspaceBasis::from_orthonormal(DMatrix::identity(5, 5)).unwrap();
        assert_eq!(subspace_coherence(&basis).mu, 1.0);
        let rotated = orthonormalize(&gaussian(6, 6, 1)).unwrap();
        assert_relative_eq!(subspace_coherence(&rotated).mu, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ties_break_to_smallest_index() {
        let basis = SubspaceBasis::from_orthonormal(DMatrix::from_element(4, 1, 0.5)).unwrap();
        assert_eq!(subspace_coherence(&basis).argmax_index, 0);
        let z = DenseVector::new(vec![1.0, -2.0, 2.0]).unwrap();
        assert_eq!(vector_coherence(&z).unwrap().argmax_index, 1);
    }

    #[test]
    fn vector_coherence_examples() {
        let e1 = DenseVector::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(vector_coherence(&e1).unwrap().mu, 4.0);
        let flat = DenseVector::new(vec![1.0; 4]).unwrap();
        assert_eq!(vector_coherence(&flat).unwrap().mu, 1.0);
        let z = DenseVector::new(vec![3.0, 4.0, 0.0, 0.0]).unwrap();
        assert_relative_eq!(vector_coherence(&z).unwrap().mu, 2.56, epsilon = 1e-15);
        let zero = DenseVector::zeros(3).unwrap();
        assert!(matches!(vector_coherence(&zero), Err(Error::ZeroVector)));
    }

    #[test]
    fn vector_coherence_is_scale_invariant() {
        let z = DenseVector::new(gaussian(50, 1, 4).column(0).iter().copied().collect()).unwrap();
        let base = vector_coherence(&z).unwrap().mu;
        for c in [-3.0, 0.125, 1e6, -1e-6] {
            let scaled = vector_coherence(&z.scaled(c)).unwrap().mu;
            assert_relative_eq!(scaled, base, max_relative = 1e-14);
        }
        for c in [2.0, -0.5, 1024.0] {
            assert_eq!(vector_coherence(&z.scaled(c)).unwrap().mu, base);
        }
    }

    #[test]
    fn coherence_is_basis_invariant() {
        let basis = orthonormalize(&gaussian(40, 4, 7)).unwrap();
        let q = orthonormalize(&gaussian(4, 4, 8)).unwrap();
        let rotated = basis.rotated(q.matrix()).unwrap();
        let (a, b) = (subspace_coherence(&basis), subspace_coherence(&rotated));
        assert!((a.mu - b.mu).abs() <= 1e-10);
        assert_eq!(a.argmax_index, b.argmax_index);
    }

    #[test]
    fn vector_and_line_coherence_agree() {
        let z = DenseVector::new(gaussian(30, 1, 12).column(0).iter().copied().collect()).unwrap();
        let line = SubspaceBasis::from_orthonormal(DMatrix::from_column_slice(30, 1, z.scaled(1.0 / z.norm()).as_slice())).unwrap();
        assert!((vector_coherence(&z).unwrap().mu - subspace_coherence(&line).mu).abs() <= 1e-10);
    }

    #[test]
    fn subspace_coherence_within_bounds() {
        for seed in 0..10 {
            let basis = orthonormalize(&gaussian(60, 5, seed)).unwrap();
            let mu = subspace_coherence(&basis).mu;
            assert!((1.0 - 1e-12..=12.0 + 1e-12).contains(&mu));
        }
    }
}
