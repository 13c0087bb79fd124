//! Dense vectors, orthonormal subspace bases, row restriction and the
//! projections used by the residual estimators.
//!
//! All index sets are 0-based. Least-squares fits against a restricted basis
//! go through a column-pivoted Householder QR so that the normal equations
//! are never formed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative cutoff below which singular values (or pivoted-QR diagonal
/// entries) count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Maximum absolute deviation of `UᵀU` from the identity accepted for a basis.
pub const ORTHONORMALITY_TOLERANCE: f64 = 1e-10;

/// A finite, non-empty real vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector {
    entries: DVector<f64>,
}

impl DenseVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        Self::from_dvector(DVector::from_vec(entries))
    }

    pub fn from_dvector(entries: DVector<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidSize("vector must have length > 0".into()));
        }
        if let Some(i) = entries.iter().position(|x| !x.is_finite()) {
            return Err(Error::param(format!("entry {i} is not finite")));
        }
        Ok(Self { entries })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::from_dvector(DVector::zeros(n))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.entries.as_slice()
    }

    pub fn as_dvector(&self) -> &DVector<f64> {
        &self.entries
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.entries.data.into()
    }

    pub fn norm_squared(&self) -> f64 {
        self.entries.norm_squared()
    }

    pub fn norm(&self) -> f64 {
        self.entries.norm()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            entries: &self.entries * c,
        }
    }

    pub fn dot(&self, other: &DenseVector) -> f64 {
        self.entries.dot(&other.entries)
    }

    pub(crate) fn from_trusted(entries: DVector<f64>) -> Self {
        Self { entries }
    }
}

impl std::ops::Index<usize> for DenseVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.entries[i]
    }
}

/// An `n × r` matrix with orthonormal columns spanning a subspace `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    matrix: DMatrix<f64>,
}

impl SubspaceBasis {
    /// Wraps a matrix that is already orthonormal, checking the invariant.
    pub fn from_orthonormal(matrix: DMatrix<f64>) -> Result<Self> {
        let (n, r) = matrix.shape();
        if r == 0 || r > n {
            return Err(Error::InvalidSize(format!(
                "basis must satisfy 1 <= r <= n, got n={n}, r={r}"
            )));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("basis has non-finite entries"));
        }
        let deviation = orthonormality_deviation(&matrix);
        if deviation > ORTHONORMALITY_TOLERANCE {
            return Err(Error::param(format!(
                "columns are not orthonormal (max |UᵀU - I| = {deviation:e})"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn r(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Squared Euclidean norm of row `j`, i.e. `‖P_S e_j‖²`.
    pub fn row_norm_squared(&self, j: usize) -> f64 {
        self.matrix.row(j).norm_squared()
    }

    /// Right-multiplies by an `r × r` matrix, e.g. to change to another
    /// orthonormal basis of the same subspace.
    pub fn rotated(&self, q: &DMatrix<f64>) -> Result<Self> {
        if q.shape() != (self.r(), self.r()) {
            return Err(Error::mismatch(format!(
                "rotation must be {0}x{0}, got {1}x{2}",
                self.r(),
                q.nrows(),
                q.ncols()
            )));
        }
        Self::from_orthonormal(&self.matrix * q)
    }
}

/// Maximum absolute entry of `UᵀU − I`.
pub fn orthonormality_deviation(matrix: &DMatrix<f64>) -> f64 {
    let gram = matrix.tr_mul(matrix);
    let r = gram.nrows();
    let mut worst = 0.0f64;
    for i in 0..r {
        for j in 0..r {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// How an index set was drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    #[serde(rename = "with")]
    WithReplacement,
    #[serde(rename = "without")]
    WithoutReplacement,
}

impl SamplingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SamplingMode::WithReplacement => "with",
            SamplingMode::WithoutReplacement => "without",
        }
    }
}

impl std::str::FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "with" => Ok(SamplingMode::WithReplacement),
            "without" => Ok(SamplingMode::WithoutReplacement),
            other => Err(Error::param(format!(
                "sampling mode must be `with` or `without`, got `{other}`"
            ))),
        }
    }
}

/// An ordered list of observed coordinates `Ω ⊂ [0, n)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleIndexSet {
    indices: Vec<usize>,
    mode: SamplingMode,
    n: usize,
}

impl SampleIndexSet {
    pub fn new(indices: Vec<usize>, mode: SamplingMode, n: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidSize("index set must be non-empty".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidSize(format!("index {bad} out of range [0, {n})")));
        }
        if mode == SamplingMode::WithoutReplacement {
            if indices.len() > n {
                return Err(Error::InvalidSize(format!(
                    "m = {} exceeds n = {n} without replacement",
                    indices.len()
                )));
            }
            let mut seen = vec![false; n];
            for &i in &indices {
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidSize(format!(
                        "duplicate index {i} in a without-replacement set"
                    )));
                }
            }
        }
        Ok(Self { indices, mode, n })
    }

    /// The full observation `[0, n)` in natural order.
    pub fn full(n: usize) -> Result<Self> {
        Self::new((0..n).collect(), SamplingMode::WithoutReplacement, n)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn m(&self) -> usize {
        self.indices.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }
}

/// The `m × r` matrix `U_Ω` of basis rows selected by an index set.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedBasis {
    matrix: DMatrix<f64>,
    n: usize,
}

impl RestrictedBasis {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn m(&self) -> usize {
        self.matrix.nrows()
    }

    /// Factorizes `U_Ω` for repeated least-squares fits.
    pub fn factorize(&self) -> PivotedQr {
        PivotedQr::new(&self.matrix)
    }

    /// Numerical rank of `U_Ω`.
    pub fn rank(&self) -> usize {
        self.factorize().rank()
    }
}

/// Orthonormalizes the columns of `raw`, preserving their span and order
/// (the result matches classical Gram–Schmidt up to rounding).
pub fn orthonormalize(raw: &DMatrix<f64>) -> Result<SubspaceBasis> {
    let (n, r) = raw.shape();
    if r == 0 || n == 0 {
        return Err(Error::InvalidSize(format!("cannot orthonormalize a {n}x{r} matrix")));
    }
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("matrix has non-finite entries"));
    }
    if r > n {
        return Err(Error::RankDeficient { rank: n, expected: r });
    }
    let qr = raw.clone().qr();
    let upper = qr.r();
    let singular = upper.singular_values();
    let sigma_max = singular.max();
    let rank = singular.iter().filter(|&&s| s > RANK_TOLERANCE * sigma_max).count();
    if sigma_max == 0.0 || rank < r {
        return Err(Error::RankDeficient { rank, expected: r });
    }
    let mut q = qr.q();
    for j in 0..r {
        if upper[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    SubspaceBasis::from_orthonormal(q)
}

/// Selects the rows of `basis` indexed by `omega`, in order, keeping duplicates.
pub fn restrict(basis: &SubspaceBasis, omega: &SampleIndexSet) -> Result<RestrictedBasis> {
    if omega.n() != basis.n() {
        return Err(Error::mismatch(format!(
            "index set is over n = {}, basis has n = {}",
            omega.n(),
            basis.n()
        )));
    }
    let u = basis.matrix();
    let matrix = DMatrix::from_fn(omega.m(), basis.r(), |i, j| u[(omega.indices()[i], j)]);
    Ok(RestrictedBasis {
        matrix,
        n: basis.n(),
    })
}

/// `v_Ω`: the entries of `v` at the indices of `omega`, in order.
pub fn restrict_vector(v: &DenseVector, omega: &SampleIndexSet) -> Result<DenseVector> {
    if omega.n() != v.len() {
        return Err(Error::mismatch(format!(
            "index set is over n = {}, vector has length {}",
            omega.n(),
            v.len()
        )));
    }
    let entries = DVector::from_iterator(omega.m(), omega.indices().iter().map(|&i| v[i]));
    Ok(DenseVector::from_trusted(entries))
}

fn check_len(basis: &SubspaceBasis, v: &DenseVector) -> Result<()> {
    if basis.n() != v.len() {
        return Err(Error::mismatch(format!(
            "basis has n = {}, vector has length {}",
            basis.n(),
            v.len()
        )));
    }
    Ok(())
}

/// `P_S v = U(Uᵀv)`.
pub fn project_full(basis: &SubspaceBasis, v: &DenseVector) -> Result<DenseVector> {
    check_len(basis, v)?;
    let coeffs = basis.matrix().tr_mul(v.as_dvector());
    Ok(DenseVector::from_trusted(basis.matrix() * coeffs))
}

/// `P_{S_Ω} v_Ω`: the least-squares fit of `v_Ω` by the columns of `U_Ω`.
///
/// Rank-deficient `U_Ω` is handled with pseudoinverse semantics: the result is
/// the orthogonal projection onto the column space of `U_Ω`.
pub fn project_restricted(rb: &RestrictedBasis, v_omega: &DenseVector) -> Result<DenseVector> {
    let qr = rb.factorize();
    let residual = qr.residual(v_omega.as_dvector())?;
    Ok(DenseVector::from_trusted(v_omega.as_dvector() - residual))
}

/// Splits `v` into `x ∈ S` and `y ∈ S⊥` with `x + y = v`.
pub fn decompose(basis: &SubspaceBasis, v: &DenseVector) -> Result<(DenseVector, DenseVector)> {
    let x = project_full(basis, v)?;
    let y = DenseVector::from_trusted(v.as_dvector() - x.as_dvector());
    Ok((x, y))
}

/// Column-pivoted Householder QR of a tall or wide matrix.
///
/// Elimination stops at the first pivot whose remaining column norm falls
/// below `RANK_TOLERANCE` times the first pivot norm; the number of completed
/// steps is the numerical rank.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    rows: usize,
    /// Householder vectors `w_k` (length `rows - k`) with `H_k = I - 2 w wᵀ`.
    reflectors: Vec<DVector<f64>>,
    permutation: Vec<usize>,
    diagonal: Vec<f64>,
}

impl PivotedQr {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let (rows, cols) = a.shape();
        let mut work = a.clone();
        let mut permutation: Vec<usize> = (0..cols).collect();
        let mut reflectors = Vec::with_capacity(rows.min(cols));
        let mut diagonal = Vec::with_capacity(rows.min(cols));
        let mut first_norm = 0.0;

        for k in 0..rows.min(cols) {
            let (pivot, pivot_norm) = (k..cols)
                .map(|j| (j, work.column(j).rows(k, rows - k).norm()))
                .fold((k, -1.0), |best, cand| if cand.1 > best.1 { cand } else { best });
            if k == 0 {
                first_norm = pivot_norm;
            }
            if pivot_norm <= RANK_TOLERANCE * first_norm || pivot_norm == 0.0 {
                break;
            }
            if pivot != k {
                work.swap_columns(k, pivot);
                permutation.swap(k, pivot);
            }

            let x0 = work[(k, k)];
            let alpha = if x0 >= 0.0 { -pivot_norm } else { pivot_norm };
            let mut w = work.column(k).rows(k, rows - k).into_owned();
            w[0] -= alpha;
            let w_norm = w.norm();
            if w_norm > 0.0 {
                w /= w_norm;
                for j in k..cols {
                    let mut col = work.column_mut(j);
                    let mut col = col.rows_mut(k, rows - k);
                    let proj = w.dot(&col);
                    col.axpy(-2.0 * proj, &w, 1.0);
                }
            }
            diagonal.push(alpha);
            reflectors.push(w);
        }

        Self {
            rows,
            reflectors,
            permutation,
            diagonal,
        }
    }

    pub fn rank(&self) -> usize {
        self.reflectors.len()
    }

    /// Column order chosen by pivoting.
    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// Diagonal of `R` in pivot order.
    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    fn apply_qt(&self, b: &mut DVector<f64>) {
        for (k, w) in self.reflectors.iter().enumerate() {
            let mut tail = b.rows_mut(k, self.rows - k);
            let proj = w.dot(&tail);
            tail.axpy(-2.0 * proj, w, 1.0);
        }
    }

    fn apply_q(&self, b: &mut DVector<f64>) {
        for (k, w) in self.reflectors.iter().enumerate().rev() {
            let mut tail = b.rows_mut(k, self.rows - k);
            let proj = w.dot(&tail);
            tail.axpy(-2.0 * proj, w, 1.0);
        }
    }

    /// The least-squares residual `b − U_Ω a*`, formed directly as
    /// `Q [0; (Qᵀb)_{rank..}]`.
    pub fn residual(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        if b.len() != self.rows {
            return Err(Error::mismatch(format!(
                "right-hand side has length {}, matrix has {} rows",
                b.len(),
                self.rows
            )));
        }
        let mut c = b.clone();
        self.apply_qt(&mut c);
        c.rows_mut(0, self.rank()).fill(0.0);
        self.apply_q(&mut c);
        Ok(c)
    }
}
