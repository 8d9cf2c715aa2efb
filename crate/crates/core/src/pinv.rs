//! Dense Moore–Penrose pseudoinverses and one-feature appends.
//!
//! A design matrix `A` is `n × d`: rows are training points, columns are the
//! revealed features. Revealing feature `d + 1` appends a column `b`, which
//! is the same as stacking the row `bᵀ` under `Aᵀ`. Two closed-form updates
//! cover the regimes away from `d = n`:
//!
//! * underparametrized (`d + 1 < n`, independent columns): with
//!   `P = AA⁺`, `Q = bbᵀ/‖b‖²` and `z = bᵀ(I - P)b / ‖b‖²`,
//!   `[Aᵀ; bᵀ]⁺ = [(I - Q)(I + PQ/z)(A⁺)ᵀ, (I - P)b / bᵀ(I - P)b]`;
//! * overparametrized (`n ≤ d`, independent rows): with `G = (AAᵀ)⁻¹` and
//!   `u = bᵀG / (1 + bᵀGb)`, `[Aᵀ; bᵀ]⁺ = [(I - bu)ᵀ(A⁺)ᵀ, uᵀ]`.
//!
//! [`pinv_direct`] is the SVD reference both updates are checked against.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Smallest admissible `z` for the underparametrized update.
pub const Z_THRESHOLD: f64 = 1e-10;
/// Appends between forced recomputations from scratch.
pub const REFRESH_INTERVAL: usize = 64;
/// Largest admissible `λ_max(G) · tr(AAᵀ)`, i.e. the Gram pivot bound.
pub const GRAM_CONDITION_LIMIT: f64 = 1e12;
/// Relative singular-value cutoff, scaled by `max(n, d)`.
pub const RCOND: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PinvError {
    #[error("matrix must have at least one row and one column")]
    Empty,
    #[error("matrix has a non-finite entry")]
    NonFinite,
    #[error("expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("singular update: {0}")]
    SingularUpdate(&'static str),
    #[error("incremental update refused at n = {n}, d = {d}")]
    BoundaryRegime { n: usize, d: usize },
    #[error("no exact minimum-norm solution: residual {residual:e} exceeds {tolerance:e}")]
    Infeasible { residual: f64, tolerance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `d < n`.
    Under,
    /// `d = n`.
    Boundary,
    /// `d > n`.
    Over,
}

impl Regime {
    pub fn of(n: usize, d: usize) -> Self {
        match d.cmp(&n) {
            std::cmp::Ordering::Less => Regime::Under,
            std::cmp::Ordering::Equal => Regime::Boundary,
            std::cmp::Ordering::Greater => Regime::Over,
        }
    }
}

/// `n × d` design matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix(DMatrix<f64>);

impl DesignMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self, PinvError> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(PinvError::Empty);
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(PinvError::NonFinite);
        }
        Ok(Self(entries))
    }

    pub fn from_row_slice(n: usize, d: usize, data: &[f64]) -> Result<Self, PinvError> {
        if data.len() != n * d {
            return Err(PinvError::DimensionMismatch {
                expected: n * d,
                got: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(n, d, data))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn d(&self) -> usize {
        self.0.ncols()
    }

    pub fn regime(&self) -> Regime {
        Regime::of(self.n(), self.d())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    fn with_column(&self, b: &DVector<f64>) -> DesignMatrix {
        let d = self.d();
        let mut m = self.0.clone().insert_column(d, 0.0);
        m.set_column(d, b);
        DesignMatrix(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Cache {
    None,
    /// `P = AA⁺`, kept for full-column-rank underparametrized states.
    Projection(DMatrix<f64>),
    /// `G = (AAᵀ)⁻¹`, kept for full-row-rank states with `n ≤ d`.
    InverseGram(DMatrix<f64>),
}

/// A design matrix together with its pseudoinverse. Immutable; appends
/// return a new state.
#[derive(Debug, Clone, PartialEq)]
pub struct PinvState {
    a: DesignMatrix,
    pinv: DMatrix<f64>,
    regime: Regime,
    cond_estimate: f64,
    cache: Cache,
    appends: usize,
}

impl PinvState {
    pub fn design(&self) -> &DesignMatrix {
        &self.a
    }

    pub fn a(&self) -> &DMatrix<f64> {
        self.a.matrix()
    }

    /// `A⁺`, `d × n`.
    pub fn pinv(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    pub fn d(&self) -> usize {
        self.a.d()
    }

    /// Ratio of extreme kept singular values for direct states (a Frobenius
    /// bound `‖A‖_F‖A⁺‖_F` after updates). `+∞` flags rank deficiency.
    pub fn cond_estimate(&self) -> f64 {
        self.cond_estimate
    }

    /// Appends applied since the last computation from scratch.
    pub fn appends_since_refresh(&self) -> usize {
        self.appends
    }

    /// `P = AA⁺` when the state keeps it.
    pub fn projection(&self) -> Option<&DMatrix<f64>> {
        match &self.cache {
            Cache::Projection(p) => Some(p),
            _ => None,
        }
    }

    /// `G = (AAᵀ)⁻¹` when the state keeps it.
    pub fn inverse_gram(&self) -> Option<&DMatrix<f64>> {
        match &self.cache {
            Cache::InverseGram(g) => Some(g),
            _ => None,
        }
    }

    /// `(Aᵀ)⁺ x = (A⁺)ᵀ x`, the minimum-norm preimage of `x` under `Aᵀ`.
    pub fn min_norm_image(&self, x: &DVector<f64>) -> Result<DVector<f64>, PinvError> {
        check_len(x, self.d())?;
        Ok(self.pinv.tr_mul(x))
    }

    /// `xᵀ(I - A⁺A)x`, the squared distance from `x` to the row space of `A`.
    pub fn null_space_quadratic(&self, x: &DVector<f64>) -> Result<f64, PinvError> {
        check_len(x, self.d())?;
        let ax = self.a() * x;
        let proj = &self.pinv * ax;
        let resid = x - proj;
        Ok(resid.norm_squared())
    }

    /// Appends the feature column `b`, choosing the update that matches the
    /// regime and falling back to [`pinv_direct`] where neither applies.
    pub fn append(&self, b: &DVector<f64>) -> Result<PinvState, PinvError> {
        check_len(b, self.n())?;
        let attempt = if self.d() + 1 < self.n() {
            stack_row_pinv_under(self, b)
        } else if self.n() <= self.d() {
            stack_row_pinv_over(self, b)
        } else {
            Err(PinvError::BoundaryRegime {
                n: self.n(),
                d: self.d(),
            })
        };
        match attempt {
            Ok(s) => Ok(s),
            Err(PinvError::SingularUpdate(_)) | Err(PinvError::BoundaryRegime { .. }) => {
                Ok(pinv_direct(&self.a.with_column(b)))
            }
            Err(e) => Err(e),
        }
    }

    fn refreshed(self) -> PinvState {
        if self.appends >= REFRESH_INTERVAL {
            pinv_direct(&self.a)
        } else {
            self
        }
    }
}

fn check_len(v: &DVector<f64>, expected: usize) -> Result<(), PinvError> {
    if v.len() != expected {
        return Err(PinvError::DimensionMismatch {
            expected,
            got: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(PinvError::NonFinite);
    }
    Ok(())
}

/// Pseudoinverse through the SVD, truncating singular values below
/// `σ_max · 1e-12 · max(n, d)`. Never fails; rank deficiency shows up as an
/// infinite `cond_estimate`.
pub fn pinv_direct(a: &DesignMatrix) -> PinvState {
    let (n, d) = (a.n(), a.d());
    let svd = a.matrix().clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s = &svd.singular_values;
    let s_max = s.iter().cloned().fold(0.0, f64::max);
    let cutoff = s_max * RCOND * n.max(d) as f64;
    let kept: Vec<usize> = (0..s.len()).filter(|&i| s[i] > cutoff && s[i] > 0.0).collect();

    let mut pinv = DMatrix::zeros(d, n);
    for &i in &kept {
        let inv = 1.0 / s[i];
        // pinv += v_i * u_iᵀ / s_i
        pinv.ger(inv, &v_t.row(i).transpose(), &u.column(i), 1.0);
    }

    let rank = kept.len();
    let full = rank == n.min(d);
    let cond_estimate = if full && rank > 0 {
        let s_min = kept.iter().map(|&i| s[i]).fold(f64::INFINITY, f64::min);
        s_max / s_min
    } else {
        f64::INFINITY
    };

    let cache = if full && d < n {
        let mut p = DMatrix::zeros(n, n);
        for &i in &kept {
            p.ger(1.0, &u.column(i), &u.column(i), 1.0);
        }
        Cache::Projection(p)
    } else if full && n <= d {
        let mut g = DMatrix::zeros(n, n);
        for &i in &kept {
            g.ger(1.0 / (s[i] * s[i]), &u.column(i), &u.column(i), 1.0);
        }
        Cache::InverseGram(g)
    } else {
        Cache::None
    };

    PinvState {
        a: a.clone(),
        pinv,
        regime: a.regime(),
        cond_estimate,
        cache,
        appends: 0,
    }
}

fn frobenius_cond(a: &DMatrix<f64>, pinv: &DMatrix<f64>) -> f64 {
    a.norm() * pinv.norm()
}

/// Underparametrized append: pseudoinverse of `[A, b]` from that of `A`.
///
/// Requires independent columns, `d + 1 < n`, `b ≠ 0` and
/// `z ≥ Z_THRESHOLD`; otherwise reports `SingularUpdate` (or
/// `BoundaryRegime`) and the caller should use [`pinv_direct`].
pub fn stack_row_pinv_under(state: &PinvState, b: &DVector<f64>) -> Result<PinvState, PinvError> {
    let (n, d) = (state.n(), state.d());
    check_len(b, n)?;
    if d + 1 >= n {
        return Err(PinvError::BoundaryRegime { n, d });
    }
    let p = state
        .projection()
        .ok_or(PinvError::SingularUpdate("columns of A are not independent"))?;
    let b_norm2 = b.norm_squared();
    if b_norm2 == 0.0 {
        return Err(PinvError::SingularUpdate("b = 0"));
    }
    let resid = b - p * b; // (I - P)b
    let s = resid.norm_squared(); // bᵀ(I - P)b for idempotent P
    let z = s / b_norm2;
    if !(z >= Z_THRESHOLD) {
        return Err(PinvError::SingularUpdate("z below threshold"));
    }
    // (I - Q)(I + PQ/z)(A⁺)ᵀ collapses to (A⁺)ᵀ - (I - P)b (A⁺b)ᵀ / s.
    let k = &state.pinv * b;
    let mut pinv = state.pinv.clone().insert_row(d, 0.0);
    pinv.rows_mut(0, d).ger(-1.0 / s, &k, &resid, 1.0);
    pinv.row_mut(d).copy_from(&(resid.transpose() / s));

    let mut proj = p.clone();
    proj.ger(1.0 / s, &resid, &resid, 1.0);

    let a = state.a.with_column(b);
    let cond_estimate = frobenius_cond(a.matrix(), &pinv);
    Ok(PinvState {
        regime: a.regime(),
        a,
        pinv,
        cond_estimate,
        cache: Cache::Projection(proj),
        appends: state.appends + 1,
    }
    .refreshed())
}

/// Overparametrized append: pseudoinverse of `[A, b]` for `n ≤ d`.
///
/// Requires `A` with independent rows; refuses when the Gram condition
/// bound `λ_max(G)·tr(AAᵀ)` of the result exceeds `GRAM_CONDITION_LIMIT`.
pub fn stack_row_pinv_over(state: &PinvState, b: &DVector<f64>) -> Result<PinvState, PinvError> {
    let (n, d) = (state.n(), state.d());
    check_len(b, n)?;
    if n > d {
        return Err(PinvError::BoundaryRegime { n, d });
    }
    let g = state
        .inverse_gram()
        .ok_or(PinvError::SingularUpdate("rows of A are not independent"))?;
    let gb = g * b;
    let r = 1.0 + b.dot(&gb);
    if !r.is_finite() {
        return Err(PinvError::SingularUpdate("1 + bᵀGb is not finite"));
    }
    let u = &gb / r;
    let w = &state.pinv * b;

    let mut g_next = g.clone();
    g_next.ger(-1.0 / r, &gb, &gb, 1.0);
    let gram_trace = state.a().norm_squared() + b.norm_squared();
    if g_next.trace() * gram_trace > GRAM_CONDITION_LIMIT {
        return Err(PinvError::SingularUpdate("Gram pivot below 1e-12 of trace"));
    }

    let mut pinv = state.pinv.clone().insert_row(d, 0.0);
    pinv.rows_mut(0, d).ger(-1.0, &w, &u, 1.0);
    pinv.row_mut(d).copy_from(&u.transpose());

    let a = state.a.with_column(b);
    let cond_estimate = frobenius_cond(a.matrix(), &pinv);
    Ok(PinvState {
        regime: a.regime(),
        a,
        pinv,
        cond_estimate,
        cache: Cache::InverseGram(g_next),
        appends: state.appends + 1,
    }
    .refreshed())
}

/// The intermediate quantities of the two append formulas.
#[derive(Debug, Clone, PartialEq)]
pub enum Projections {
    Under {
        /// `AA⁺`.
        p: DMatrix<f64>,
        /// `bbᵀ / ‖b‖²`.
        q: DMatrix<f64>,
        z: f64,
    },
    Over {
        /// `(AAᵀ)⁻¹`.
        g: DMatrix<f64>,
        /// `Gb / (1 + bᵀGb)`, stored as a column.
        u: DVector<f64>,
        /// `1 + bᵀGb`.
        r: f64,
        /// `A⁺b`.
        w: DVector<f64>,
    },
}

pub fn projection_quantities(state: &PinvState, b: &DVector<f64>) -> Result<Projections, PinvError> {
    check_len(b, state.n())?;
    match (&state.cache, state.regime) {
        (Cache::Projection(p), _) => {
            let b_norm2 = b.norm_squared();
            if b_norm2 == 0.0 {
                return Err(PinvError::SingularUpdate("b = 0"));
            }
            let q = b * b.transpose() / b_norm2;
            let resid = b - p * b;
            Ok(Projections::Under {
                p: p.clone(),
                q,
                z: resid.norm_squared() / b_norm2,
            })
        }
        (Cache::InverseGram(g), _) => {
            let gb = g * b;
            let r = 1.0 + b.dot(&gb);
            Ok(Projections::Over {
                g: g.clone(),
                u: gb / r,
                r,
                w: &state.pinv * b,
            })
        }
        (Cache::None, _) => {
            // Rank-deficient state: report what the direct pseudoinverse gives.
            let b_norm2 = b.norm_squared();
            if state.regime == Regime::Under && b_norm2 > 0.0 {
                let p = state.a() * &state.pinv;
                let resid = b - &p * b;
                Ok(Projections::Under {
                    q: b * b.transpose() / b_norm2,
                    z: resid.norm_squared() / b_norm2,
                    p,
                })
            } else {
                Err(PinvError::SingularUpdate("state is rank deficient"))
            }
        }
    }
}

/// Spectrum of `M = Q - (PQ + QP)/z + (2/z - 1/z²)QPQ + QPQPQ/z²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MSpectrum {
    /// Nonzero eigenvalue of largest magnitude; should equal `1 - 1/z`.
    pub eig_a: f64,
    /// The other nonzero eigenvalue; should equal `1`.
    pub eig_b: f64,
    /// Eigenvalues beyond those two exceeding `1e-8` in magnitude.
    pub residual_rank: usize,
    /// Number of singular values above `1e-8`.
    pub rank: usize,
    pub trace: f64,
}

pub fn m_matrix(p: &DMatrix<f64>, q: &DMatrix<f64>, z: f64) -> DMatrix<f64> {
    let pq = p * q;
    let qp = q * p;
    let qpq = q * &pq;
    let qpqpq = &qpq * &pq;
    q - (&pq + &qp) / z + qpq * (2.0 / z - 1.0 / (z * z)) + qpqpq / (z * z)
}

pub fn m_matrix_spectrum(p: &DMatrix<f64>, q: &DMatrix<f64>, z: f64) -> MSpectrum {
    const TOL: f64 = 1e-8;
    let m = m_matrix(p, q, z);
    let sym = (&m + m.transpose()) * 0.5;
    let mut eig: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().cloned().collect();
    eig.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    let rank = m.singular_values().iter().filter(|&&s| s > TOL).count();
    let eig_a = eig.first().copied().unwrap_or(0.0);
    let eig_b = eig.get(1).copied().unwrap_or(0.0);
    let residual_rank = eig.iter().skip(2).filter(|v| v.abs() > TOL).count();
    MSpectrum {
        eig_a,
        eig_b,
        residual_rank,
        rank,
        trace: m.trace(),
    }
}

/// Minimum-norm solution of `Bz = y` for a (typically fat) `B`.
pub fn min_norm_solve(b: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>, PinvError> {
    let design = DesignMatrix::new(b.clone())?;
    check_len(y, b.nrows())?;
    let state = pinv_direct(&design);
    let z = state.pinv() * y;
    let residual = (b * &z - y).norm();
    let tolerance = 1e-8 * y.norm();
    if residual > tolerance {
        return Err(PinvError::Infeasible {
            residual,
            tolerance,
        });
    }
    Ok(z)
}

/// Relative Frobenius residuals of the four Moore–Penrose conditions:
/// `AXA = A`, `XAX = X`, `(AX)ᵀ = AX`, `(XA)ᵀ = XA`.
pub fn moore_penrose_residuals(a: &DMatrix<f64>, x: &DMatrix<f64>) -> [f64; 4] {
    let ax = a * x;
    let xa = x * a;
    let rel = |num: f64, den: f64| if den > 0.0 { num / den } else { num };
    [
        rel((&ax * a - a).norm(), a.norm()),
        rel((&xa * x - x).norm(), x.norm()),
        rel((&ax - ax.transpose()).norm(), ax.norm()),
        rel((&xa - xa.transpose()).norm(), xa.norm()),
    ]
}

pub fn relative_frobenius_error(got: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    let den = reference.norm();
    let num = (got - reference).norm();
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Debug dump: one matrix row per line, `%.17g`-style values.
pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, mut out: W) -> io::Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
