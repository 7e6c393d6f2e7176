//! Truncated bosonic Fock spaces and the linear algebra used on them.
//!
//! A [`ModeSystem`] is an ordered list of labelled optical modes with a common
//! per-mode occupancy cutoff.  Basis states are occupation tuples enumerated
//! lexicographically with the last listed mode varying fastest, so the basis
//! index is a mixed-radix integer with the first mode as the most significant
//! digit.  All operators and states here are dense over `Complex<f64>`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Tolerance for hermiticity and unitarity checks on exact constructions.
pub const OPERATOR_TOL: f64 = 1e-12;
/// Pure-state norm tolerance.
pub const NORM_TOL: f64 = 1e-12;
/// Trace-one tolerance for normalized density operators.
pub const TRACE_TOL: f64 = 1e-10;
/// Eigenvalues of a density operator may dip this far below zero.
pub const EIGENVALUE_FLOOR: f64 = -1e-10;
/// Born probabilities within this distance of [0, 1] are clipped onto it;
/// a negative result beyond it signals an invalid effect.
pub const PROBABILITY_CLIP: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

// ── Mode systems and the occupation basis ──────────────────────────────────

/// An ordered set of labelled modes sharing one per-mode occupancy cutoff.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeSystem {
    labels: Vec<String>,
    cutoff: u32,
}

impl ModeSystem {
    /// Builds a system from unique, non-empty labels and a cutoff >= 1.
    pub fn new<S: Into<String>>(labels: Vec<S>, cutoff: u32) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::ShapeMismatch("a mode system needs at least one mode".into()));
        }
        if cutoff < 1 {
            return Err(Error::ParameterRange {
                name: "cutoff",
                value: cutoff as f64,
                expected: ">= 1",
            });
        }
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() {
                return Err(Error::UnknownMode("(empty label)".into()));
            }
            if labels[..i].contains(l) {
                return Err(Error::UnknownMode(format!("duplicate label `{l}`")));
            }
        }
        Ok(Self { labels, cutoff })
    }

    /// Single anonymous mode.
    pub fn single(cutoff: u32) -> Self {
        Self::new(vec!["m0"], cutoff).expect("static labels")
    }

    /// Anonymous ordered mode pair, used for beamsplitters and party measurements.
    pub fn pair(cutoff: u32) -> Self {
        Self::new(vec!["m0", "m1"], cutoff).expect("static labels")
    }

    /// The six triangle modes in evaluation order.
    ///
    /// Party X measures the adjacent pair (X1, X2); sources occupy
    /// (A2, B1), (B2, C1) and (C2, A1).
    pub fn triangle(cutoff: u32) -> Self {
        Self::new(vec!["A1", "A2", "B1", "B2", "C1", "C2"], cutoff).expect("static labels")
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn mode_count(&self) -> usize {
        self.labels.len()
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    /// Dimension of one mode: cutoff + 1.
    pub fn dim_per_mode(&self) -> usize {
        self.cutoff as usize + 1
    }

    /// Total Hilbert-space dimension `(cutoff + 1)^modes`.
    pub fn dim(&self) -> usize {
        self.dim_per_mode().pow(self.mode_count() as u32)
    }

    pub fn mode_position(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownMode(label.into()))
    }

    /// Basis index of an occupation tuple.
    pub fn index_of(&self, occupation: &[u32]) -> Result<usize> {
        if occupation.len() != self.mode_count() {
            return Err(Error::ShapeMismatch(format!(
                "occupation tuple has {} entries, system has {} modes",
                occupation.len(),
                self.mode_count()
            )));
        }
        let d = self.dim_per_mode();
        let mut idx = 0usize;
        for &n in occupation {
            if n > self.cutoff {
                return Err(Error::ParameterRange {
                    name: "occupation",
                    value: n as f64,
                    expected: "<= cutoff",
                });
            }
            idx = idx * d + n as usize;
        }
        Ok(idx)
    }

    /// Occupation tuple of a basis index.
    pub fn occupation(&self, mut index: usize) -> Vec<u32> {
        assert!(index < self.dim(), "basis index out of range");
        let d = self.dim_per_mode();
        let mut occ = vec![0u32; self.mode_count()];
        for slot in occ.iter_mut().rev() {
            *slot = (index % d) as u32;
            index /= d;
        }
        occ
    }
}

/// All occupation tuples of `system` in basis order.
pub fn occupation_basis(system: &ModeSystem) -> Vec<Vec<u32>> {
    (0..system.dim()).map(|i| system.occupation(i)).collect()
}

// ── Operators ──────────────────────────────────────────────────────────────

/// A dense linear operator attached to the mode system it acts on.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperator {
    system: ModeSystem,
    matrix: CMatrix,
}

impl LinearOperator {
    pub fn new(system: ModeSystem, matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != system.dim() || matrix.ncols() != system.dim() {
            return Err(Error::ShapeMismatch(format!(
                "matrix is {}x{}, system dimension is {}",
                matrix.nrows(),
                matrix.ncols(),
                system.dim()
            )));
        }
        Ok(Self { system, matrix })
    }

    pub fn identity(system: ModeSystem) -> Self {
        let dim = system.dim();
        Self { system, matrix: CMatrix::identity(dim, dim) }
    }

    pub fn zero(system: ModeSystem) -> Self {
        let dim = system.dim();
        Self { system, matrix: CMatrix::zeros(dim, dim) }
    }

    pub fn system(&self) -> &ModeSystem {
        &self.system
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self { system: self.system.clone(), matrix: self.matrix.adjoint() }
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        max_abs(&(&self.matrix - self.matrix.adjoint())) <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let dim = self.matrix.nrows();
        let gram = &self.matrix * self.matrix.adjoint();
        max_abs(&(gram - CMatrix::identity(dim, dim))) <= tol
    }

    /// Operator sum; systems must match.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_system(other)?;
        Ok(Self { system: self.system.clone(), matrix: &self.matrix + &other.matrix })
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self { system: self.system.clone(), matrix: self.matrix.map(|z| z * factor) }
    }

    /// Matrix product `self * other`; systems must match.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check_same_system(other)?;
        Ok(Self { system: self.system.clone(), matrix: &self.matrix * &other.matrix })
    }

    fn check_same_system(&self, other: &Self) -> Result<()> {
        if self.system != other.system {
            return Err(Error::SystemMismatch(format!(
                "{:?} vs {:?}",
                self.system.labels(),
                other.system.labels()
            )));
        }
        Ok(())
    }
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Diagonal operator counting total photons across all modes.
pub fn total_number_operator(system: &ModeSystem) -> LinearOperator {
    let dim = system.dim();
    let mut m = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        let n: u32 = system.occupation(i).iter().sum();
        m[(i, i)] = Complex64::new(n as f64, 0.0);
    }
    LinearOperator { system: system.clone(), matrix: m }
}

// ── States ─────────────────────────────────────────────────────────────────

/// A normalized pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    system: ModeSystem,
    amplitudes: CVector,
}

impl PureState {
    /// Validates the amplitude vector length and unit norm (within [`NORM_TOL`]).
    pub fn new(system: ModeSystem, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != system.dim() {
            return Err(Error::ShapeMismatch(format!(
                "amplitude vector has {} entries, system dimension is {}",
                amplitudes.len(),
                system.dim()
            )));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!("norm {norm} is not 1 within {NORM_TOL:.0e}")));
        }
        Ok(Self { system, amplitudes })
    }

    /// The basis state with the given occupation tuple.
    pub fn basis_state(system: ModeSystem, occupation: &[u32]) -> Result<Self> {
        let idx = system.index_of(occupation)?;
        let mut amplitudes = CVector::zeros(system.dim());
        amplitudes[idx] = ONE;
        Ok(Self { system, amplitudes })
    }

    pub fn system(&self) -> &ModeSystem {
        &self.system
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    /// Applies an operator; the result is not renormalized.
    pub fn apply(&self, op: &LinearOperator) -> Result<CVector> {
        if op.system != self.system {
            return Err(Error::SystemMismatch("operator acts on a different system".into()));
        }
        Ok(&op.matrix * &self.amplitudes)
    }

    pub fn to_density(&self) -> DensityOperator {
        let matrix = &self.amplitudes * self.amplitudes.adjoint();
        DensityOperator { system: self.system.clone(), matrix }
    }
}

/// A density operator.  Construction checks hermiticity and (optionally) the
/// trace; the O(dim^3) positivity check is a separate call so that bulk
/// pipelines can skip it.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    system: ModeSystem,
    matrix: CMatrix,
}

impl DensityOperator {
    /// A normalized density operator: hermitian within [`OPERATOR_TOL`] and
    /// trace 1 within [`TRACE_TOL`].
    pub fn new(system: ModeSystem, matrix: CMatrix) -> Result<Self> {
        let rho = Self::new_unnormalized(system, matrix)?;
        let tr = rho.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} is not 1 within {TRACE_TOL:.0e}")));
        }
        Ok(rho)
    }

    /// A hermitian positive operator whose trace may differ from 1.  Needed
    /// for first-order channel approximations that are not trace preserving.
    pub fn new_unnormalized(system: ModeSystem, matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != system.dim() || matrix.ncols() != system.dim() {
            return Err(Error::ShapeMismatch(format!(
                "matrix is {}x{}, system dimension is {}",
                matrix.nrows(),
                matrix.ncols(),
                system.dim()
            )));
        }
        let herm_defect = max_abs(&(&matrix - matrix.adjoint()));
        if herm_defect > OPERATOR_TOL {
            return Err(Error::InvalidState(format!(
                "hermiticity defect {herm_defect:.3e} exceeds {OPERATOR_TOL:.0e}"
            )));
        }
        Ok(Self { system, matrix })
    }

    pub fn system(&self) -> &ModeSystem {
        &self.system
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// Full spectral check: all eigenvalues >= [`EIGENVALUE_FLOOR`].
    pub fn validate_positivity(&self) -> Result<()> {
        let eigs = self.matrix.clone().symmetric_eigenvalues();
        let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < EIGENVALUE_FLOOR {
            return Err(Error::InvalidState(format!(
                "minimum eigenvalue {min:.3e} below {EIGENVALUE_FLOOR:.0e}"
            )));
        }
        Ok(())
    }

    /// Conjugation `U rho U^dag`.
    pub fn evolve(&self, u: &LinearOperator) -> Result<Self> {
        if u.system != self.system {
            return Err(Error::SystemMismatch("unitary acts on a different system".into()));
        }
        let matrix = &u.matrix * &self.matrix * u.matrix.adjoint();
        Ok(Self { system: self.system.clone(), matrix })
    }
}

// ── Beamsplitter ───────────────────────────────────────────────────────────

/// Two-mode beamsplitter unitary with transmissivity `t` and phase `phi` on
/// an anonymous mode pair at the given cutoff.
///
/// Single-photon action, writing |n0 n1> for the occupancies of the ordered
/// pair:
///   |10> -> sqrt(t)|10> - e^{-i phi} sqrt(1-t)|01>
///   |01> -> sqrt(t)|01> + e^{+i phi} sqrt(1-t)|10>
/// and on two photons
///   |11> -> (2t-1)|11> - e^{-i phi} sqrt(2t(1-t))|02> + e^{+i phi} sqrt(2t(1-t))|20>.
///
/// Photon number is conserved.  Sectors with total photon number above the
/// cutoff cannot be represented faithfully; the operator acts as the identity
/// there, which keeps the matrix exactly unitary.  Callers that need the
/// physical action on n photons must use a cutoff >= n.
pub fn beamsplitter_unitary(t: f64, phi: f64, cutoff: u32) -> Result<LinearOperator> {
    check_unit_range("t", t)?;
    let system = ModeSystem::pair(cutoff);
    let dim = system.dim();
    let mut matrix = CMatrix::zeros(dim, dim);

    // Creation operators transform as
    //   a0_in^dag = x b0^dag + y b1^dag,   a1_in^dag = u b0^dag + v b1^dag.
    let x = Complex64::new(t.sqrt(), 0.0);
    let y = -Complex64::from_polar((1.0 - t).sqrt(), -phi);
    let u = Complex64::from_polar((1.0 - t).sqrt(), phi);
    let v = Complex64::new(t.sqrt(), 0.0);

    let fact: Vec<f64> = {
        let mut f = vec![1.0f64; 2 * cutoff as usize + 1];
        for i in 1..f.len() {
            f[i] = f[i - 1] * i as f64;
        }
        f
    };
    let binom = |n: u32, k: u32| fact[n as usize] / (fact[k as usize] * fact[(n - k) as usize]);

    for m in 0..=cutoff {
        for n in 0..=cutoff {
            let col = system.index_of(&[m, n]).expect("in range");
            if m + n > cutoff {
                matrix[(col, col)] = ONE;
                continue;
            }
            // Expand (x b0 + y b1)^m (u b0 + v b1)^n |00> / sqrt(m! n!).
            for j in 0..=m {
                for k in 0..=n {
                    let p = j + k;
                    let q = m + n - p;
                    let coeff = x.powu(j)
                        * y.powu(m - j)
                        * u.powu(k)
                        * v.powu(n - k)
                        * binom(m, j)
                        * binom(n, k)
                        * (fact[p as usize] * fact[q as usize] / (fact[m as usize] * fact[n as usize]))
                            .sqrt();
                    let row = system.index_of(&[p, q]).expect("p+q = m+n <= cutoff");
                    matrix[(row, col)] += coeff;
                }
            }
        }
    }
    Ok(LinearOperator { system, matrix })
}

pub(crate) fn check_unit_range(name: &'static str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) || !value.is_finite() {
        return Err(Error::ParameterRange { name, value, expected: "[0, 1]" });
    }
    Ok(())
}

// ── Embedding, restriction, composition over subsystems ────────────────────

/// Promotes an operator on a subsystem to the full system, acting as the
/// identity elsewhere.  `target_modes` names the full-system modes that the
/// operator's modes map to, in the operator's own mode order.
pub fn embed(op: &LinearOperator, target_modes: &[&str], system: &ModeSystem) -> Result<LinearOperator> {
    if target_modes.len() != op.system.mode_count() {
        return Err(Error::ShapeMismatch(format!(
            "operator has {} modes, {} targets given",
            op.system.mode_count(),
            target_modes.len()
        )));
    }
    if op.system.cutoff() != system.cutoff() {
        return Err(Error::SystemMismatch(format!(
            "operator cutoff {} vs system cutoff {}",
            op.system.cutoff(),
            system.cutoff()
        )));
    }
    let positions: Vec<usize> =
        target_modes.iter().map(|l| system.mode_position(l)).collect::<Result<_>>()?;
    {
        let mut sorted = positions.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != positions.len() {
            return Err(Error::UnknownMode("duplicate target mode".into()));
        }
    }

    let dim = system.dim();
    let sub = &op.system;
    let mut matrix = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        let occ_i = system.occupation(i);
        for j in 0..dim {
            let occ_j = system.occupation(j);
            // Off-target occupancies must agree for a nonzero element.
            let mut diag = true;
            for p in 0..system.mode_count() {
                if !positions.contains(&p) && occ_i[p] != occ_j[p] {
                    diag = false;
                    break;
                }
            }
            if !diag {
                continue;
            }
            let sub_i: Vec<u32> = positions.iter().map(|&p| occ_i[p]).collect();
            let sub_j: Vec<u32> = positions.iter().map(|&p| occ_j[p]).collect();
            let si = sub.index_of(&sub_i).expect("within cutoff");
            let sj = sub.index_of(&sub_j).expect("within cutoff");
            matrix[(i, j)] = op.matrix[(si, sj)];
        }
    }
    Ok(LinearOperator { system: system.clone(), matrix })
}

/// Compresses an operator onto the subspace with all occupancies <= `cutoff`
/// by selecting the corresponding rows and columns.
pub fn restrict_cutoff(op: &LinearOperator, cutoff: u32) -> Result<LinearOperator> {
    if cutoff >= op.system.cutoff() {
        return Err(Error::ParameterRange {
            name: "cutoff",
            value: cutoff as f64,
            expected: "< operator cutoff",
        });
    }
    let target = ModeSystem { labels: op.system.labels.clone(), cutoff };
    let keep: Vec<usize> = (0..op.system.dim())
        .filter(|&i| op.system.occupation(i).iter().all(|&n| n <= cutoff))
        .collect();
    let dim = target.dim();
    debug_assert_eq!(keep.len(), dim);
    let mut matrix = CMatrix::zeros(dim, dim);
    for (a, &i) in keep.iter().enumerate() {
        for (b, &j) in keep.iter().enumerate() {
            matrix[(a, b)] = op.matrix[(i, j)];
        }
    }
    Ok(LinearOperator { system: target, matrix })
}

// ── Channels ───────────────────────────────────────────────────────────────

/// Applies a Kraus channel `rho -> sum_k K rho K^dag` on the full system.
pub fn apply_channel(rho: &DensityOperator, kraus: &[LinearOperator]) -> Result<DensityOperator> {
    if kraus.is_empty() {
        return Err(Error::ShapeMismatch("empty Kraus list".into()));
    }
    let mut out = CMatrix::zeros(rho.matrix.nrows(), rho.matrix.ncols());
    for k in kraus {
        if k.system != rho.system {
            return Err(Error::SystemMismatch("Kraus operator acts on a different system".into()));
        }
        out += &k.matrix * &rho.matrix * k.matrix.adjoint();
    }
    Ok(DensityOperator { system: rho.system.clone(), matrix: out })
}

/// Applies a single-mode Kraus channel to one labelled mode without
/// materializing embedded operators; equivalent to [`embed`] + [`apply_channel`].
pub fn apply_mode_channel(
    rho: &DensityOperator,
    mode: &str,
    kraus: &[LinearOperator],
) -> Result<DensityOperator> {
    if kraus.is_empty() {
        return Err(Error::ShapeMismatch("empty Kraus list".into()));
    }
    let pos = rho.system.mode_position(mode)?;
    let d = rho.system.dim_per_mode();
    for k in kraus {
        if k.system.mode_count() != 1 || k.system.cutoff() != rho.system.cutoff() {
            return Err(Error::SystemMismatch("Kraus operator is not single-mode at this cutoff".into()));
        }
    }
    // Index split: i = hi * d * lo_dim + digit * lo_dim + lo.
    let lo_dim = d.pow((rho.system.mode_count() - 1 - pos) as u32);
    let hi_dim = rho.system.dim() / (d * lo_dim);
    let dim = rho.system.dim();
    let mut out = CMatrix::zeros(dim, dim);
    for k in kraus {
        let km = &k.matrix;
        for hi_r in 0..hi_dim {
            for lo_r in 0..lo_dim {
                for hi_c in 0..hi_dim {
                    for lo_c in 0..lo_dim {
                        for a in 0..d {
                            for b in 0..d {
                                let kab = km[(a, b)];
                                if kab == ZERO {
                                    continue;
                                }
                                for ap in 0..d {
                                    for bp in 0..d {
                                        let kconj = km[(ap, bp)].conj();
                                        if kconj == ZERO {
                                            continue;
                                        }
                                        let row = (hi_r * d + a) * lo_dim + lo_r;
                                        let col = (hi_c * d + ap) * lo_dim + lo_c;
                                        let src_row = (hi_r * d + b) * lo_dim + lo_r;
                                        let src_col = (hi_c * d + bp) * lo_dim + lo_c;
                                        out[(row, col)] += kab * rho.matrix[(src_row, src_col)] * kconj;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(DensityOperator { system: rho.system.clone(), matrix: out })
}

// ── Measurement and composition ────────────────────────────────────────────

/// Born probability `Tr[rho E]`, clipped onto [0, 1] within
/// [`PROBABILITY_CLIP`].  A result further below zero (or above one) than the
/// clip means the effect was not a valid POVM element for this state.
pub fn born_probability(rho: &DensityOperator, effect: &LinearOperator) -> Result<f64> {
    if effect.system != rho.system {
        return Err(Error::SystemMismatch("effect acts on a different system".into()));
    }
    let n = rho.matrix.nrows();
    let mut tr = ZERO;
    for i in 0..n {
        for j in 0..n {
            tr += rho.matrix[(i, j)] * effect.matrix[(j, i)];
        }
    }
    if tr.im.abs() > 1e-9 {
        return Err(Error::InvalidEffect(format!("Tr[rho E] has imaginary part {:.3e}", tr.im)));
    }
    let p = tr.re;
    if p < -PROBABILITY_CLIP {
        return Err(Error::InvalidEffect(format!("negative probability {p:.3e}")));
    }
    if p > 1.0 + PROBABILITY_CLIP {
        return Err(Error::InvalidEffect(format!("probability {p} exceeds 1")));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Partial trace keeping the named modes, in the order given.
pub fn partial_trace(rho: &DensityOperator, keep: &[&str]) -> Result<DensityOperator> {
    let positions: Vec<usize> = keep.iter().map(|l| rho.system.mode_position(l)).collect::<Result<_>>()?;
    {
        let mut sorted = positions.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != positions.len() || positions.is_empty() {
            return Err(Error::UnknownMode("kept modes must be distinct and non-empty".into()));
        }
    }
    let target = ModeSystem::new(keep.to_vec(), rho.system.cutoff())?;
    let traced: Vec<usize> =
        (0..rho.system.mode_count()).filter(|p| !positions.contains(p)).collect();
    let d = rho.system.dim_per_mode();
    let traced_dim = d.pow(traced.len() as u32);

    let dim = target.dim();
    let mut matrix = CMatrix::zeros(dim, dim);
    let mut occ_full_r = vec![0u32; rho.system.mode_count()];
    let mut occ_full_c = vec![0u32; rho.system.mode_count()];
    for a in 0..dim {
        let occ_a = target.occupation(a);
        for b in 0..dim {
            let occ_b = target.occupation(b);
            let mut sum = ZERO;
            for r in 0..traced_dim {
                // Spread the traced digits; kept digits come from occ_a / occ_b.
                let mut rem = r;
                for (&p, slot) in traced.iter().rev().zip(0..) {
                    let _ = slot;
                    occ_full_r[p] = (rem % d) as u32;
                    occ_full_c[p] = occ_full_r[p];
                    rem /= d;
                }
                for (k, &p) in positions.iter().enumerate() {
                    occ_full_r[p] = occ_a[k];
                    occ_full_c[p] = occ_b[k];
                }
                let i = rho.system.index_of(&occ_full_r).expect("within cutoff");
                let j = rho.system.index_of(&occ_full_c).expect("within cutoff");
                sum += rho.matrix[(i, j)];
            }
            matrix[(a, b)] = sum;
        }
    }
    Ok(DensityOperator { system: target, matrix })
}

/// Builds the density operator of a product state on `system` from factor
/// operators living on disjoint mode subsets that together cover the system.
pub fn product_density(
    system: &ModeSystem,
    factors: &[(&DensityOperator, &[&str])],
) -> Result<DensityOperator> {
    let mut owner = vec![usize::MAX; system.mode_count()];
    let mut factor_positions: Vec<Vec<usize>> = Vec::with_capacity(factors.len());
    for (f, (rho, modes)) in factors.iter().enumerate() {
        if modes.len() != rho.system.mode_count() {
            return Err(Error::ShapeMismatch(format!(
                "factor {f} has {} modes but {} placements",
                rho.system.mode_count(),
                modes.len()
            )));
        }
        if rho.system.cutoff() != system.cutoff() {
            return Err(Error::SystemMismatch("factor cutoff differs from system cutoff".into()));
        }
        let mut positions = Vec::with_capacity(modes.len());
        for l in modes.iter() {
            let p = system.mode_position(l)?;
            if owner[p] != usize::MAX {
                return Err(Error::UnknownMode(format!("mode `{l}` claimed twice")));
            }
            owner[p] = f;
            positions.push(p);
        }
        factor_positions.push(positions);
    }
    if owner.contains(&usize::MAX) {
        return Err(Error::ShapeMismatch("factors do not cover every mode".into()));
    }

    let dim = system.dim();
    let mut matrix = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        let occ_i = system.occupation(i);
        for j in 0..dim {
            let occ_j = system.occupation(j);
            let mut value = ONE;
            for (f, (rho, _)) in factors.iter().enumerate() {
                let sub_i: Vec<u32> = factor_positions[f].iter().map(|&p| occ_i[p]).collect();
                let sub_j: Vec<u32> = factor_positions[f].iter().map(|&p| occ_j[p]).collect();
                let si = rho.system.index_of(&sub_i).expect("within cutoff");
                let sj = rho.system.index_of(&sub_j).expect("within cutoff");
                value *= rho.matrix[(si, sj)];
                if value == ZERO {
                    break;
                }
            }
            matrix[(i, j)] = value;
        }
    }
    Ok(DensityOperator { system: system.clone(), matrix })
}

// ── Tests ──────────────────────────────────────────────────────────────────
