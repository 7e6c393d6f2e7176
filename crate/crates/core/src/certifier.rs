//! Certification of network nonlocality via linear feasibility.
//!
//! The ideal experiment's single-click statistics admit a source-local
//! classical model exactly when a small linear program over hidden weights
//! `q(pattern, s)` is feasible.  The solver returns a checkable certificate
//! either way: a primal witness when feasible, a Farkas dual when not.

use serde::{Deserialize, Serialize};

use crate::distribution::OutcomeDistribution;
use crate::error::{Error, Result};
use crate::fock::check_unit_range;

/// Default simplex pivot and certificate tolerance.
pub const DEFAULT_LP_TOL: f64 = 1e-9;
/// Ring sizes above this are rejected: the program has `2^(N+1)` variables.
pub const MAX_RING_LP_PARTIES: usize = 16;

// ── Problem container ──────────────────────────────────────────────────────

/// Equality-constrained feasibility problem: find `q >= 0` with `A q = b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityProblem {
    variable_labels: Vec<String>,
    row_labels: Vec<String>,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl FeasibilityProblem {
    pub fn new(
        variable_labels: Vec<String>,
        row_labels: Vec<String>,
        rows: Vec<Vec<f64>>,
        rhs: Vec<f64>,
    ) -> Result<Self> {
        if rows.len() != row_labels.len() || rhs.len() != rows.len() {
            return Err(Error::MalformedProblem(format!(
                "{} rows, {} row labels, {} right-hand sides",
                rows.len(),
                row_labels.len(),
                rhs.len()
            )));
        }
        if rows.is_empty() || variable_labels.is_empty() {
            return Err(Error::MalformedProblem("empty program".into()));
        }
        for (label, row) in row_labels.iter().zip(&rows) {
            if row.len() != variable_labels.len() {
                return Err(Error::MalformedProblem(format!(
                    "row {label} has {} coefficients, expected {}",
                    row.len(),
                    variable_labels.len()
                )));
            }
        }
        let finite = rows.iter().flatten().chain(&rhs).all(|x| x.is_finite());
        if !finite {
            return Err(Error::MalformedProblem("non-finite coefficient".into()));
        }
        Ok(Self { variable_labels, row_labels, rows, rhs })
    }

    pub fn variable_count(&self) -> usize {
        self.variable_labels.len()
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn variable_labels(&self) -> &[String] {
        &self.variable_labels
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// `max_i |A_i x - b_i|`.
    pub fn residual(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.variable_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} variables",
                x.len(),
                self.variable_count()
            )));
        }
        Ok(self
            .rows
            .iter()
            .zip(&self.rhs)
            .map(|(row, b)| {
                (row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() - b).abs()
            })
            .fold(0.0, f64::max))
    }
}

// ── Certificates ───────────────────────────────────────────────────────────

/// Verdict of [`solve_feasibility`] with its supporting certificate.
///
/// Feasible: `witness` satisfies `A q = b`, `q >= 0` within tolerance.
/// Infeasible: `dual_certificate` `d` satisfies `d^T A >= 0` columnwise and
/// `d^T b < 0`, which no nonnegative `q` can reconcile; `violation` is
/// `-d^T b`, the phase-1 optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateResult {
    pub feasible: bool,
    pub violation: f64,
    pub witness: Option<Vec<f64>>,
    pub dual_certificate: Option<Vec<f64>>,
    pub tolerance: f64,
    pub iterations: usize,
}

/// Decides feasibility by a dense phase-1 simplex with Bland's rule and
/// verifies the resulting certificate against the original program before
/// returning it.
pub fn solve_feasibility(problem: &FeasibilityProblem, tol: f64) -> Result<CertificateResult> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::ParameterRange { name: "tol", value: tol, expected: "positive" });
    }
    let outcome = phase_one_simplex(problem, tol)?;
    verify_certificate(problem, &outcome, tol)?;
    Ok(outcome)
}

fn verify_certificate(
    problem: &FeasibilityProblem,
    result: &CertificateResult,
    tol: f64,
) -> Result<()> {
    let slack = 10.0 * tol;
    if result.feasible {
        let witness = result
            .witness
            .as_ref()
            .ok_or_else(|| Error::CertificateInvalid("feasible verdict without witness".into()))?;
        if witness.iter().any(|&q| q < 0.0) {
            return Err(Error::CertificateInvalid("negative witness entry".into()));
        }
        let residual = problem.residual(witness)?;
        if residual > slack {
            return Err(Error::CertificateInvalid(format!(
                "witness residual {residual:e} exceeds {slack:e}"
            )));
        }
    } else {
        let dual = result.dual_certificate.as_ref().ok_or_else(|| {
            Error::CertificateInvalid("infeasible verdict without dual certificate".into())
        })?;
        let scale = 1.0 + dual.iter().map(|d| d.abs()).fold(0.0, f64::max);
        let gain: f64 = dual.iter().zip(problem.rhs()).map(|(d, b)| d * b).sum();
        if gain > -tol * 0.5 {
            return Err(Error::CertificateInvalid(format!(
                "dual gains only {gain:e} against the right-hand side"
            )));
        }
        if (gain + result.violation).abs() > slack * scale {
            return Err(Error::CertificateInvalid(format!(
                "dual objective {:e} disagrees with violation {:e}",
                -gain, result.violation
            )));
        }
        for j in 0..problem.variable_count() {
            let column: f64 =
                dual.iter().zip(problem.rows()).map(|(d, row)| d * row[j]).sum();
            if column < -slack * scale {
                return Err(Error::CertificateInvalid(format!(
                    "dual violates column {} by {column:e}",
                    problem.variable_labels()[j]
                )));
            }
        }
    }
    Ok(())
}

// ── Phase-1 simplex ────────────────────────────────────────────────────────

/// Minimizes the sum of artificial variables for `A q + a = b`, `q, a >= 0`.
/// Bland's rule (lowest eligible entering index, lowest basic leaving index
/// on ratio ties) guarantees termination without cycling.
fn phase_one_simplex(problem: &FeasibilityProblem, tol: f64) -> Result<CertificateResult> {
    let m = problem.row_count();
    let n = problem.variable_count();
    let width = n + m + 1;
    let rhs_col = n + m;

    // Flip rows so the right-hand side is nonnegative; artificials start basic.
    let mut sign = vec![1.0; m];
    let mut tableau = vec![0.0; m * width];
    for i in 0..m {
        let s = if problem.rhs[i] < 0.0 { -1.0 } else { 1.0 };
        sign[i] = s;
        let row = &mut tableau[i * width..(i + 1) * width];
        for j in 0..n {
            row[j] = s * problem.rows[i][j];
        }
        row[n + i] = 1.0;
        row[rhs_col] = s * problem.rhs[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // Objective row holds reduced costs; its rhs entry holds minus the
    // current objective value.
    let mut objective = vec![0.0; width];
    for i in 0..m {
        for j in 0..n {
            objective[j] -= tableau[i * width + j];
        }
        objective[rhs_col] -= tableau[i * width + rhs_col];
    }

    let iteration_cap = 200 * (n + m) + 1000;
    let mut iterations = 0;
    loop {
        let Some(entering) = (0..n + m).find(|&j| objective[j] < -tol) else {
            break;
        };
        let mut leaving: Option<(f64, usize, usize)> = None;
        for i in 0..m {
            let pivot = tableau[i * width + entering];
            if pivot > tol {
                let ratio = tableau[i * width + rhs_col] / pivot;
                let candidate = (ratio, basis[i], i);
                let better = match leaving {
                    None => true,
                    Some((r, b, _)) => ratio < r || (ratio == r && basis[i] < b),
                };
                if better {
                    leaving = Some(candidate);
                }
            }
        }
        let Some((_, _, pivot_row)) = leaving else {
            // Phase 1 is bounded below by zero, so this is a numerical dead end.
            return Err(Error::SolverStalled(format!(
                "no pivot for column {entering} after {iterations} iterations"
            )));
        };

        let pivot = tableau[pivot_row * width + entering];
        for j in 0..width {
            tableau[pivot_row * width + j] /= pivot;
        }
        for i in 0..m {
            if i == pivot_row {
                continue;
            }
            let factor = tableau[i * width + entering];
            if factor != 0.0 {
                for j in 0..width {
                    tableau[i * width + j] -= factor * tableau[pivot_row * width + j];
                }
            }
        }
        let factor = objective[entering];
        if factor != 0.0 {
            for j in 0..width {
                objective[j] -= factor * tableau[pivot_row * width + j];
            }
        }
        basis[pivot_row] = entering;

        iterations += 1;
        if iterations > iteration_cap {
            return Err(Error::SolverStalled(format!(
                "no convergence within {iteration_cap} iterations"
            )));
        }
    }

    let optimum = -objective[rhs_col];
    if optimum <= tol {
        let mut full = vec![0.0; n + m];
        for i in 0..m {
            full[basis[i]] = tableau[i * width + rhs_col];
        }
        let witness: Vec<f64> = full[..n].iter().map(|&q| q.max(0.0)).collect();
        Ok(CertificateResult {
            feasible: true,
            violation: optimum.max(0.0),
            witness: Some(witness),
            dual_certificate: None,
            tolerance: tol,
            iterations,
        })
    } else {
        // Simplex multipliers from the artificial columns' reduced costs,
        // mapped back through the row flips and negated so the certificate
        // reads: d^T b < 0 yet d^T A >= 0.
        let dual: Vec<f64> =
            (0..m).map(|i| -sign[i] * (1.0 - objective[n + i])).collect();
        Ok(CertificateResult {
            feasible: false,
            violation: optimum,
            witness: None,
            dual_certificate: Some(dual),
            tolerance: tol,
            iterations,
        })
    }
}

// ── Triangle program ───────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TriangleLpOptions {
    /// Adds the six per-party single-click marginal rows.  They are implied
    /// by the pattern rows, so this only stresses the solver.
    pub redundant_marginals: bool,
}

/// Joint probability of the all-single-click pattern with `r_count` parties
/// on R, for the ideal triangle at zero total phase, times four.
fn scaled_chi_pattern_value(t: f64, r_count: u32) -> f64 {
    let s = t * (1.0 - t);
    match r_count {
        0 => 0.5 * ((1.0 - t).powf(1.5) + t.powf(1.5)).powi(2),
        3 => 0.5 * ((1.0 - t).powf(1.5) - t.powf(1.5)).powi(2),
        1 => 0.5 * s * (1.0 - 2.0 * s.sqrt()),
        2 => 0.5 * s * (1.0 + 2.0 * s.sqrt()),
        _ => unreachable!("three parties"),
    }
}

/// Builds the source-local model feasibility program for the ideal triangle
/// at transmissivity `t` and zero total phase.
///
/// Variables `q(ijk, s)` decompose each all-single-click pattern `ijk` over
/// `{L, R}^3` by a binary hidden label `s`.  Rows pin, per pattern, the total
/// weight to the quantum value (scaled by 4); per party and symbol, the
/// s-signed weight to `1/2 - t` (L) or `t - 1/2` (R); and the overall sum
/// to one.
pub fn build_triangle_lp(t: f64) -> Result<FeasibilityProblem> {
    build_triangle_lp_with(t, TriangleLpOptions::default())
}

pub fn build_triangle_lp_with(t: f64, options: TriangleLpOptions) -> Result<FeasibilityProblem> {
    check_unit_range("t", t)?;
    let parties = ["A", "B", "C"];
    let symbol = |bit: usize| if bit == 0 { 'L' } else { 'R' };

    let pattern_label = |p: usize| -> String {
        (0..3).map(|k| symbol((p >> (2 - k)) & 1)).collect()
    };
    let variable_labels: Vec<String> =
        (0..16).map(|v| format!("q_{}_{}", pattern_label(v >> 1), v & 1)).collect();

    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut row_labels = Vec::new();

    for p in 0..8usize {
        let mut row = vec![0.0; 16];
        row[p * 2] = 1.0;
        row[p * 2 + 1] = 1.0;
        rows.push(row);
        rhs.push(scaled_chi_pattern_value(t, (p as u32).count_ones()));
        row_labels.push(format!("pattern_{}", pattern_label(p)));
    }

    for party in 0..3usize {
        for bit in 0..2usize {
            let mut row = vec![0.0; 16];
            for p in 0..8usize {
                if (p >> (2 - party)) & 1 == bit {
                    row[p * 2] += 1.0;
                    row[p * 2 + 1] -= 1.0;
                }
            }
            rows.push(row);
            rhs.push(if bit == 0 { 0.5 - t } else { t - 0.5 });
            row_labels.push(format!("difference_{}_{}", parties[party], symbol(bit)));
        }
    }

    rows.push(vec![1.0; 16]);
    rhs.push(1.0);
    row_labels.push("normalization".into());

    if options.redundant_marginals {
        for party in 0..3usize {
            for bit in 0..2usize {
                let mut row = vec![0.0; 16];
                let mut total = 0.0;
                for p in 0..8usize {
                    if (p >> (2 - party)) & 1 == bit {
                        row[p * 2] += 1.0;
                        row[p * 2 + 1] += 1.0;
                        total += scaled_chi_pattern_value(t, (p as u32).count_ones());
                    }
                }
                rows.push(row);
                rhs.push(total);
                row_labels.push(format!("marginal_{}_{}", parties[party], symbol(bit)));
            }
        }
    }

    FeasibilityProblem::new(variable_labels, row_labels, rows, rhs)
}

// ── Ring program ───────────────────────────────────────────────────────────

/// Builds the source-local model feasibility program for an N-party ring from
/// its simulated ideal distribution.
///
/// Same structure as the triangle program with `2^(N+1)` variables: one row
/// per all-single-click pattern pinning its total weight, two rows per party
/// pinning the s-signed weight to a difference of vacuum-adjacent marginals
/// scaled by `2^(3-N)`, and normalization.  For N = 3 this reproduces the
/// triangle program scaled by 1/4.
pub fn build_ring_lp(
    parties: usize,
    t: f64,
    dist: &OutcomeDistribution,
) -> Result<FeasibilityProblem> {
    check_unit_range("t", t)?;
    if parties < 3 {
        return Err(Error::MalformedProblem(format!(
            "ring needs at least 3 parties, got {parties}"
        )));
    }
    if parties > MAX_RING_LP_PARTIES {
        return Err(Error::RingTooLarge { n: parties, max: MAX_RING_LP_PARTIES });
    }
    if dist.party_count() != parties {
        return Err(Error::ShapeMismatch(format!(
            "distribution has {} parties, expected {parties}",
            dist.party_count()
        )));
    }
    if let Some(metadata) = dist.metadata() {
        if !metadata.noise.is_ideal() {
            return Err(Error::MetadataMismatch(
                "ring program is defined for the ideal distribution".into(),
            ));
        }
        if (metadata.transmissivity - t).abs() > 1e-12 {
            return Err(Error::MetadataMismatch(format!(
                "distribution was simulated at t = {}, program requested t = {t}",
                metadata.transmissivity
            )));
        }
    }
    for required in ['0', 'L', 'R'] {
        dist.symbol_index(required)?;
    }

    let patterns = 1usize << parties;
    let variables = patterns << 1;
    let symbol = |bit: usize| if bit == 0 { 'L' } else { 'R' };
    let pattern_label = |p: usize| -> String {
        (0..parties).map(|k| symbol((p >> (parties - 1 - k)) & 1)).collect()
    };

    let variable_labels: Vec<String> =
        (0..variables).map(|v| format!("q_{}_{}", pattern_label(v >> 1), v & 1)).collect();

    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut row_labels = Vec::new();

    for p in 0..patterns {
        let mut row = vec![0.0; variables];
        row[p * 2] = 1.0;
        row[p * 2 + 1] = 1.0;
        let outcome: Vec<char> =
            (0..parties).map(|k| symbol((p >> (parties - 1 - k)) & 1)).collect();
        rows.push(row);
        rhs.push(dist.probability(&outcome)?);
        row_labels.push(format!("pattern_{}", pattern_label(p)));
    }

    // Implied by the pattern rows; kept so certificates surface an
    // inconsistent table directly.
    let single_click_total: f64 = rhs.iter().sum();

    let scale = (2.0f64).powi(3 - parties as i32);
    for party in 0..parties {
        let next = (party + 1) % parties;
        let previous = (party + parties - 1) % parties;
        for bit in 0..2usize {
            let mut row = vec![0.0; variables];
            for p in 0..patterns {
                if (p >> (parties - 1 - party)) & 1 == bit {
                    row[p * 2] += 1.0;
                    row[p * 2 + 1] -= 1.0;
                }
            }
            let chi = symbol(bit);
            let forward = pair_marginal(dist, party, chi, next, '0')?;
            let backward = pair_marginal(dist, previous, '0', party, chi)?;
            rows.push(row);
            rhs.push((forward - backward) * scale);
            row_labels.push(format!("difference_p{party}_{chi}"));
        }
    }

    rows.push(vec![1.0; variables]);
    rhs.push(single_click_total);
    row_labels.push("normalization".into());

    FeasibilityProblem::new(variable_labels, row_labels, rows, rhs)
}

/// Marginal probability that party `a` shows `sa` and party `b` shows `sb`.
fn pair_marginal(
    dist: &OutcomeDistribution,
    a: usize,
    sa: char,
    b: usize,
    sb: char,
) -> Result<f64> {
    let alpha = dist.alphabet().len();
    let ia = dist.symbol_index(sa)?;
    let ib = dist.symbol_index(sb)?;
    let parties = dist.party_count();
    let mut total = 0.0;
    for (index, &p) in dist.probabilities().iter().enumerate() {
        let da = index / alpha.pow((parties - 1 - a) as u32) % alpha;
        let db = index / alpha.pow((parties - 1 - b) as u32) % alpha;
        if da == ia && db == ib {
            total += p;
        }
    }
    Ok(total)
}

// ── Boundary scan ──────────────────────────────────────────────────────────

/// One feasibility transition bracketed to `|upper - lower| <= precision`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryBracket {
    pub lower: f64,
    pub upper: f64,
    pub lower_feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub precision: f64,
    pub evaluations: usize,
    /// Coarse grid verdicts as `(parameter, feasible)`.
    pub grid: Vec<(f64, bool)>,
    pub brackets: Vec<BoundaryBracket>,
}

/// Locates feasibility transitions of `verdict` over `[lo, hi]`: a 33-point
/// coarse grid followed by bisection of every sign change down to
/// `precision`.
pub fn scan_boundary(
    mut verdict: impl FnMut(f64) -> Result<bool>,
    lo: f64,
    hi: f64,
    precision: f64,
) -> Result<BoundaryReport> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::ParameterRange {
            name: "scan interval",
            value: hi - lo,
            expected: "lo < hi, both finite",
        });
    }
    if !(precision > 0.0) {
        return Err(Error::ParameterRange {
            name: "precision",
            value: precision,
            expected: "positive",
        });
    }

    const GRID_POINTS: usize = 33;
    let mut evaluations = 0;
    let mut check = |t: f64| -> Result<bool> {
        evaluations += 1;
        verdict(t)
    };

    let mut grid = Vec::with_capacity(GRID_POINTS);
    for i in 0..GRID_POINTS {
        let t = lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64;
        grid.push((t, check(t)?));
    }

    let mut brackets = Vec::new();
    for window in grid.clone().windows(2) {
        let (mut a, fa) = window[0];
        let (mut b, fb) = window[1];
        if fa == fb {
            continue;
        }
        while b - a > precision {
            let mid = 0.5 * (a + b);
            if check(mid)? == fa {
                a = mid;
            } else {
                b = mid;
            }
        }
        brackets.push(BoundaryBracket { lower: a, upper: b, lower_feasible: fa });
    }

    Ok(BoundaryReport { precision, evaluations, grid, brackets })
}

/// Feasibility of the ideal triangle's source-local program at `t`.
pub fn triangle_feasible(t: f64, tol: f64) -> Result<bool> {
    Ok(solve_feasibility(&build_triangle_lp(t)?, tol)?.feasible)
}

// ── Tests ──────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::ring_distribution;
    use crate::optics::{NoiseParams, PovmVariant};

    #[test]
    fn solver_handles_plain_programs() {
        // x + y = 1, x - y = 0 has the solution (1/2, 1/2).
        let p = FeasibilityProblem::new(
            vec!["x".into(), "y".into()],
            vec!["sum".into(), "diff".into()],
            vec![vec![1.0, 1.0], vec![1.0, -1.0]],
            vec![1.0, 0.0],
        )
        .unwrap();
        let cert = solve_feasibility(&p, DEFAULT_LP_TOL).unwrap();
        assert!(cert.feasible);
        let w = cert.witness.unwrap();
        assert!((w[0] - 0.5).abs() <= 1e-9 && (w[1] - 0.5).abs() <= 1e-9);

        // x + y = 1, x + y = 2 is plainly infeasible.
        let p = FeasibilityProblem::new(
            vec!["x".into(), "y".into()],
            vec!["one".into(), "two".into()],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![1.0, 2.0],
        )
        .unwrap();
        let cert = solve_feasibility(&p, DEFAULT_LP_TOL).unwrap();
        assert!(!cert.feasible);
        assert!(cert.violation > 0.5);

        // x = -1 with x >= 0 needs a flipped row and is infeasible.
        let p = FeasibilityProblem::new(
            vec!["x".into()],
            vec!["pin".into()],
            vec![vec![1.0]],
            vec![-1.0],
        )
        .unwrap();
        assert!(!solve_feasibility(&p, DEFAULT_LP_TOL).unwrap().feasible);
    }

    #[test]
    fn triangle_program_shape() {
        let p = build_triangle_lp(0.3).unwrap();
        assert_eq!(p.variable_count(), 16);
        assert_eq!(p.row_count(), 15);
        assert_eq!(p.variable_labels()[0], "q_LLL_0");
        assert_eq!(p.variable_labels()[15], "q_RRR_1");

        let extended =
            build_triangle_lp_with(0.3, TriangleLpOptions { redundant_marginals: true }).unwrap();
        assert_eq!(extended.row_count(), 21);
    }

    #[test]
    fn triangle_verdicts_on_known_points() {
        for &(t, expected) in &[
            (0.0, true),
            (0.1, false),
            (0.25, true),
            (0.5, true),
            (0.75, true),
            (0.9, false),
            (1.0, true),
        ] {
            let got = triangle_feasible(t, DEFAULT_LP_TOL).unwrap();
            assert_eq!(got, expected, "t = {t}");
        }
    }

    #[test]
    fn redundant_marginals_do_not_change_verdicts() {
        for &t in &[0.1, 0.3, 0.5, 0.9] {
            let plain = triangle_feasible(t, DEFAULT_LP_TOL).unwrap();
            let extended = solve_feasibility(
                &build_triangle_lp_with(t, TriangleLpOptions { redundant_marginals: true })
                    .unwrap(),
                DEFAULT_LP_TOL,
            )
            .unwrap();
            assert_eq!(plain, extended.feasible, "t = {t}");
        }
    }

    #[test]
    fn certificates_check_out_by_hand() {
        let t = 0.1;
        let problem = build_triangle_lp(t).unwrap();
        let cert = solve_feasibility(&problem, DEFAULT_LP_TOL).unwrap();
        assert!(!cert.feasible);
        let dual = cert.dual_certificate.unwrap();
        let gain: f64 = dual.iter().zip(problem.rhs()).map(|(d, b)| d * b).sum();
        assert!(gain < -1e-6, "gain {gain}");
        for j in 0..problem.variable_count() {
            let column: f64 =
                dual.iter().zip(problem.rows()).map(|(d, row)| d * row[j]).sum();
            assert!(column >= -1e-7, "column {j}: {column}");
        }

        let t = 0.5;
        let problem = build_triangle_lp(t).unwrap();
        let cert = solve_feasibility(&problem, DEFAULT_LP_TOL).unwrap();
        assert!(cert.feasible);
        assert!(problem.residual(&cert.witness.unwrap()).unwrap() <= 1e-8);
    }

    #[test]
    fn ring_program_at_three_parties_matches_triangle() {
        let dist =
            ring_distribution(3, 0.3, &[0.0; 3], PovmVariant::Passive, &NoiseParams::ideal())
                .unwrap();
        let ring = build_ring_lp(3, 0.3, &dist).unwrap();
        let triangle = build_triangle_lp(0.3).unwrap();
        assert_eq!(ring.variable_count(), triangle.variable_count());

        // Same constraint matrix; right-hand sides scaled by 1/4 except
        // normalization.
        for (label, (row, b)) in
            ring.row_labels().iter().zip(ring.rows().iter().zip(ring.rhs()))
        {
            if label == "normalization" {
                continue;
            }
            let (kind, key) = label.split_once('_').unwrap();
            let t_label = match kind {
                "pattern" => format!("pattern_{key}"),
                "difference" => {
                    let (party, chi) = key.split_once('_').unwrap();
                    let name = ["A", "B", "C"][party[1..].parse::<usize>().unwrap()];
                    format!("difference_{name}_{chi}")
                }
                other => panic!("unexpected row {other}"),
            };
            let i = triangle.row_labels().iter().position(|l| l == &t_label).unwrap();
            assert_eq!(row, &triangle.rows()[i], "{label}");
            assert!((b - triangle.rhs()[i] / 4.0).abs() <= 1e-12, "{label}");
        }

        for t in [0.1, 0.3, 0.9] {
            let dist =
                ring_distribution(3, t, &[0.0; 3], PovmVariant::Passive, &NoiseParams::ideal())
                    .unwrap();
            let ring_cert =
                solve_feasibility(&build_ring_lp(3, t, &dist).unwrap(), DEFAULT_LP_TOL).unwrap();
            let triangle_cert = triangle_feasible(t, DEFAULT_LP_TOL).unwrap();
            assert_eq!(ring_cert.feasible, triangle_cert, "t = {t}");
        }
    }

    #[test]
    fn fully_transmissive_ring_is_feasible() {
        // At t = 1 the statistics are deterministic given the sources'
        // photon directions, so a local model exists for any ring size.
        for n in [4, 5] {
            let dist =
                ring_distribution(n, 1.0, &vec![0.0; n], PovmVariant::Passive, &NoiseParams::ideal())
                    .unwrap();
            let cert =
                solve_feasibility(&build_ring_lp(n, 1.0, &dist).unwrap(), DEFAULT_LP_TOL).unwrap();
            assert!(cert.feasible, "n = {n}");
        }
    }

    #[test]
    fn ring_program_rejects_mismatches() {
        let dist =
            ring_distribution(4, 0.3, &[0.0; 4], PovmVariant::Passive, &NoiseParams::ideal())
                .unwrap();
        assert!(build_ring_lp(5, 0.3, &dist).is_err());
        assert!(build_ring_lp(4, 0.4, &dist).is_err());

        let noisy = NoiseParams { transmissivity: 0.9, ..NoiseParams::ideal() };
        let lossy =
            ring_distribution(4, 0.3, &[0.0; 4], PovmVariant::Passive, &noisy).unwrap();
        assert!(build_ring_lp(4, 0.3, &lossy).is_err());
    }

    #[test]
    fn boundary_scan_brackets_the_transition() {
        let report = scan_boundary(
            |t| triangle_feasible(t, DEFAULT_LP_TOL),
            0.05,
            0.5,
            1e-3,
        )
        .unwrap();
        assert_eq!(report.brackets.len(), 1);
        let bracket = &report.brackets[0];
        assert!(!bracket.lower_feasible);
        assert!(bracket.upper - bracket.lower <= 1e-3);
        assert!(bracket.lower > 0.2 && bracket.upper < 0.23, "{bracket:?}");
        assert!(report.evaluations >= 33);
    }

    #[test]
    fn malformed_programs_are_rejected() {
        assert!(FeasibilityProblem::new(
            vec!["x".into()],
            vec!["r".into()],
            vec![vec![1.0, 2.0]],
            vec![1.0]
        )
        .is_err());
        assert!(FeasibilityProblem::new(
            vec!["x".into()],
            vec!["r".into()],
            vec![vec![f64::NAN]],
            vec![1.0]
        )
        .is_err());
    }
}
