//! Optical components of the network experiments: entangled-pair sources with
//! their noise model, threshold and number-resolving detectors, transmission
//! loss, the per-party measurement POVMs, and heralding figures of merit.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    beamsplitter_unitary, check_unit_range, embed, restrict_cutoff, CMatrix, DensityOperator,
    LinearOperator, ModeSystem, PureState,
};

/// Per-mode cutoff for source pairs and passive measurements.  Sources emit at
/// most two photons into a mode, so this represents every reachable state.
pub const PAIR_CUTOFF: u32 = 2;
/// Cutoff of the single-excitation subspace on which the projective and
/// number-resolved measurements are defined.
pub const SINGLE_EXCITATION_CUTOFF: u32 = 1;
/// POVM completeness and positivity tolerance.
pub const POVM_TOL: f64 = 1e-12;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

// ── Noise model ────────────────────────────────────────────────────────────

/// Whether channels use their exact Kraus form or the first-order truncation
/// in the small parameters (1 - transmissivity), (1 - efficiency).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChannelFidelity {
    #[default]
    Exact,
    FirstOrder,
}

/// Noise model for a network experiment.  `NoiseParams::ideal()` switches
/// every imperfection off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseParams {
    /// Weight of the double-excitation impurity in each source.
    pub impurity: f64,
    /// Transmissivity of every mode between source and measurement.
    pub transmissivity: f64,
    /// Detection efficiency of every detector.
    pub detector_efficiency: f64,
    /// Werner visibility of each source on its single-excitation subspace.
    pub werner_visibility: f64,
    /// Channel fidelity used for loss and detector inefficiency.
    #[serde(default)]
    pub fidelity: ChannelFidelity,
}

impl NoiseParams {
    pub fn ideal() -> Self {
        Self {
            impurity: 0.0,
            transmissivity: 1.0,
            detector_efficiency: 1.0,
            werner_visibility: 1.0,
            fidelity: ChannelFidelity::Exact,
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.impurity == 0.0
            && self.transmissivity == 1.0
            && self.detector_efficiency == 1.0
            && self.werner_visibility == 1.0
    }

    pub fn validate(&self) -> Result<()> {
        check_unit_range("impurity", self.impurity)?;
        check_unit_range("transmissivity", self.transmissivity)?;
        check_unit_range("detector_efficiency", self.detector_efficiency)?;
        check_unit_range("werner_visibility", self.werner_visibility)?;
        Ok(())
    }
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self::ideal()
    }
}

// ── Source ─────────────────────────────────────────────────────────────────

/// State of one source pair on its two output modes at [`PAIR_CUTOFF`].
///
/// The ideal source emits a single photon delocalized over both modes,
/// `(|01> + |10>)/sqrt(2)`.  With probability `impurity` it instead emits the
/// two-photon state obtained by splitting `|20>` on a balanced beamsplitter,
/// `|20>/2 - |11>/sqrt(2) + |02>/2`.  A Werner layer then mixes in the
/// maximally mixed state of the at-most-one-photon subspace with weight
/// `1 - werner_visibility`.
pub fn source_state(impurity: f64, werner_visibility: f64) -> Result<DensityOperator> {
    check_unit_range("impurity", impurity)?;
    check_unit_range("werner_visibility", werner_visibility)?;
    let system = ModeSystem::pair(PAIR_CUTOFF);
    let dim = system.dim();

    let mut psi = crate::fock::CVector::zeros(dim);
    let s = Complex64::new(0.5f64.sqrt(), 0.0);
    psi[system.index_of(&[0, 1])?] = s;
    psi[system.index_of(&[1, 0])?] = s;
    let psi = PureState::new(system.clone(), psi)?;

    let splitter = beamsplitter_unitary(0.5, 0.0, PAIR_CUTOFF)?;
    let two = PureState::basis_state(system.clone(), &[2, 0])?;
    let phi_amp = splitter.matrix() * two.amplitudes();
    let phi = PureState::new(system.clone(), phi_amp)?;

    let mut matrix = psi.to_density().matrix() * Complex64::new(1.0 - impurity, 0.0)
        + phi.to_density().matrix() * Complex64::new(impurity, 0.0);

    if werner_visibility < 1.0 {
        let w = 1.0 - werner_visibility;
        matrix *= Complex64::new(werner_visibility, 0.0);
        for occ in [[0, 0], [0, 1], [1, 0], [1, 1]] {
            let i = system.index_of(&occ)?;
            matrix[(i, i)] += Complex64::new(w / 4.0, 0.0);
        }
    }
    DensityOperator::new(system, matrix)
}

// ── Detectors ──────────────────────────────────────────────────────────────

/// Single-mode effect of a threshold detector with the given efficiency.
///
/// Exact form: each of `n` photons is missed independently, so the no-click
/// effect is `diag((1-eff)^n)`.  First-order form keeps only
/// `|0><0| + (1-eff)|1><1|`, treating two or more photons as always detected.
/// `fired` selects the complementary click effect.
pub fn detector_effect(
    efficiency: f64,
    fired: bool,
    cutoff: u32,
    fidelity: ChannelFidelity,
) -> Result<LinearOperator> {
    check_unit_range("detector_efficiency", efficiency)?;
    let system = ModeSystem::single(cutoff);
    let d = system.dim();
    let mut no_click = CMatrix::zeros(d, d);
    for n in 0..d {
        let p = match fidelity {
            ChannelFidelity::Exact => (1.0 - efficiency).powi(n as i32),
            ChannelFidelity::FirstOrder => match n {
                0 => 1.0,
                1 => 1.0 - efficiency,
                _ => 0.0,
            },
        };
        no_click[(n, n)] = Complex64::new(p, 0.0);
    }
    let matrix = if fired { CMatrix::identity(d, d) - no_click } else { no_click };
    LinearOperator::new(system, matrix)
}

// ── Loss ───────────────────────────────────────────────────────────────────

/// Kraus operators of single-mode transmission loss at the given cutoff.
///
/// Exact form: `<m-n| K_n |m> = sqrt(binom(m, n) T^(m-n) (1-T)^n)`, one
/// operator per number of lost photons; the channel is exactly trace
/// preserving.  First-order form: photon-subtraction operators
/// `sqrt(1-T) sqrt(n) |n-1><n|` for n = 1, 2 plus an identity part weighted to
/// preserve the trace at first order in (1-T).
pub fn loss_kraus(
    transmissivity: f64,
    cutoff: u32,
    fidelity: ChannelFidelity,
) -> Result<Vec<LinearOperator>> {
    check_unit_range("transmissivity", transmissivity)?;
    let system = ModeSystem::single(cutoff);
    let d = system.dim();
    if transmissivity == 1.0 {
        return Ok(vec![LinearOperator::identity(system)]);
    }
    let t = transmissivity;
    let mut ops = Vec::new();
    match fidelity {
        ChannelFidelity::Exact => {
            for lost in 0..d {
                let mut k = CMatrix::zeros(d, d);
                for m in lost..d {
                    let coeff =
                        (binom(m, lost) * t.powi((m - lost) as i32) * (1.0 - t).powi(lost as i32)).sqrt();
                    k[(m - lost, m)] = Complex64::new(coeff, 0.0);
                }
                ops.push(LinearOperator::new(system.clone(), k)?);
            }
        }
        ChannelFidelity::FirstOrder => {
            let mut k0 = CMatrix::zeros(d, d);
            for n in 0..d {
                k0[(n, n)] = Complex64::new(1.0 - 0.5 * (1.0 - t) * n as f64, 0.0);
            }
            ops.push(LinearOperator::new(system.clone(), k0)?);
            for n in 1..=(cutoff as usize).min(2) {
                let mut k = CMatrix::zeros(d, d);
                k[(n - 1, n)] = Complex64::new(((1.0 - t) * n as f64).sqrt(), 0.0);
                ops.push(LinearOperator::new(system.clone(), k)?);
            }
        }
    }
    Ok(ops)
}

fn binom(n: usize, k: usize) -> f64 {
    let mut out = 1.0;
    for i in 0..k {
        out *= (n - i) as f64 / (k - i) as f64;
    }
    out
}

// ── Party POVMs ────────────────────────────────────────────────────────────

/// Measurement variant at each party.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PovmVariant {
    /// Beamsplitter followed by two threshold detectors; outcomes 0, L, R, 2.
    Passive,
    /// Rank-one projections onto the single-photon eigenstates plus vacuum
    /// and double occupation; outcomes 0, L, R, 2.
    Projective,
    /// Beamsplitter followed by two number-resolving detectors; outcomes
    /// 0, R, S, L, K, 2 where S and K mean two photons in the right and left
    /// detector respectively.
    NumberResolved,
}

impl PovmVariant {
    /// Outcome labels in enumeration order.
    pub fn alphabet(self) -> &'static [char] {
        match self {
            PovmVariant::Passive | PovmVariant::Projective => &['0', 'L', 'R', '2'],
            PovmVariant::NumberResolved => &['0', 'R', 'S', 'L', 'K', '2'],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PovmVariant::Passive => "passive",
            PovmVariant::Projective => "projective",
            PovmVariant::NumberResolved => "number_resolved",
        }
    }
}

/// A labelled POVM on one party's ordered mode pair (left input, right input).
#[derive(Debug, Clone)]
pub struct Povm {
    variant: PovmVariant,
    labels: Vec<char>,
    effects: Vec<LinearOperator>,
}

impl Povm {
    pub fn variant(&self) -> PovmVariant {
        self.variant
    }

    pub fn labels(&self) -> &[char] {
        &self.labels
    }

    pub fn effects(&self) -> &[LinearOperator] {
        &self.effects
    }

    pub fn system(&self) -> &ModeSystem {
        self.effects[0].system()
    }

    pub fn effect_for(&self, label: char) -> Option<&LinearOperator> {
        self.labels.iter().position(|&l| l == label).map(|i| &self.effects[i])
    }

    /// Max-norm deviation of the effect sum from the identity.
    pub fn completeness_defect(&self) -> f64 {
        let dim = self.system().dim();
        let mut sum = CMatrix::zeros(dim, dim);
        for e in &self.effects {
            sum += e.matrix();
        }
        sum -= CMatrix::identity(dim, dim);
        sum.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Builds one party's POVM with beamsplitter transmissivity `t` and phase
/// `phi`.
///
/// The party mixes its pair on the beamsplitter and reads one detector per
/// output arm; outcome L (R) means only the left (right) arm fired.  Passive
/// effects are conjugated detector projectors `B^dag (D^x (x) D^y) B`, built
/// at twice [`PAIR_CUTOFF`] so that up to four input photons scatter exactly,
/// then compressed back onto the cutoff-2 pair.  Projective and
/// number-resolved variants are defined on the single-excitation subspace and
/// require unit efficiency.
pub fn party_povm(
    t: f64,
    phi: f64,
    variant: PovmVariant,
    efficiency: f64,
    fidelity: ChannelFidelity,
) -> Result<Povm> {
    check_unit_range("t", t)?;
    check_unit_range("detector_efficiency", efficiency)?;
    match variant {
        PovmVariant::Passive => passive_povm(t, phi, efficiency, fidelity),
        PovmVariant::Projective | PovmVariant::NumberResolved => {
            if efficiency != 1.0 {
                return Err(Error::UnsupportedCombination(format!(
                    "{} measurement requires detector_efficiency = 1",
                    variant.as_str()
                )));
            }
            Ok(single_excitation_povm(t, phi, variant))
        }
    }
}

fn passive_povm(t: f64, phi: f64, efficiency: f64, fidelity: ChannelFidelity) -> Result<Povm> {
    // Internal cutoff 2 * PAIR_CUTOFF: the joint input holds at most
    // 2 * PAIR_CUTOFF photons, so every scattered component is representable
    // and the compressed effects are exact on cutoff-2 states.
    let internal = 2 * PAIR_CUTOFF;
    let pair = ModeSystem::pair(internal);
    let splitter = beamsplitter_unitary(t, phi, internal)?;
    let no = detector_effect(efficiency, false, internal, fidelity)?;
    let yes = detector_effect(efficiency, true, internal, fidelity)?;

    let mut effects = Vec::with_capacity(4);
    for (left, right) in [(&no, &no), (&yes, &no), (&no, &yes), (&yes, &yes)] {
        let diag = embed(left, &["m0"], &pair)?.compose(&embed(right, &["m1"], &pair)?)?;
        let conjugated = splitter.adjoint().compose(&diag)?.compose(&splitter)?;
        effects.push(restrict_cutoff(&conjugated, PAIR_CUTOFF)?);
    }
    let povm =
        Povm { variant: PovmVariant::Passive, labels: PovmVariant::Passive.alphabet().to_vec(), effects };
    debug_assert!(povm.completeness_defect() <= POVM_TOL);
    Ok(povm)
}

/// Single-photon eigenstates of the measurement: `chi_l = B^dag |10>`,
/// `chi_r = B^dag |01>`.
fn chi_states(t: f64, phi: f64, system: &ModeSystem) -> (PureState, PureState) {
    let a = Complex64::new(t.sqrt(), 0.0);
    let b = Complex64::from_polar((1.0 - t).sqrt(), -phi);
    let i10 = system.index_of(&[1, 0]).expect("in range");
    let i01 = system.index_of(&[0, 1]).expect("in range");

    let mut left = crate::fock::CVector::zeros(system.dim());
    left[i10] = a;
    left[i01] = b;
    let mut right = crate::fock::CVector::zeros(system.dim());
    right[i01] = a;
    right[i10] = -b.conj();
    (
        PureState::new(system.clone(), left).expect("unit norm"),
        PureState::new(system.clone(), right).expect("unit norm"),
    )
}

fn single_excitation_povm(t: f64, phi: f64, variant: PovmVariant) -> Povm {
    let system = ModeSystem::pair(SINGLE_EXCITATION_CUTOFF);
    let (chi_l, chi_r) = chi_states(t, phi, &system);
    let proj = |s: &PureState| s.to_density().matrix().clone();
    let basis_proj = |occ: &[u32]| {
        let mut m = CMatrix::zeros(system.dim(), system.dim());
        m[(system.index_of(occ).expect("in range"), system.index_of(occ).expect("in range"))] = ONE;
        m
    };
    let p00 = basis_proj(&[0, 0]);
    let p11 = basis_proj(&[1, 1]);
    let op = |m: CMatrix| LinearOperator::new(system.clone(), m).expect("square");

    let effects = match variant {
        PovmVariant::Projective => {
            vec![op(p00), op(proj(&chi_l)), op(proj(&chi_r)), op(p11)]
        }
        PovmVariant::NumberResolved => {
            let split = 2.0 * t * (1.0 - t);
            let both = (2.0 * t - 1.0).powi(2);
            vec![
                op(p00),
                op(proj(&chi_r)),
                op(&p11 * Complex64::new(split, 0.0)),
                op(proj(&chi_l)),
                op(&p11 * Complex64::new(split, 0.0)),
                op(&p11 * Complex64::new(both, 0.0)),
            ]
        }
        PovmVariant::Passive => unreachable!("handled by passive_povm"),
    };
    let povm = Povm { variant, labels: variant.alphabet().to_vec(), effects };
    debug_assert!(povm.completeness_defect() <= POVM_TOL);
    povm
}

// ── Heralding ──────────────────────────────────────────────────────────────

/// Parameters of the heralded single-photon sources.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeraldingSpec {
    /// Photon-pair emission probability per pulse.
    pub pair_emission: f64,
    /// Efficiency of the heralding detector.
    pub detector_efficiency: f64,
    /// Number of pixels of the (multiplexed) heralding detector.
    pub pixel_count: u32,
    /// Pump pulse rate in Hz.
    pub pulse_rate: f64,
}

impl HeraldingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.pair_emission > 0.0 && self.pair_emission <= 1.0) {
            return Err(Error::ParameterRange {
                name: "pair_emission",
                value: self.pair_emission,
                expected: "(0, 1]",
            });
        }
        check_unit_range("detector_efficiency", self.detector_efficiency)?;
        if self.pixel_count == 0 {
            return Err(Error::ParameterRange {
                name: "pixel_count",
                value: 0.0,
                expected: ">= 1",
            });
        }
        if !(self.pulse_rate >= 0.0) {
            return Err(Error::ParameterRange {
                name: "pulse_rate",
                value: self.pulse_rate,
                expected: ">= 0",
            });
        }
        Ok(())
    }
}

/// Probability that a heralded emission actually carries two photon pairs,
/// conditioned on the herald.
///
/// With an M-pixel number-resolving herald, a double emission is accepted
/// only when both herald photons hit one pixel and at least one is detected,
/// or when they hit different pixels and exactly one is detected.  Without
/// number resolution every detected double emission is accepted.
pub fn heralding_impurity(spec: &HeraldingSpec, number_resolving: bool) -> Result<f64> {
    spec.validate()?;
    let q = spec.pair_emission;
    let eta = spec.detector_efficiency;
    if eta == 0.0 {
        return Err(Error::ParameterRange {
            name: "detector_efficiency",
            value: eta,
            expected: "> 0 for heralding",
        });
    }
    if number_resolving {
        let m = spec.pixel_count as f64;
        let same_pixel = (1.0 - (1.0 - eta).powi(2)) / m;
        let split_pixels = 2.0 * ((m - 1.0) / m) * eta * (1.0 - eta);
        Ok(q * (same_pixel + split_pixels) / eta)
    } else {
        Ok(q * (2.0 - eta))
    }
}

/// Rate of heralded triangle rounds: all three sources must emit and herald.
pub fn repetition_rate(spec: &HeraldingSpec) -> Result<f64> {
    spec.validate()?;
    Ok((spec.pair_emission * spec.detector_efficiency).powi(3) * spec.pulse_rate)
}

// ── Tests ──────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{born_probability, OPERATOR_TOL};
    use approx::assert_abs_diff_eq;

    const T_GRID: [f64; 5] = [0.0, 0.3, 0.5, 0.85, 1.0];

    #[test]
    fn ideal_source_is_shared_single_photon() {
        let rho = source_state(0.0, 1.0).unwrap();
        let sys = rho.system().clone();
        let i01 = sys.index_of(&[0, 1]).unwrap();
        let i10 = sys.index_of(&[1, 0]).unwrap();
        assert_abs_diff_eq!(rho.matrix()[(i01, i01)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.matrix()[(i10, i10)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.matrix()[(i01, i10)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn impure_source_has_split_double_excitation() {
        // Frozen amplitudes of |2,0> after a balanced beamsplitter.
        let q = 0.006875;
        let rho = source_state(q, 1.0).unwrap();
        let sys = rho.system().clone();
        let i20 = sys.index_of(&[2, 0]).unwrap();
        let i11 = sys.index_of(&[1, 1]).unwrap();
        let i02 = sys.index_of(&[0, 2]).unwrap();
        assert_abs_diff_eq!(rho.matrix()[(i20, i20)].re, q * 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.matrix()[(i11, i11)].re, q * 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.matrix()[(i02, i02)].re, q * 0.25, epsilon = 1e-15);
        // Cross terms keep the 1/2, -1/sqrt(2), 1/2 signs.
        assert_abs_diff_eq!(
            rho.matrix()[(i20, i11)].re,
            q * 0.5 * (-std::f64::consts::FRAC_1_SQRT_2),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-15);
        rho.validate_positivity().unwrap();
    }

    #[test]
    fn werner_layer_mixes_single_excitation_subspace() {
        let rho = source_state(0.0, 0.0).unwrap();
        let sys = rho.system().clone();
        for occ in [[0u32, 0], [0, 1], [1, 0], [1, 1]] {
            let i = sys.index_of(&occ).unwrap();
            assert_abs_diff_eq!(rho.matrix()[(i, i)].re, 0.25, epsilon = 1e-15);
        }
        let i01 = sys.index_of(&[0, 1]).unwrap();
        let i10 = sys.index_of(&[1, 0]).unwrap();
        assert_abs_diff_eq!(rho.matrix()[(i01, i10)].norm(), 0.0, epsilon = 1e-15);

        let half = source_state(0.0, 0.6).unwrap();
        assert_abs_diff_eq!(half.matrix()[(i01, i10)].re, 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(half.trace(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn detector_effects_sum_to_identity_and_match_forms() {
        for &(eff, fid) in &[
            (1.0, ChannelFidelity::Exact),
            (0.95, ChannelFidelity::Exact),
            (0.95, ChannelFidelity::FirstOrder),
        ] {
            let no = detector_effect(eff, false, 2, fid).unwrap();
            let yes = detector_effect(eff, true, 2, fid).unwrap();
            let sum = no.add(&yes).unwrap();
            assert!(sum
                .matrix()
                .iter()
                .zip(CMatrix::identity(3, 3).iter())
                .all(|(a, b)| (a - b).norm() == 0.0));
        }
        let no = detector_effect(0.95, false, 2, ChannelFidelity::FirstOrder).unwrap();
        assert_abs_diff_eq!(no.matrix()[(1, 1)].re, 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(no.matrix()[(2, 2)].re, 0.0, epsilon = 0.0);

        let yes = detector_effect(0.95, true, 2, ChannelFidelity::Exact).unwrap();
        assert_abs_diff_eq!(yes.matrix()[(2, 2)].re, 0.9975, epsilon = 1e-15);

        let perfect_no = detector_effect(1.0, false, 2, ChannelFidelity::Exact).unwrap();
        assert_abs_diff_eq!(perfect_no.matrix()[(0, 0)].re, 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(perfect_no.matrix()[(1, 1)].re, 0.0, epsilon = 0.0);
    }

    #[test]
    fn exact_loss_is_trace_preserving() {
        for &t in &[0.0, 0.37, 0.9, 1.0] {
            let kraus = loss_kraus(t, 2, ChannelFidelity::Exact).unwrap();
            let mut sum = CMatrix::zeros(3, 3);
            for k in &kraus {
                sum += k.matrix().adjoint() * k.matrix();
            }
            let defect = (&sum - CMatrix::identity(3, 3)).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(defect <= OPERATOR_TOL, "T = {t}: defect {defect}");
        }
        assert_eq!(loss_kraus(1.0, 2, ChannelFidelity::Exact).unwrap().len(), 1);
    }

    #[test]
    fn single_photon_loss_sends_one_to_vacuum() {
        let t = 0.9;
        let kraus = loss_kraus(t, 2, ChannelFidelity::Exact).unwrap();
        let k1 = kraus[1].matrix();
        assert_abs_diff_eq!(k1[(0, 1)].re, (1.0 - t).sqrt(), epsilon = 1e-15);

        let first = loss_kraus(t, 2, ChannelFidelity::FirstOrder).unwrap();
        // Contribution of the one-photon subtraction on |1><1| is (1-T)|0><0|.
        assert_abs_diff_eq!(first[1].matrix()[(0, 1)].re.powi(2), 1.0 - t, epsilon = 1e-15);
        assert_abs_diff_eq!(first[2].matrix()[(1, 2)].re.powi(2), 2.0 * (1.0 - t), epsilon = 1e-15);
    }

    #[test]
    fn first_order_loss_normalization_defect_is_second_order() {
        for &t in &[0.99, 0.94, 0.9] {
            let kraus = loss_kraus(t, 2, ChannelFidelity::FirstOrder).unwrap();
            let mut sum = CMatrix::zeros(3, 3);
            for k in &kraus {
                sum += k.matrix().adjoint() * k.matrix();
            }
            let defect = (&sum - CMatrix::identity(3, 3)).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(defect <= 1.5 * (1.0 - t).powi(2), "T = {t}: defect {defect}");
            assert!(defect > 0.0);
        }
    }

    #[test]
    fn povm_completeness_across_variants() {
        for &t in &T_GRID {
            for &phi in &[0.0, 1.1] {
                for &(variant, eff, fid) in &[
                    (PovmVariant::Passive, 1.0, ChannelFidelity::Exact),
                    (PovmVariant::Passive, 0.94, ChannelFidelity::Exact),
                    (PovmVariant::Passive, 0.94, ChannelFidelity::FirstOrder),
                    (PovmVariant::Projective, 1.0, ChannelFidelity::Exact),
                    (PovmVariant::NumberResolved, 1.0, ChannelFidelity::Exact),
                ] {
                    let povm = party_povm(t, phi, variant, eff, fid).unwrap();
                    assert!(
                        povm.completeness_defect() <= POVM_TOL,
                        "t={t} phi={phi} {variant:?}: defect {}",
                        povm.completeness_defect()
                    );
                    assert_eq!(povm.labels().len(), variant.alphabet().len());
                }
            }
        }
    }

    #[test]
    fn povm_effects_are_positive() {
        for &t in &T_GRID {
            let povm = party_povm(t, 0.4, PovmVariant::Passive, 0.95, ChannelFidelity::Exact).unwrap();
            for e in povm.effects() {
                let min = e
                    .matrix()
                    .clone()
                    .symmetric_eigenvalues()
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min);
                assert!(min >= -POVM_TOL, "t = {t}: min eigenvalue {min}");
            }
        }
    }

    #[test]
    fn passive_effects_reduce_to_projective_forms_on_single_excitations() {
        // With perfect detectors the passive POVM restricted to at most one
        // photon per mode carries the closed forms:
        //   Pi_L = |chi_l><chi_l| + 2t(1-t)|11><11|, Pi_2 = (2t-1)^2 |11><11|.
        let t = 0.3;
        let phi = 0.8;
        let povm = party_povm(t, phi, PovmVariant::Passive, 1.0, ChannelFidelity::Exact).unwrap();
        let low = ModeSystem::pair(SINGLE_EXCITATION_CUTOFF);
        let (chi_l, chi_r) = chi_states(t, phi, &low);
        let split = 2.0 * t * (1.0 - t);
        let i11 = low.index_of(&[1, 1]).unwrap();

        for (label, chi) in [('L', &chi_l), ('R', &chi_r)] {
            let restricted = restrict_cutoff(povm.effect_for(label).unwrap(), 1).unwrap();
            let mut expect = chi.to_density().matrix().clone();
            expect[(i11, i11)] += Complex64::new(split, 0.0);
            let diff = (restricted.matrix() - expect).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(diff <= 1e-14, "{label}: {diff}");
        }

        let two = restrict_cutoff(povm.effect_for('2').unwrap(), 1).unwrap();
        assert_abs_diff_eq!(two.matrix()[(i11, i11)].re, (2.0 * t - 1.0).powi(2), epsilon = 1e-14);

        // Balanced splitter: double clicks are impossible for single excitations.
        let balanced = party_povm(0.5, 0.0, PovmVariant::Passive, 1.0, ChannelFidelity::Exact).unwrap();
        let two = restrict_cutoff(balanced.effect_for('2').unwrap(), 1).unwrap();
        assert!(two.matrix().iter().map(|z| z.norm()).fold(0.0, f64::max) <= 1e-14);
    }

    #[test]
    fn number_resolved_double_click_weights() {
        let povm = party_povm(0.3, 0.0, PovmVariant::NumberResolved, 1.0, ChannelFidelity::Exact).unwrap();
        let sys = povm.system().clone();
        let i11 = sys.index_of(&[1, 1]).unwrap();
        assert_abs_diff_eq!(povm.effect_for('S').unwrap().matrix()[(i11, i11)].re, 0.42, epsilon = 1e-15);
        assert_abs_diff_eq!(povm.effect_for('K').unwrap().matrix()[(i11, i11)].re, 0.42, epsilon = 1e-15);
        assert_abs_diff_eq!(
            povm.effect_for('2').unwrap().matrix()[(i11, i11)].re,
            0.16,
            epsilon = 1e-14
        );
    }

    #[test]
    fn coarse_graining_identities_hold_at_operator_level() {
        // Number-resolved effects refine both other variants:
        //   passive: R = R1 + S, L = L + K, 2 = 2
        //   projective: 2 = S + K + 2, R = R1, L = L.
        for &t in &[0.3, 0.65, 0.85] {
            let phi = 0.25;
            let passive = party_povm(t, phi, PovmVariant::Passive, 1.0, ChannelFidelity::Exact).unwrap();
            let proj = party_povm(t, phi, PovmVariant::Projective, 1.0, ChannelFidelity::Exact).unwrap();
            let nr = party_povm(t, phi, PovmVariant::NumberResolved, 1.0, ChannelFidelity::Exact).unwrap();
            let low = |label| restrict_cutoff(passive.effect_for(label).unwrap(), 1).unwrap();
            let nr_e = |label| nr.effect_for(label).unwrap().clone();

            let checks = [
                (low('R'), nr_e('R').add(&nr_e('S')).unwrap()),
                (low('L'), nr_e('L').add(&nr_e('K')).unwrap()),
                (low('2'), nr_e('2')),
                (low('0'), nr_e('0')),
                (proj.effect_for('2').unwrap().clone(), nr_e('S').add(&nr_e('K')).unwrap().add(&nr_e('2')).unwrap()),
                (proj.effect_for('R').unwrap().clone(), nr_e('R')),
                (proj.effect_for('L').unwrap().clone(), nr_e('L')),
            ];
            for (i, (a, b)) in checks.iter().enumerate() {
                let diff = (a.matrix() - b.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
                assert!(diff <= POVM_TOL, "t = {t}, check {i}: {diff}");
            }
        }
    }

    #[test]
    fn projective_requires_perfect_detectors() {
        assert!(party_povm(0.5, 0.0, PovmVariant::Projective, 0.9, ChannelFidelity::Exact).is_err());
        assert!(party_povm(0.5, 0.0, PovmVariant::NumberResolved, 0.99, ChannelFidelity::Exact).is_err());
    }

    #[test]
    fn povm_probabilities_on_vacuum() {
        let povm = party_povm(0.7, 0.0, PovmVariant::Passive, 1.0, ChannelFidelity::Exact).unwrap();
        let vac = PureState::basis_state(povm.system().clone(), &[0, 0]).unwrap().to_density();
        assert_abs_diff_eq!(born_probability(&vac, povm.effect_for('0').unwrap()).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(born_probability(&vac, povm.effect_for('2').unwrap()).unwrap(), 0.0, epsilon = 1e-14);
    }

    fn spec() -> HeraldingSpec {
        HeraldingSpec {
            pair_emission: 0.01,
            detector_efficiency: 0.7,
            pixel_count: 8,
            pulse_rate: 1e7,
        }
    }

    #[test]
    fn heralding_impurity_values() {
        assert_abs_diff_eq!(heralding_impurity(&spec(), true).unwrap(), 0.006875, epsilon = 1e-15);
        assert_abs_diff_eq!(heralding_impurity(&spec(), false).unwrap(), 0.013, epsilon = 1e-15);

        let mut bad = spec();
        bad.detector_efficiency = 0.0;
        assert!(heralding_impurity(&bad, true).is_err());
    }

    #[test]
    fn repetition_rate_values() {
        assert_abs_diff_eq!(repetition_rate(&spec()).unwrap(), 3.43, epsilon = 1e-12);
        let mut perfect = spec();
        perfect.pair_emission = 1.0;
        perfect.detector_efficiency = 1.0;
        assert_abs_diff_eq!(repetition_rate(&perfect).unwrap(), 1e7, epsilon = 0.0);
    }
}
