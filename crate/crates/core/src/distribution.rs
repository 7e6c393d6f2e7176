//! Outcome distributions of the triangle and ring experiments: exact
//! simulation from the optical model, the closed-form ideal triangle table,
//! coarse graining between measurement variants, and support checks.
//!
//! Outcomes are stored in a flat table indexed party-0-major: the outcome of
//! the first party is the most significant digit in base `alphabet.len()`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    apply_mode_channel, check_unit_range, product_density, restrict_cutoff, CMatrix,
    DensityOperator, LinearOperator, ModeSystem,
};
use crate::optics::{
    loss_kraus, party_povm, source_state, ChannelFidelity, NoiseParams, PovmVariant, PAIR_CUTOFF,
    SINGLE_EXCITATION_CUTOFF,
};

/// Ring sizes above this are rejected: the outcome table and the contraction
/// cost grow as `alphabet^N`.
pub const MAX_RING_PARTIES: usize = 10;
/// Probabilities below this magnitude are clipped to zero; anything more
/// negative is treated as a simulation bug.
pub const NEGATIVE_PROBABILITY_TOL: f64 = 1e-8;

const IMAG_TOL: f64 = 1e-9;
const NORMALIZATION_TOL: f64 = 1e-9;
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

// ── Distribution container ─────────────────────────────────────────────────

/// Provenance of a simulated distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionMetadata {
    /// "triangle", "ring" or "closed_form".
    pub scenario: String,
    pub transmissivity: f64,
    pub phases: Vec<f64>,
    pub variant: PovmVariant,
    pub noise: NoiseParams,
}

/// Joint outcome distribution of an N-party experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    party_count: usize,
    alphabet: Vec<char>,
    probabilities: Vec<f64>,
    metadata: Option<DistributionMetadata>,
}

impl OutcomeDistribution {
    /// Validates shape and clips rounding-level negative entries to zero.
    pub fn new(
        party_count: usize,
        alphabet: Vec<char>,
        probabilities: Vec<f64>,
        metadata: Option<DistributionMetadata>,
    ) -> Result<Self> {
        if party_count == 0 {
            return Err(Error::ShapeMismatch("party_count must be at least 1".into()));
        }
        if alphabet.is_empty() {
            return Err(Error::AlphabetMismatch("alphabet must be non-empty".into()));
        }
        for (i, c) in alphabet.iter().enumerate() {
            if alphabet[..i].contains(c) {
                return Err(Error::AlphabetMismatch(format!("duplicate symbol '{c}'")));
            }
        }
        let expected = alphabet.len().pow(party_count as u32);
        if probabilities.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "expected {expected} probabilities for {party_count} parties over {} symbols, got {}",
                alphabet.len(),
                probabilities.len()
            )));
        }
        let mut clipped = probabilities;
        for (i, p) in clipped.iter_mut().enumerate() {
            if *p < -NEGATIVE_PROBABILITY_TOL || *p > 1.0 + NEGATIVE_PROBABILITY_TOL {
                return Err(Error::NegativeProbability {
                    outcome: outcome_label(&alphabet, party_count, i),
                    value: *p,
                });
            }
            *p = p.clamp(0.0, 1.0);
        }
        Ok(Self { party_count, alphabet, probabilities: clipped, metadata })
    }

    pub fn uniform(party_count: usize, alphabet: Vec<char>) -> Result<Self> {
        let count = alphabet.len().pow(party_count as u32);
        Self::new(party_count, alphabet, vec![1.0 / count as f64; count], None)
    }

    pub fn party_count(&self) -> usize {
        self.party_count
    }

    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn metadata(&self) -> Option<&DistributionMetadata> {
        self.metadata.as_ref()
    }

    pub fn outcome_count(&self) -> usize {
        self.probabilities.len()
    }

    pub fn symbol_index(&self, symbol: char) -> Result<usize> {
        self.alphabet
            .iter()
            .position(|&c| c == symbol)
            .ok_or_else(|| Error::AlphabetMismatch(format!("symbol '{symbol}' not in alphabet")))
    }

    pub fn index_of(&self, outcome: &[char]) -> Result<usize> {
        if outcome.len() != self.party_count {
            return Err(Error::ShapeMismatch(format!(
                "outcome has {} symbols, expected {}",
                outcome.len(),
                self.party_count
            )));
        }
        let mut index = 0;
        for &symbol in outcome {
            index = index * self.alphabet.len() + self.symbol_index(symbol)?;
        }
        Ok(index)
    }

    pub fn probability(&self, outcome: &[char]) -> Result<f64> {
        Ok(self.probabilities[self.index_of(outcome)?])
    }

    pub fn outcome_symbols(&self, index: usize) -> Vec<char> {
        decode_outcome(index, self.alphabet.len(), self.party_count)
            .into_iter()
            .map(|d| self.alphabet[d])
            .collect()
    }

    pub fn outcome_label(&self, index: usize) -> String {
        outcome_label(&self.alphabet, self.party_count, index)
    }

    /// Iterates `(outcome label, probability)` in table order.
    pub fn iter(&self) -> impl Iterator<Item = (String, f64)> + '_ {
        self.probabilities.iter().enumerate().map(|(i, &p)| (self.outcome_label(i), p))
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Largest entrywise difference; shape and alphabet must agree.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.party_count != other.party_count {
            return Err(Error::ShapeMismatch(format!(
                "party counts differ: {} vs {}",
                self.party_count, other.party_count
            )));
        }
        if self.alphabet != other.alphabet {
            return Err(Error::AlphabetMismatch(format!(
                "alphabets differ: {:?} vs {:?}",
                self.alphabet, other.alphabet
            )));
        }
        Ok(self
            .probabilities
            .iter()
            .zip(&other.probabilities)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

fn decode_outcome(mut index: usize, base: usize, parties: usize) -> Vec<usize> {
    let mut digits = vec![0; parties];
    for slot in digits.iter_mut().rev() {
        *slot = index % base;
        index /= base;
    }
    digits
}

fn outcome_label(alphabet: &[char], parties: usize, index: usize) -> String {
    decode_outcome(index, alphabet.len(), parties).into_iter().map(|d| alphabet[d]).collect()
}

// ── Closed-form ideal triangle ─────────────────────────────────────────────

/// Analytic outcome table of the ideal triangle with equal transmissivity `t`
/// at every party and total phase `total_phase` (the sum of the three
/// beamsplitter phases).  Every probability is invariant under cyclic
/// rotation of the parties.
pub fn closed_form_ideal(t: f64, total_phase: f64) -> Result<OutcomeDistribution> {
    check_unit_range("t", t)?;
    let s = t * (1.0 - t);
    let srt = s.sqrt();
    let c = total_phase.cos();
    let d2 = (2.0 * t - 1.0).powi(2);

    // One representative per cyclic class; rotations are filled in below.
    let entries: [(&str, f64); 12] = [
        ("0LL", s / 4.0),
        ("0RR", s / 4.0),
        ("0RL", s * (1.0 - t) / 2.0),
        ("0LR", s * t / 2.0),
        ("02R", d2 * t / 8.0),
        ("02L", d2 * (1.0 - t) / 8.0),
        ("0R2", d2 * (1.0 - t) / 8.0),
        ("0L2", d2 * t / 8.0),
        ("RRL", s * (1.0 + 2.0 * c * srt) / 8.0),
        ("LLR", s * (1.0 - 2.0 * c * srt) / 8.0),
        ("LLL", (1.0 - 3.0 * s + 2.0 * s * srt * c) / 8.0),
        ("RRR", (1.0 - 3.0 * s - 2.0 * s * srt * c) / 8.0),
    ];

    let alphabet = PovmVariant::Passive.alphabet().to_vec();
    let position = |c: char| alphabet.iter().position(|&x| x == c).expect("known symbol");
    let mut table = vec![0.0; 64];
    for (pattern, value) in entries {
        let d: Vec<usize> = pattern.chars().map(position).collect();
        for rotation in [[d[0], d[1], d[2]], [d[1], d[2], d[0]], [d[2], d[0], d[1]]] {
            table[(rotation[0] * 4 + rotation[1]) * 4 + rotation[2]] = value;
        }
    }

    OutcomeDistribution::new(
        3,
        alphabet,
        table,
        Some(DistributionMetadata {
            scenario: "closed_form".into(),
            transmissivity: t,
            phases: vec![total_phase],
            variant: PovmVariant::Passive,
            noise: NoiseParams::ideal(),
        }),
    )
}

// ── Shared simulation pieces ───────────────────────────────────────────────

fn ensure_variant_supports_noise(variant: PovmVariant, noise: &NoiseParams) -> Result<()> {
    if variant != PovmVariant::Passive && !noise.is_ideal() {
        return Err(Error::UnsupportedCombination(format!(
            "{} measurement is defined on the single-excitation subspace and supports only ideal noise",
            variant.as_str()
        )));
    }
    Ok(())
}

/// Without source impurity every mode holds at most one photon, so the
/// simulation can run at cutoff 1.
fn working_cutoff(noise: &NoiseParams) -> u32 {
    if noise.impurity > 0.0 {
        PAIR_CUTOFF
    } else {
        SINGLE_EXCITATION_CUTOFF
    }
}

/// Source pair state with per-mode loss already applied, at the working
/// cutoff.  Loss commutes with forming the network product, so applying it
/// on the shared pair is exact and much cheaper.
fn prepared_source(noise: &NoiseParams, cutoff: u32) -> Result<DensityOperator> {
    let mut rho = source_state(noise.impurity, noise.werner_visibility)?;
    if cutoff < PAIR_CUTOFF {
        let wrapped = LinearOperator::new(rho.system().clone(), rho.matrix().clone())?;
        let restricted = restrict_cutoff(&wrapped, cutoff)?;
        rho = DensityOperator::new_unnormalized(
            restricted.system().clone(),
            restricted.matrix().clone(),
        )?;
    }
    if noise.transmissivity < 1.0 {
        let kraus = loss_kraus(noise.transmissivity, cutoff, noise.fidelity)?;
        rho = apply_mode_channel(&rho, "m0", &kraus)?;
        rho = apply_mode_channel(&rho, "m1", &kraus)?;
    }
    Ok(rho)
}

/// One party's effect matrices at the working cutoff, in alphabet order.
fn party_effect_matrices(
    t: f64,
    phi: f64,
    variant: PovmVariant,
    noise: &NoiseParams,
    cutoff: u32,
) -> Result<Vec<CMatrix>> {
    let povm = party_povm(t, phi, variant, noise.detector_efficiency, noise.fidelity)?;
    povm.effects()
        .iter()
        .map(|e| {
            if e.system().cutoff() > cutoff {
                Ok(restrict_cutoff(e, cutoff)?.matrix().clone())
            } else {
                Ok(e.matrix().clone())
            }
        })
        .collect()
}

/// Multiplies `m` on the right by `e` acting on one party's mode pair.
/// Party digits are base `pair_dim`, party 0 most significant.
fn right_apply_pair(m: &CMatrix, e: &CMatrix, party: usize, parties: usize, pair_dim: usize) -> CMatrix {
    let dim = m.nrows();
    let lo = pair_dim.pow((parties - 1 - party) as u32);
    let hi = dim / (lo * pair_dim);
    let one = Complex64::new(1.0, 0.0);
    let mut out = CMatrix::zeros(dim, dim);
    for h in 0..hi {
        for jd in 0..pair_dim {
            for kd in 0..pair_dim {
                let w = e[(kd, jd)];
                if w == ZERO {
                    continue;
                }
                for l in 0..lo {
                    let cj = (h * pair_dim + jd) * lo + l;
                    let ck = (h * pair_dim + kd) * lo + l;
                    let (mut dst, src) = (out.column_mut(cj), m.column(ck));
                    dst.axpy(w, &src, one);
                }
            }
        }
    }
    out
}

/// `Tr[m (I (x) e)]` with `e` on the last party's pair digit.
fn trace_with_last_pair(m: &CMatrix, e: &CMatrix, pair_dim: usize) -> Complex64 {
    let hi = m.nrows() / pair_dim;
    let mut acc = ZERO;
    for h in 0..hi {
        for i in 0..pair_dim {
            for j in 0..pair_dim {
                let w = e[(j, i)];
                if w != ZERO {
                    acc += m[(h * pair_dim + i, h * pair_dim + j)] * w;
                }
            }
        }
    }
    acc
}

fn real_probability(z: Complex64, outcome: &str) -> Result<f64> {
    if z.im.abs() > IMAG_TOL {
        return Err(Error::InvalidState(format!(
            "probability of {outcome} has imaginary part {:e}",
            z.im
        )));
    }
    Ok(z.re)
}

fn check_normalization(probabilities: &[f64], noise: &NoiseParams) -> Result<()> {
    // First-order channels are not trace preserving; only the exact model
    // must normalize.
    if noise.fidelity == ChannelFidelity::Exact {
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidState(format!("probabilities sum to {total}")));
        }
    }
    Ok(())
}

// ── Triangle ───────────────────────────────────────────────────────────────

/// Simulates the triangle: three sources on mode pairs (A2, B1), (B2, C1),
/// (C2, A1), one beamsplitter measurement per party with phase `phases[k]`.
pub fn triangle_distribution(
    t: f64,
    phases: &[f64; 3],
    variant: PovmVariant,
    noise: &NoiseParams,
) -> Result<OutcomeDistribution> {
    noise.validate()?;
    ensure_variant_supports_noise(variant, noise)?;
    let probabilities = triangle_with_cutoff(t, phases, variant, noise, working_cutoff(noise))?;
    check_normalization(&probabilities, noise)?;
    OutcomeDistribution::new(
        3,
        variant.alphabet().to_vec(),
        probabilities,
        Some(DistributionMetadata {
            scenario: "triangle".into(),
            transmissivity: t,
            phases: phases.to_vec(),
            variant,
            noise: *noise,
        }),
    )
}

fn triangle_with_cutoff(
    t: f64,
    phases: &[f64; 3],
    variant: PovmVariant,
    noise: &NoiseParams,
    cutoff: u32,
) -> Result<Vec<f64>> {
    let pair = prepared_source(noise, cutoff)?;
    let system = ModeSystem::triangle(cutoff);
    let rho = product_density(
        &system,
        &[(&pair, &["A2", "B1"]), (&pair, &["B2", "C1"]), (&pair, &["C2", "A1"])],
    )?;
    let effects: Vec<Vec<CMatrix>> = (0..3)
        .map(|k| party_effect_matrices(t, phases[k], variant, noise, cutoff))
        .collect::<Result<_>>()?;

    let alpha = variant.alphabet().len();
    let pair_dim = ((cutoff + 1) * (cutoff + 1)) as usize;
    let mut probabilities = vec![0.0; alpha * alpha * alpha];
    for (ia, ea) in effects[0].iter().enumerate() {
        let after_a = right_apply_pair(rho.matrix(), ea, 0, 3, pair_dim);
        for (ib, eb) in effects[1].iter().enumerate() {
            let after_ab = right_apply_pair(&after_a, eb, 1, 3, pair_dim);
            for (ic, ec) in effects[2].iter().enumerate() {
                let index = (ia * alpha + ib) * alpha + ic;
                let z = trace_with_last_pair(&after_ab, ec, pair_dim);
                probabilities[index] =
                    real_probability(z, &outcome_label(variant.alphabet(), 3, index))?;
            }
        }
    }
    Ok(probabilities)
}

// ── Ring ───────────────────────────────────────────────────────────────────

/// Simulates the N-party ring: source k shares a pair between party k's right
/// mode and party k+1's left mode (cyclically); party k measures its
/// (left, right) pair with phase `phases[k]`.
///
/// The joint distribution is contracted as a cyclic product of per-party
/// transfer matrices over the bond carrying one mode's row and column index,
/// so the cost is `alphabet^N` times a fixed matrix size instead of the full
/// 2N-mode Hilbert space.
pub fn ring_distribution(
    parties: usize,
    t: f64,
    phases: &[f64],
    variant: PovmVariant,
    noise: &NoiseParams,
) -> Result<OutcomeDistribution> {
    if parties < 3 {
        return Err(Error::MalformedProblem(format!(
            "ring needs at least 3 parties, got {parties}"
        )));
    }
    if parties > MAX_RING_PARTIES {
        return Err(Error::RingTooLarge { n: parties, max: MAX_RING_PARTIES });
    }
    if phases.len() != parties {
        return Err(Error::ShapeMismatch(format!(
            "expected {parties} phases, got {}",
            phases.len()
        )));
    }
    noise.validate()?;
    ensure_variant_supports_noise(variant, noise)?;

    let cutoff = working_cutoff(noise);
    let pair = prepared_source(noise, cutoff)?;
    let d = (cutoff + 1) as usize;
    let transfer: Vec<Vec<CMatrix>> = (0..parties)
        .map(|k| {
            let effects = party_effect_matrices(t, phases[k], variant, noise, cutoff)?;
            Ok(effects.iter().map(|e| transfer_matrix(pair.matrix(), e, d)).collect())
        })
        .collect::<Result<_>>()?;

    let alpha = variant.alphabet().len();
    let mut probabilities = vec![0.0; alpha.pow(parties as u32)];
    let identity = CMatrix::identity(d * d, d * d);
    contract_outcomes(&transfer, variant.alphabet(), 0, &identity, 0, &mut probabilities)?;
    check_normalization(&probabilities, noise)?;

    OutcomeDistribution::new(
        parties,
        variant.alphabet().to_vec(),
        probabilities,
        Some(DistributionMetadata {
            scenario: "ring".into(),
            transmissivity: t,
            phases: phases.to_vec(),
            variant,
            noise: *noise,
        }),
    )
}

/// Transfer matrix of one party-outcome pair.  Row index packs party k's left
/// mode (row, column) occupancies, column index party k+1's; contracting the
/// party's own right modes against the source that feeds them:
///
///   T[(l, l'), (m, m')] = sum_{r, r'} rho[(r, m), (r', m')] E[(l', r'), (l, r)]
pub(crate) fn transfer_matrix(rho: &CMatrix, effect: &CMatrix, d: usize) -> CMatrix {
    let bond = d * d;
    let mut out = CMatrix::zeros(bond, bond);
    for l in 0..d {
        for lp in 0..d {
            for m in 0..d {
                for mp in 0..d {
                    let mut acc = ZERO;
                    for r in 0..d {
                        for rp in 0..d {
                            acc += rho[(r * d + m, rp * d + mp)] * effect[(lp * d + rp, l * d + r)];
                        }
                    }
                    out[(l * d + lp, m * d + mp)] = acc;
                }
            }
        }
    }
    out
}

fn contract_outcomes(
    transfer: &[Vec<CMatrix>],
    alphabet: &[char],
    party: usize,
    prefix: &CMatrix,
    base: usize,
    probabilities: &mut [f64],
) -> Result<()> {
    let alpha = alphabet.len();
    let last = party == transfer.len() - 1;
    for (i, t) in transfer[party].iter().enumerate() {
        let index = base * alpha + i;
        if last {
            let mut z = ZERO;
            for r in 0..prefix.nrows() {
                for c in 0..prefix.ncols() {
                    z += prefix[(r, c)] * t[(c, r)];
                }
            }
            probabilities[index] =
                real_probability(z, &outcome_label(alphabet, transfer.len(), index))?;
        } else {
            contract_outcomes(transfer, alphabet, party + 1, &(prefix * t), index, probabilities)?;
        }
    }
    Ok(())
}

// ── Coarse graining ────────────────────────────────────────────────────────

/// Symbol-wise surjection from one outcome alphabet onto another, applied at
/// every party.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseGrainMap {
    from: Vec<char>,
    to: Vec<char>,
    assignment: Vec<usize>,
}

impl CoarseGrainMap {
    pub fn new(from: Vec<char>, to: Vec<char>, pairs: &[(char, char)]) -> Result<Self> {
        if pairs.len() != from.len() {
            return Err(Error::AlphabetMismatch(format!(
                "expected {} mappings, got {}",
                from.len(),
                pairs.len()
            )));
        }
        let mut assignment = vec![usize::MAX; from.len()];
        for &(src, dst) in pairs {
            let i = from
                .iter()
                .position(|&c| c == src)
                .ok_or_else(|| Error::AlphabetMismatch(format!("'{src}' not in source alphabet")))?;
            let j = to
                .iter()
                .position(|&c| c == dst)
                .ok_or_else(|| Error::AlphabetMismatch(format!("'{dst}' not in target alphabet")))?;
            if assignment[i] != usize::MAX {
                return Err(Error::AlphabetMismatch(format!("'{src}' mapped twice")));
            }
            assignment[i] = j;
        }
        Ok(Self { from, to, assignment })
    }

    /// Merges the number-resolved double-click outcomes into the threshold
    /// single-click ones: S into R and K into L.
    pub fn number_resolved_to_passive() -> Self {
        Self::new(
            PovmVariant::NumberResolved.alphabet().to_vec(),
            PovmVariant::Passive.alphabet().to_vec(),
            &[('0', '0'), ('R', 'R'), ('S', 'R'), ('L', 'L'), ('K', 'L'), ('2', '2')],
        )
        .expect("static map")
    }

    /// Merges every two-photon outcome into '2', matching the projective
    /// measurement's double-occupation projector.
    pub fn number_resolved_to_projective() -> Self {
        Self::new(
            PovmVariant::NumberResolved.alphabet().to_vec(),
            PovmVariant::Projective.alphabet().to_vec(),
            &[('0', '0'), ('R', 'R'), ('S', '2'), ('L', 'L'), ('K', '2'), ('2', '2')],
        )
        .expect("static map")
    }

    /// Swaps the two detector arms at every party.
    pub fn swap_left_right() -> Self {
        let a = PovmVariant::Passive.alphabet().to_vec();
        Self::new(a.clone(), a, &[('0', '0'), ('L', 'R'), ('R', 'L'), ('2', '2')])
            .expect("static map")
    }

    pub fn from_alphabet(&self) -> &[char] {
        &self.from
    }

    pub fn to_alphabet(&self) -> &[char] {
        &self.to
    }
}

/// Applies `map` at every party, summing probabilities of merged outcomes.
/// Metadata is carried over from the input distribution.
pub fn coarse_grain(dist: &OutcomeDistribution, map: &CoarseGrainMap) -> Result<OutcomeDistribution> {
    if dist.alphabet() != map.from_alphabet() {
        return Err(Error::AlphabetMismatch(format!(
            "distribution alphabet {:?} does not match map source {:?}",
            dist.alphabet(),
            map.from_alphabet()
        )));
    }
    let parties = dist.party_count();
    let from_alpha = map.from.len();
    let to_alpha = map.to.len();
    let mut out = vec![0.0; to_alpha.pow(parties as u32)];
    for (index, &p) in dist.probabilities().iter().enumerate() {
        let mut target = 0;
        for digit in decode_outcome(index, from_alpha, parties) {
            target = target * to_alpha + map.assignment[digit];
        }
        out[target] += p;
    }
    OutcomeDistribution::new(parties, map.to.clone(), out, dist.metadata.clone())
}

// ── Support checks ─────────────────────────────────────────────────────────

/// Outcomes that are impossible by photon-number counting but carry weight.
#[derive(Debug, Clone, Serialize)]
pub struct SupportReport {
    pub threshold: f64,
    /// Largest probability over all forbidden outcomes.
    pub max_forbidden: f64,
    pub worst_outcome: Option<String>,
    pub violations: Vec<(String, f64)>,
}

impl SupportReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that outcomes forbidden by photon-number conservation carry at most
/// `threshold` probability.
///
/// An ideal N-party network holds exactly N photons.  Each outcome symbol
/// bounds the photon count at its party; an outcome pattern is forbidden when
/// N lies outside the summed bounds.  Only meaningful for distributions
/// simulated with ideal noise.
pub fn verify_support(dist: &OutcomeDistribution, threshold: f64) -> Result<SupportReport> {
    let metadata = dist
        .metadata()
        .ok_or_else(|| Error::MetadataMismatch("support check needs distribution metadata".into()))?;
    let bounds: Vec<(u32, u32)> = dist
        .alphabet()
        .iter()
        .map(|&c| symbol_photon_bounds(c, metadata.variant))
        .collect::<Result<_>>()?;

    let photons = dist.party_count() as u32;
    let mut report = SupportReport {
        threshold,
        max_forbidden: 0.0,
        worst_outcome: None,
        violations: Vec::new(),
    };
    for (index, &p) in dist.probabilities().iter().enumerate() {
        let (mut lo, mut hi) = (0, 0);
        for digit in decode_outcome(index, dist.alphabet().len(), dist.party_count()) {
            lo += bounds[digit].0;
            hi += bounds[digit].1;
        }
        if lo <= photons && photons <= hi {
            continue;
        }
        let label = dist.outcome_label(index);
        if p > report.max_forbidden {
            report.max_forbidden = p;
            report.worst_outcome = Some(label.clone());
        }
        if p > threshold {
            report.violations.push((label, p));
        }
    }
    Ok(report)
}

/// Minimum and maximum photon number compatible with one outcome symbol.
/// Threshold detectors cannot distinguish one photon from two in the same
/// arm, so passive L and R admit up to two.
fn symbol_photon_bounds(symbol: char, variant: PovmVariant) -> Result<(u32, u32)> {
    use PovmVariant::*;
    match (variant, symbol) {
        (_, '0') => Ok((0, 0)),
        (Passive, 'L' | 'R') => Ok((1, 2)),
        (Projective | NumberResolved, 'L' | 'R') => Ok((1, 1)),
        (NumberResolved, 'S' | 'K') => Ok((2, 2)),
        (_, '2') => Ok((2, 2)),
        _ => Err(Error::AlphabetMismatch(format!(
            "symbol '{symbol}' has no photon bounds for {} measurement",
            variant.as_str()
        ))),
    }
}

// ── Tests ──────────────────────────────────────────────────────────────────
