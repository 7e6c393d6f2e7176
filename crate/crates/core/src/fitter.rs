//! Variational fit of source-local response models to a target distribution.
//!
//! The model mirrors the network geometry: one hidden variable per source,
//! uniform on [0, 1), and per party a small feed-forward network mapping its
//! two adjacent hidden variables to an outcome distribution.  The modelled
//! joint distribution is the Monte Carlo average of the product of party
//! distributions; training minimizes its Euclidean distance to the target.
//! A distance that stays large across many restarts is evidence that no
//! source-local model reproduces the target.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::OutcomeDistribution;
use crate::error::{Error, Result};

/// Largest outcome table a fit will attempt.
pub const MAX_FIT_OUTCOMES: usize = 1 << 16;

/// Guard against division by zero in the distance gradient.
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Monte Carlo evaluation runs in fixed-size chunks with per-chunk seeds so
/// the result is independent of thread scheduling.
const EVAL_CHUNK: usize = 16_384;

// ── Configuration ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    /// Hidden-variable samples per gradient step.
    pub batch_size: usize,
    /// Adam steps per restart, under a stepwise-decaying learning rate.
    pub steps: usize,
    /// Independent restarts from fresh initializations; the best is kept.
    pub restarts: usize,
    /// Samples for the final Monte Carlo estimate of each trained model.
    pub eval_samples: usize,
    pub learning_rate: f64,
    /// Multiplicative step-size decay applied at each third of the run.
    pub decay: f64,
    pub hidden_width: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 8192,
            steps: 5000,
            restarts: 30,
            eval_samples: 1_000_000,
            learning_rate: 1e-3,
            decay: 0.3,
            hidden_width: 20,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("batch_size", self.batch_size),
            ("steps", self.steps),
            ("restarts", self.restarts),
            ("eval_samples", self.eval_samples),
            ("hidden_width", self.hidden_width),
        ] {
            if value == 0 {
                return Err(Error::ParameterRange {
                    name,
                    value: 0.0,
                    expected: ">= 1",
                });
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::ParameterRange {
                name: "learning_rate",
                value: self.learning_rate,
                expected: "positive",
            });
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::ParameterRange {
                name: "decay",
                value: self.decay,
                expected: "in (0, 1]",
            });
        }
        Ok(())
    }

    /// Step size at each third of the run: 1x, decay, decay^2 of the initial
    /// rate.
    fn rate_at(&self, step: usize) -> f64 {
        let third = (self.steps / 3).max(1);
        let phase = (step / third).min(2) as i32;
        self.learning_rate * self.decay.powi(phase)
    }
}

/// Splitmix-style mixing so derived seeds are decorrelated across streams.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// ── Model ──────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layer {
    w: DMatrix<f64>,
    b: DVector<f64>,
}

impl Layer {
    fn he_random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, (2.0 / cols as f64).sqrt()).expect("finite std");
        let w = DMatrix::from_fn(rows, cols, |_, _| normal.sample(rng));
        Self { w, b: DVector::zeros(rows) }
    }

    fn zeros_like(&self) -> Self {
        Self { w: DMatrix::zeros(self.w.nrows(), self.w.ncols()), b: DVector::zeros(self.b.len()) }
    }
}

/// One party's response function: 2 inputs, three ReLU layers, softmax head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
}

struct ForwardPass {
    input: DMatrix<f64>,
    hidden: Vec<DMatrix<f64>>,
    output: DMatrix<f64>,
}

impl Mlp {
    fn random(outputs: usize, hidden_width: usize, rng: &mut ChaCha8Rng) -> Self {
        let sizes = [2, hidden_width, hidden_width, hidden_width, outputs];
        let layers =
            (1..sizes.len()).map(|i| Layer::he_random(sizes[i], sizes[i - 1], rng)).collect();
        Self { layers }
    }

    pub fn output_count(&self) -> usize {
        self.layers.last().expect("non-empty").w.nrows()
    }

    /// Batched forward pass over column-wise inputs, keeping activations for
    /// the backward pass.
    fn forward(&self, input: DMatrix<f64>) -> ForwardPass {
        let mut hidden = Vec::with_capacity(self.layers.len() - 1);
        let mut current = input.clone();
        for layer in &self.layers[..self.layers.len() - 1] {
            let mut z = &layer.w * &current;
            for mut column in z.column_iter_mut() {
                column += &layer.b;
            }
            z.apply(|v| *v = v.max(0.0));
            hidden.push(z.clone());
            current = z;
        }
        let last = self.layers.last().expect("non-empty");
        let mut z = &last.w * &current;
        for mut column in z.column_iter_mut() {
            column += &last.b;
        }
        softmax_columns(&mut z);
        ForwardPass { input, hidden, output: z }
    }

    /// Backpropagates `d loss / d p` (columnwise) through the softmax head
    /// and the ReLU stack, accumulating into `grads`.
    fn backward(&self, pass: &ForwardPass, output_grad: &DMatrix<f64>, grads: &mut [Layer]) {
        let p = &pass.output;
        let mut delta = DMatrix::zeros(p.nrows(), p.ncols());
        for j in 0..p.ncols() {
            let mut dot = 0.0;
            for i in 0..p.nrows() {
                dot += output_grad[(i, j)] * p[(i, j)];
            }
            for i in 0..p.nrows() {
                delta[(i, j)] = p[(i, j)] * (output_grad[(i, j)] - dot);
            }
        }

        for depth in (0..self.layers.len()).rev() {
            let below = if depth == 0 { &pass.input } else { &pass.hidden[depth - 1] };
            grads[depth].w += &delta * below.transpose();
            grads[depth].b += delta.column_sum();
            if depth > 0 {
                let mut next = self.layers[depth].w.transpose() * delta;
                let activation = &pass.hidden[depth - 1];
                for j in 0..next.ncols() {
                    for i in 0..next.nrows() {
                        if activation[(i, j)] <= 0.0 {
                            next[(i, j)] = 0.0;
                        }
                    }
                }
                delta = next;
            }
        }
    }
}

fn softmax_columns(z: &mut DMatrix<f64>) {
    for mut column in z.column_iter_mut() {
        let max = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in column.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in column.iter_mut() {
            *v /= total;
        }
    }
}

/// Source-local response model: one [`Mlp`] per party, party k reading the
/// hidden variables of its two adjacent sources, (lambda_{k-1}, lambda_k).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseNetwork {
    parties: Vec<Mlp>,
}

impl ResponseNetwork {
    pub fn random(
        party_count: usize,
        outcomes_per_party: usize,
        hidden_width: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if party_count < 2 {
            return Err(Error::ParameterRange {
                name: "party_count",
                value: party_count as f64,
                expected: ">= 2",
            });
        }
        if outcomes_per_party < 2 {
            return Err(Error::ParameterRange {
                name: "outcomes_per_party",
                value: outcomes_per_party as f64,
                expected: ">= 2",
            });
        }
        let parties =
            (0..party_count).map(|_| Mlp::random(outcomes_per_party, hidden_width, rng)).collect();
        Ok(Self { parties })
    }

    pub fn party_count(&self) -> usize {
        self.parties.len()
    }

    pub fn outcomes_per_party(&self) -> usize {
        self.parties[0].output_count()
    }

    pub fn parameter_count(&self) -> usize {
        self.parties
            .iter()
            .flat_map(|m| &m.layers)
            .map(|l| l.w.len() + l.b.len())
            .sum()
    }

    /// Flattened parameters: party-major, layer-major, column-major weights
    /// then biases.  [`set_parameters`](Self::set_parameters) inverts this.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for mlp in &self.parties {
            for layer in &mlp.layers {
                out.extend_from_slice(layer.w.as_slice());
                out.extend_from_slice(layer.b.as_slice());
            }
        }
        out
    }

    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} parameters",
                values.len(),
                self.parameter_count()
            )));
        }
        let mut offset = 0;
        for mlp in &mut self.parties {
            for layer in &mut mlp.layers {
                let w = layer.w.len();
                layer.w.as_mut_slice().copy_from_slice(&values[offset..offset + w]);
                offset += w;
                let b = layer.b.len();
                layer.b.as_mut_slice().copy_from_slice(&values[offset..offset + b]);
                offset += b;
            }
        }
        Ok(())
    }

    fn zero_grads(&self) -> Vec<Vec<Layer>> {
        self.parties
            .iter()
            .map(|m| m.layers.iter().map(Layer::zeros_like).collect())
            .collect()
    }

    /// Party inputs for a batch of hidden-variable columns.
    fn party_input(&self, lambdas: &DMatrix<f64>, party: usize) -> DMatrix<f64> {
        let n = self.parties.len();
        let previous = (party + n - 1) % n;
        DMatrix::from_fn(2, lambdas.ncols(), |r, c| {
            lambdas[(if r == 0 { previous } else { party }, c)]
        })
    }

    /// Joint outcome table averaged over the given hidden-variable columns
    /// (one column per source sample, rows indexed by source).  On a dense
    /// quadrature grid this is the model's distribution without sampling
    /// noise.
    pub fn average_table(&self, lambdas: &DMatrix<f64>) -> Result<Vec<f64>> {
        if lambdas.nrows() != self.parties.len() || lambdas.ncols() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} hidden matrix for {} sources",
                lambdas.nrows(),
                lambdas.ncols(),
                self.parties.len()
            )));
        }
        Ok(batch_forward(self, lambdas).1)
    }
}

/// Draws one hidden variable per source and batch column, uniform on [0, 1).
pub fn sample_hidden(party_count: usize, batch: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(party_count, batch);
    for c in 0..batch {
        for r in 0..party_count {
            m[(r, c)] = rng.gen::<f64>();
        }
    }
    m
}

// ── Loss and gradient ──────────────────────────────────────────────────────

/// Model average and per-sample products for one batch of hidden variables.
fn batch_forward(net: &ResponseNetwork, lambdas: &DMatrix<f64>) -> (Vec<ForwardPass>, Vec<f64>) {
    let passes: Vec<ForwardPass> = (0..net.parties.len())
        .map(|k| net.parties[k].forward(net.party_input(lambdas, k)))
        .collect();
    let alpha = net.outcomes_per_party();
    let table_len = alpha.pow(net.parties.len() as u32);
    let mut table = vec![0.0; table_len];
    let mut scratch = vec![0.0; table_len];
    for s in 0..lambdas.ncols() {
        product_into(&passes, s, alpha, &mut scratch);
        for (t, v) in table.iter_mut().zip(&scratch) {
            *t += v;
        }
    }
    let k = lambdas.ncols() as f64;
    for t in table.iter_mut() {
        *t /= k;
    }
    (passes, table)
}

/// Writes the outer product of the party distributions of sample `s`,
/// party-0-major, into `out`.
fn product_into(passes: &[ForwardPass], s: usize, alpha: usize, out: &mut [f64]) {
    out[0] = 1.0;
    let mut filled = 1;
    for pass in passes {
        for i in (0..filled).rev() {
            let base = pass.output.column(s);
            for x in (0..alpha).rev() {
                out[i * alpha + x] = out[i] * base[x];
            }
        }
        filled *= alpha;
    }
}

/// Split-batch training loss and its gradient in the flattened parameter
/// layout of [`ResponseNetwork::parameters`].
///
/// The batch is split in half and the loss is the inner product of the two
/// halves' residuals, `<mean_A - target, mean_B - target>`.  The halves are
/// independent estimates of the model distribution, so the expected loss is
/// exactly the squared distance of the model from the target.  A one-batch
/// norm `||mean - target||` instead rewards responses that stay soft, since
/// softness lowers the estimator's variance, and that reward floors the
/// reachable distance at a level proportional to `1 / batch`.  The value can
/// dip below zero once the residuals are dominated by sampling noise.
pub fn loss_and_grad(
    net: &ResponseNetwork,
    target: &OutcomeDistribution,
    lambdas: &DMatrix<f64>,
) -> Result<(f64, Vec<f64>)> {
    check_target(net, target)?;
    if lambdas.nrows() != net.parties.len() || lambdas.ncols() < 2 {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} hidden matrix for {} parties",
            lambdas.nrows(),
            lambdas.ncols(),
            net.parties.len()
        )));
    }
    let parties = net.parties.len();
    let alpha = net.outcomes_per_party();
    let batch = lambdas.ncols();
    let half = batch / 2;
    let passes: Vec<ForwardPass> = (0..parties)
        .map(|k| net.parties[k].forward(net.party_input(lambdas, k)))
        .collect();

    let table_len = alpha.pow(parties as u32);
    let mut mean_a = vec![0.0; table_len];
    let mut mean_b = vec![0.0; table_len];
    let mut scratch = vec![0.0; table_len];
    for s in 0..batch {
        product_into(&passes, s, alpha, &mut scratch);
        let acc = if s < half { &mut mean_a } else { &mut mean_b };
        for (t, v) in acc.iter_mut().zip(&scratch) {
            *t += v;
        }
    }
    for t in mean_a.iter_mut() {
        *t /= half as f64;
    }
    for t in mean_b.iter_mut() {
        *t /= (batch - half) as f64;
    }

    let loss = mean_a
        .iter()
        .zip(&mean_b)
        .zip(target.probabilities())
        .map(|((a, b), q)| (a - q) * (b - q))
        .sum::<f64>();
    // d loss / d sample-product: the opposite half's residual, over this
    // half's sample count.
    let residual_a: Vec<f64> = mean_b
        .iter()
        .zip(target.probabilities())
        .map(|(b, q)| (b - q) / half as f64)
        .collect();
    let residual_b: Vec<f64> = mean_a
        .iter()
        .zip(target.probabilities())
        .map(|(a, q)| (a - q) / (batch - half) as f64)
        .collect();

    // Per-sample outcome gradients g_k[x] = sum over outcomes with o_k = x of
    // residual[o] * prod_{m != k} p_m[o_m], built by suffix-then-prefix
    // contraction of the sample's residual tensor with the party
    // distributions.
    let mut party_grads: Vec<DMatrix<f64>> =
        (0..parties).map(|_| DMatrix::zeros(alpha, batch)).collect();
    let mut suffix: Vec<Vec<f64>> =
        (0..parties).map(|k| vec![0.0; alpha.pow((k + 1) as u32)]).collect();
    for s in 0..batch {
        suffix[parties - 1].copy_from_slice(if s < half { &residual_a } else { &residual_b });
        for k in (0..parties - 1).rev() {
            let p = passes[k + 1].output.column(s);
            let (head, tail) = suffix.split_at_mut(k + 1);
            let dst = &mut head[k];
            let src = &tail[0];
            for i in 0..dst.len() {
                dst[i] = (0..alpha).map(|x| src[i * alpha + x] * p[x]).sum();
            }
        }
        for k in 0..parties {
            let mut len = suffix[k].len();
            scratch[..len].copy_from_slice(&suffix[k]);
            for m in 0..k {
                let p = passes[m].output.column(s);
                len /= alpha;
                for j in 0..len {
                    scratch[j] = (0..alpha).map(|x| scratch[x * len + j] * p[x]).sum();
                }
            }
            for x in 0..alpha {
                party_grads[k][(x, s)] = scratch[x];
            }
        }
    }

    let mut grads = net.zero_grads();
    for k in 0..parties {
        net.parties[k].backward(&passes[k], &party_grads[k], &mut grads[k]);
    }

    let mut flat = Vec::with_capacity(net.parameter_count());
    for party in &grads {
        for layer in party {
            flat.extend_from_slice(layer.w.as_slice());
            flat.extend_from_slice(layer.b.as_slice());
        }
    }
    Ok((loss, flat))
}

fn check_target(net: &ResponseNetwork, target: &OutcomeDistribution) -> Result<()> {
    if target.party_count() != net.parties.len()
        || target.alphabet().len() != net.outcomes_per_party()
    {
        return Err(Error::ShapeMismatch(format!(
            "target is {} parties over {} symbols, model is {} over {}",
            target.party_count(),
            target.alphabet().len(),
            net.parties.len(),
            net.outcomes_per_party()
        )));
    }
    if target.outcome_count() > MAX_FIT_OUTCOMES {
        return Err(Error::UnsupportedCombination(format!(
            "outcome table of {} entries exceeds the fit limit {MAX_FIT_OUTCOMES}",
            target.outcome_count()
        )));
    }
    Ok(())
}

// ── Training ───────────────────────────────────────────────────────────────

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    fn new(count: usize) -> Self {
        Self { m: vec![0.0; count], v: vec![0.0; count] }
    }

    fn update(&mut self, params: &mut [f64], grads: &[f64], rate: f64, step: usize) {
        let bias1 = 1.0 - ADAM_BETA1.powi(step as i32);
        let bias2 = 1.0 - ADAM_BETA2.powi(step as i32);
        for i in 0..params.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grads[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grads[i] * grads[i];
            let mhat = self.m[i] / bias1;
            let vhat = self.v[i] / bias2;
            params[i] -= rate * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
}

/// Trains one model from a fresh seeded initialization.
pub fn train_local_model(
    target: &OutcomeDistribution,
    config: &TrainingConfig,
    seed: u64,
) -> Result<ResponseNetwork> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = ResponseNetwork::random(
        target.party_count(),
        target.alphabet().len(),
        config.hidden_width,
        &mut rng,
    )?;
    check_target(&net, target)?;

    let mut params = net.parameters();
    let mut adam = AdamState::new(params.len());
    for step in 0..config.steps {
        let lambdas = sample_hidden(target.party_count(), config.batch_size, &mut rng);
        let (loss, grads) = loss_and_grad(&net, target, &lambdas)?;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { step, loss });
        }
        adam.update(&mut params, &grads, config.rate_at(step), step + 1);
        net.set_parameters(&params)?;
    }
    Ok(net)
}

/// Deterministic Monte Carlo estimate of the model's joint distribution.
///
/// Samples are processed in fixed chunks, each with a seed derived from
/// `(seed, chunk index)`, and reduced in chunk order, so the result does not
/// depend on the worker pool.
pub fn estimate_distribution(
    net: &ResponseNetwork,
    alphabet: &[char],
    samples: usize,
    seed: u64,
) -> Result<OutcomeDistribution> {
    if alphabet.len() != net.outcomes_per_party() {
        return Err(Error::AlphabetMismatch(format!(
            "{} symbols for a model with {} outcomes",
            alphabet.len(),
            net.outcomes_per_party()
        )));
    }
    if samples == 0 {
        return Err(Error::ParameterRange { name: "samples", value: 0.0, expected: ">= 1" });
    }
    let parties = net.party_count();
    let alpha = alphabet.len();
    let table_len = alpha.pow(parties as u32);
    if table_len > MAX_FIT_OUTCOMES {
        return Err(Error::UnsupportedCombination(format!(
            "outcome table of {table_len} entries exceeds the fit limit {MAX_FIT_OUTCOMES}"
        )));
    }

    let chunks = samples.div_ceil(EVAL_CHUNK);
    let partials: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, chunk as u64));
            let count = EVAL_CHUNK.min(samples - chunk * EVAL_CHUNK);
            let lambdas = sample_hidden(parties, count, &mut rng);
            let passes: Vec<ForwardPass> = (0..parties)
                .map(|k| net.parties[k].forward(net.party_input(&lambdas, k)))
                .collect();
            let mut table = vec![0.0; table_len];
            let mut scratch = vec![0.0; table_len];
            for s in 0..count {
                product_into(&passes, s, alpha, &mut scratch);
                for (t, v) in table.iter_mut().zip(&scratch) {
                    *t += v;
                }
            }
            table
        })
        .collect();

    let mut table = vec![0.0; table_len];
    for partial in partials {
        for (t, v) in table.iter_mut().zip(&partial) {
            *t += v;
        }
    }
    for t in table.iter_mut() {
        *t /= samples as f64;
    }
    OutcomeDistribution::new(parties, alphabet.to_vec(), table, None)
}

/// Euclidean distance between two distributions over the same outcome space.
pub fn euclidean_distance(a: &OutcomeDistribution, b: &OutcomeDistribution) -> Result<f64> {
    if a.party_count() != b.party_count() || a.alphabet() != b.alphabet() {
        return Err(Error::AlphabetMismatch(
            "distributions live on different outcome spaces".into(),
        ));
    }
    Ok(a.probabilities()
        .iter()
        .zip(b.probabilities())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

// ── Best-of-restarts driver ────────────────────────────────────────────────

/// Outcome of [`fit_best_of`]: the best model over all restarts with its
/// evaluated distance to the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Euclidean distance of the best model's evaluated distribution.
    pub distance: f64,
    pub per_restart_distances: Vec<f64>,
    pub best_restart: usize,
    /// Signed entrywise difference, model minus target, for the best model.
    pub residual: Vec<f64>,
    pub network: ResponseNetwork,
    pub config: TrainingConfig,
}

/// Trains `config.restarts` independent models in parallel and keeps the one
/// whose evaluated distribution is closest to the target.  Restart seeds are
/// derived from `config.seed`, so results are reproducible.
pub fn fit_best_of(target: &OutcomeDistribution, config: &TrainingConfig) -> Result<FitResult> {
    config.validate()?;
    let runs: Vec<(f64, ResponseNetwork)> = (0..config.restarts)
        .into_par_iter()
        .map(|restart| {
            let seed = mix_seed(config.seed, restart as u64);
            let net = train_local_model(target, config, seed)?;
            let estimate = estimate_distribution(
                &net,
                target.alphabet(),
                config.eval_samples,
                mix_seed(config.seed, 0x5EED_0000 + restart as u64),
            )?;
            Ok((euclidean_distance(&estimate, target)?, net))
        })
        .collect::<Result<_>>()?;

    let per_restart_distances: Vec<f64> = runs.iter().map(|(d, _)| *d).collect();
    let best_restart = per_restart_distances
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.partial_cmp(b).expect("finite distances"))
        .map(|(i, _)| i)
        .expect("at least one restart");
    let network = runs[best_restart].1.clone();

    let estimate = estimate_distribution(
        &network,
        target.alphabet(),
        config.eval_samples,
        mix_seed(config.seed, 0x5EED_0000 + best_restart as u64),
    )?;
    let residual: Vec<f64> = estimate
        .probabilities()
        .iter()
        .zip(target.probabilities())
        .map(|(a, b)| a - b)
        .collect();

    Ok(FitResult {
        distance: per_restart_distances[best_restart],
        per_restart_distances,
        best_restart,
        residual,
        network,
        config: config.clone(),
    })
}

// ── Tests ──────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{closed_form_ideal, triangle_distribution};
    use crate::optics::{NoiseParams, PovmVariant};
    use approx::assert_abs_diff_eq;

    fn passive_alphabet() -> Vec<char> {
        vec!['0', 'L', 'R', '2']
    }

    #[test]
    fn distance_oracle_balanced_triangle_to_uniform() {
        // Sixteen entries of 1/16 against sixty-four of 1/64:
        // sqrt(16 (3/64)^2 + 48 (1/64)^2) = sqrt(3)/8.
        let p = closed_form_ideal(0.5, 0.0).unwrap();
        let u = OutcomeDistribution::uniform(3, passive_alphabet()).unwrap();
        let d = euclidean_distance(&p, &u).unwrap();
        assert_abs_diff_eq!(d, 3.0f64.sqrt() / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d, 0.21650635094610965, epsilon = 1e-15);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = ResponseNetwork::random(3, 4, 8, &mut rng).unwrap();
        let target = closed_form_ideal(0.85, 0.0).unwrap();
        let lambdas = sample_hidden(3, 64, &mut rng);

        let (_, analytic) = loss_and_grad(&net, &target, &lambdas).unwrap();
        let params = net.parameters();
        let mut numeric = vec![0.0; params.len()];
        let h = 1e-5;
        let mut probe = net.clone();
        for i in 0..params.len() {
            let mut shifted = params.clone();
            shifted[i] += h;
            probe.set_parameters(&shifted).unwrap();
            let (plus, _) = loss_and_grad(&probe, &target, &lambdas).unwrap();
            shifted[i] -= 2.0 * h;
            probe.set_parameters(&shifted).unwrap();
            let (minus, _) = loss_and_grad(&probe, &target, &lambdas).unwrap();
            numeric[i] = (plus - minus) / (2.0 * h);
        }

        let diff: f64 =
            analytic.iter().zip(&numeric).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let norm: f64 = analytic.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(diff / norm.max(1e-12) <= 1e-4, "relative error {}", diff / norm);
    }

    #[test]
    fn estimates_are_deterministic_and_concentrate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = ResponseNetwork::random(3, 4, 10, &mut rng).unwrap();
        let alphabet = passive_alphabet();

        let a = estimate_distribution(&net, &alphabet, 50_000, 11).unwrap();
        let b = estimate_distribution(&net, &alphabet, 50_000, 11).unwrap();
        assert_eq!(a, b);
        assert_abs_diff_eq!(a.total(), 1.0, epsilon = 1e-12);

        // Independent estimates differ by O(1/sqrt(K)); a 100x larger K
        // should shrink the gap about tenfold.
        let small = euclidean_distance(
            &estimate_distribution(&net, &alphabet, 10_000, 1).unwrap(),
            &estimate_distribution(&net, &alphabet, 10_000, 2).unwrap(),
        )
        .unwrap();
        let large = euclidean_distance(
            &estimate_distribution(&net, &alphabet, 1_000_000, 3).unwrap(),
            &estimate_distribution(&net, &alphabet, 1_000_000, 4).unwrap(),
        )
        .unwrap();
        let ratio = small / large;
        assert!((4.0..25.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn training_reduces_loss_on_a_local_target() {
        let target = closed_form_ideal(1.0, 0.0).unwrap();
        let config = TrainingConfig {
            batch_size: 256,
            steps: 1200,
            restarts: 1,
            eval_samples: 20_000,
            learning_rate: 3e-3,
            ..TrainingConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(9, 0));
        let fresh = ResponseNetwork::random(3, 4, config.hidden_width, &mut rng).unwrap();
        let lambdas = sample_hidden(3, 2048, &mut rng);
        let (initial, _) = loss_and_grad(&fresh, &target, &lambdas).unwrap();

        let trained = train_local_model(&target, &config, mix_seed(9, 0)).unwrap();
        let (after, _) = loss_and_grad(&trained, &target, &lambdas).unwrap();
        assert!(after < 0.5 * initial, "initial {initial}, after {after}");
    }

    #[test]
    fn best_of_restarts_picks_the_minimum() {
        let target = OutcomeDistribution::uniform(3, passive_alphabet()).unwrap();
        let config = TrainingConfig {
            batch_size: 128,
            steps: 60,
            restarts: 3,
            eval_samples: 10_000,
            seed: 42,
            ..TrainingConfig::default()
        };
        let fit = fit_best_of(&target, &config).unwrap();
        assert_eq!(fit.per_restart_distances.len(), 3);
        let min = fit.per_restart_distances.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(fit.distance, min);
        assert_eq!(fit.residual.len(), 64);

        let again = fit_best_of(&target, &config).unwrap();
        assert_eq!(fit.per_restart_distances, again.per_restart_distances);
    }

    #[test]
    fn single_restart_equals_direct_training() {
        let target = closed_form_ideal(0.5, 0.0).unwrap();
        let config = TrainingConfig {
            batch_size: 128,
            steps: 80,
            restarts: 1,
            eval_samples: 10_000,
            seed: 9,
            ..TrainingConfig::default()
        };
        let fit = fit_best_of(&target, &config).unwrap();
        let direct = train_local_model(&target, &config, mix_seed(9, 0)).unwrap();
        assert_eq!(fit.network.parameters(), direct.parameters());
    }

    #[test]
    fn extra_restarts_never_hurt() {
        let target = closed_form_ideal(0.9, 0.0).unwrap();
        let few = TrainingConfig {
            batch_size: 64,
            steps: 40,
            restarts: 5,
            eval_samples: 10_000,
            seed: 31,
            ..TrainingConfig::default()
        };
        let many = TrainingConfig { restarts: 30, ..few.clone() };
        let small = fit_best_of(&target, &few).unwrap();
        let large = fit_best_of(&target, &many).unwrap();
        // Same seed family, so the first five runs coincide and the larger
        // ensemble minimizes over a superset.
        assert_eq!(&large.per_restart_distances[..5], &small.per_restart_distances[..]);
        assert!(large.distance <= small.distance);
    }

    #[test]
    fn constant_responses_factorize_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut net = ResponseNetwork::random(3, 4, 8, &mut rng).unwrap();
        net.set_parameters(&vec![0.0; net.parameter_count()]).unwrap();
        // All-zero weights respond uniformly whatever the hidden variables,
        // so the estimate is the exact product table for every seed.
        for seed in [1u64, 88] {
            let est = estimate_distribution(&net, &passive_alphabet(), 100_000, seed).unwrap();
            for (_, p) in est.iter() {
                assert_abs_diff_eq!(p, 1.0 / 64.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn depolarized_sources_admit_a_reachable_local_model() {
        let t = 0.85;
        let noise = NoiseParams { werner_visibility: 0.0, ..NoiseParams::default() };
        let target =
            triangle_distribution(t, &[0.3, 0.8, 1.4], PovmVariant::Passive, &noise).unwrap();

        // At zero visibility each source is the uniform mixture over the
        // four occupations of its mode pair, so every network mode is an
        // independent fair coin and the parties decouple: the joint table is
        // the cube of one single-party mixture, built here by pushing each
        // occupation through the beamsplitter.  Occupation (1,0) clicks L
        // with probability t, (0,1) clicks R with probability t, and (1,1)
        // clicks both with probability (2t-1)^2, else bunches into L or R
        // evenly.  Phases drop out entirely.
        let single = |left: bool, right: bool| -> [f64; 4] {
            match (left, right) {
                (false, false) => [1.0, 0.0, 0.0, 0.0],
                (true, false) => [0.0, t, 1.0 - t, 0.0],
                (false, true) => [0.0, 1.0 - t, t, 0.0],
                (true, true) => {
                    let both = (2.0 * t - 1.0).powi(2);
                    let bunch = 2.0 * t * (1.0 - t);
                    [0.0, bunch, bunch, both]
                }
            }
        };
        let mut mixture = [0.0f64; 4];
        for (l, r) in [(false, false), (true, false), (false, true), (true, true)] {
            let response = single(l, r);
            for x in 0..4 {
                mixture[x] += response[x] / 4.0;
            }
        }
        let mut worst = 0.0f64;
        for (idx, &p) in target.probabilities().iter().enumerate() {
            let (a, b, c) = (idx / 16, (idx / 4) % 4, idx % 4);
            worst = worst.max((p - mixture[a] * mixture[b] * mixture[c]).abs());
        }
        assert!(worst <= 1e-12, "product enumeration off by {worst:.3e}");

        // Local targets are reachable by training.
        let config = TrainingConfig {
            batch_size: 512,
            steps: 2000,
            restarts: 2,
            eval_samples: 200_000,
            learning_rate: 2e-2,
            decay: 0.1,
            seed: 5,
            ..TrainingConfig::default()
        };
        let fit = fit_best_of(&target, &config).unwrap();
        assert!(fit.distance <= 1e-2, "fitted distance {:.4}", fit.distance);
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = ResponseNetwork::random(3, 4, 8, &mut rng).unwrap();
        let wrong = OutcomeDistribution::uniform(4, passive_alphabet()).unwrap();
        let lambdas = sample_hidden(3, 8, &mut rng);
        assert!(loss_and_grad(&net, &wrong, &lambdas).is_err());
        assert!(estimate_distribution(&net, &['a', 'b'], 100, 0).is_err());

        let config = TrainingConfig { steps: 0, ..TrainingConfig::default() };
        assert!(config.validate().is_err());
    }

    #[test]
    fn parameter_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = ResponseNetwork::random(3, 4, 6, &mut rng).unwrap();
        let params = net.parameters();
        assert_eq!(params.len(), net.parameter_count());
        let mut shifted = params.clone();
        shifted[10] += 1.5;
        net.set_parameters(&shifted).unwrap();
        assert_abs_diff_eq!(net.parameters()[10], params[10] + 1.5, epsilon = 0.0);
    }
}
