//! Posterior inference over maliciousness flags and targets.
//!
//! [`importance_sample`] runs the model conditioned on an observed matrix with
//! the prior as proposal, weighting each trace by its likelihood.
//! [`mh_chain`] runs lightweight single-site Metropolis-Hastings over the same
//! traces. Both produce an [`EmpiricalPosterior`] that [`summarize`] reduces to
//! per-user marginals and a posterior-predictive mean matrix.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RatingMatrix, RatingModel};
use crate::rng::SimRng;
use crate::trace::{resample_site, run_conditioned, SiteKind, Trace};

/// Weighted collection of traces. Weights are kept in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPosterior {
    traces: Vec<Trace>,
    log_weights: Vec<f64>,
}

/// Normalizes log weights with max-subtraction.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    if log_weights.is_empty() {
        return Err(Error::EmptyPosterior);
    }
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegeneratePosterior);
    }
    let unnormalized: Vec<f64> = log_weights.iter().map(|&lw| (lw - max).exp()).collect();
    let total: f64 = unnormalized.iter().sum();
    Ok(unnormalized.into_iter().map(|w| w / total).collect())
}

fn log_sum_exp<I: Iterator<Item = f64> + Clone>(values: I) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl EmpiricalPosterior {
    pub fn new(traces: Vec<Trace>, log_weights: Vec<f64>) -> Result<Self> {
        if traces.len() != log_weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} traces but {} weights",
                traces.len(),
                log_weights.len()
            )));
        }
        if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::InvalidArgument("log weights must be finite or -inf".into()));
        }
        Ok(EmpiricalPosterior {
            traces,
            log_weights,
        })
    }

    /// Equally weighted traces.
    pub fn unweighted(traces: Vec<Trace>) -> Self {
        let log_weights = vec![0.0; traces.len()];
        EmpiricalPosterior {
            traces,
            log_weights,
        }
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn normalized_weights(&self) -> Result<Vec<f64>> {
        normalize_log_weights(&self.log_weights)
    }

    /// Effective sample size `1 / sum(w^2)`; zero when every weight vanished.
    pub fn ess(&self) -> f64 {
        match self.normalized_weights() {
            Ok(w) => 1.0 / w.iter().map(|x| x * x).sum::<f64>(),
            Err(_) => 0.0,
        }
    }

    /// Log of the mean unnormalized weight (marginal likelihood estimate
    /// for importance samples drawn from the prior).
    pub fn log_evidence(&self) -> f64 {
        let max = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return f64::NEG_INFINITY;
        }
        let sum: f64 = self.log_weights.iter().map(|lw| (lw - max).exp()).sum();
        max + (sum / self.len() as f64).ln()
    }

    /// Log posterior mass of the traces satisfying `pred`, normalized over all
    /// traces. Exact where the linear-space mass would underflow to zero.
    pub fn log_mass<F: Fn(&Trace) -> bool>(&self, pred: F) -> f64 {
        let selected = self
            .traces
            .iter()
            .zip(&self.log_weights)
            .filter(|(t, _)| pred(t))
            .map(|(_, &lw)| lw);
        log_sum_exp(selected) - log_sum_exp(self.log_weights.iter().copied())
    }

    /// Multinomial resampling of `n` trace indices proportional to weight.
    pub fn resample_indices(&self, n: usize, rng: &mut SimRng) -> Result<Vec<usize>> {
        let weights = self.normalized_weights()?;
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        let last = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
        Ok((0..n)
            .map(|_| {
                let u = rng.next_f64() * acc;
                cumulative.partition_point(|&c| c <= u).min(last)
            })
            .collect())
    }

    fn merge(mut self, other: EmpiricalPosterior) -> EmpiricalPosterior {
        self.traces.extend(other.traces);
        self.log_weights.extend(other.log_weights);
        self
    }
}

/// Likelihood-weighted importance sampling with the prior as proposal.
///
/// Trace `k` uses random stream `k` of `seed`, so the result does not depend
/// on the number of worker threads.
pub fn importance_sample(
    model: &RatingModel,
    observed: &RatingMatrix,
    n_traces: usize,
    seed: u64,
) -> Result<EmpiricalPosterior> {
    if n_traces == 0 {
        return Err(Error::InvalidArgument("n_traces must be at least 1".into()));
    }
    let cfg = model.config();
    observed.check_shape(cfg.n_users, cfg.n_movies)?;
    let traces: Vec<Trace> = (0..n_traces as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = SimRng::new(seed, k);
            run_conditioned(model, &mut rng, observed)
                .expect("shape checked above")
                .without_sites()
        })
        .collect();
    let log_weights = traces.iter().map(|t| t.log_likelihood).collect();
    EmpiricalPosterior::new(traces, log_weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcOptions {
    /// Fraction of the steps discarded at the start of the chain.
    pub burn_in_fraction: f64,
    /// Keep every `thin`-th post-burn-in state.
    pub thin: usize,
}

impl Default for McmcOptions {
    fn default() -> Self {
        McmcOptions {
            burn_in_fraction: 0.1,
            thin: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceCount {
    pub proposed: u64,
    pub accepted: u64,
}

impl AcceptanceCount {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += u64::from(accepted);
    }

    fn add(&mut self, other: &AcceptanceCount) {
        self.proposed += other.proposed;
        self.accepted += other.accepted;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct McmcDiagnostics {
    pub overall: AcceptanceCount,
    pub by_kind: BTreeMap<SiteKind, AcceptanceCount>,
    /// Like `by_kind`, restricted to proposals whose redrawn value differs
    /// from the current one (for `malicious` sites: actual flips).
    pub moved_by_kind: BTreeMap<SiteKind, AcceptanceCount>,
}

impl McmcDiagnostics {
    pub fn rate(&self, kind: SiteKind) -> f64 {
        self.by_kind.get(&kind).map_or(0.0, AcceptanceCount::rate)
    }

    /// Acceptance rate among proposals that changed the site's value.
    pub fn moved_rate(&self, kind: SiteKind) -> f64 {
        self.moved_by_kind.get(&kind).map_or(0.0, AcceptanceCount::rate)
    }

    fn absorb(&mut self, other: &McmcDiagnostics) {
        self.overall.add(&other.overall);
        for (kind, count) in &other.by_kind {
            self.by_kind.entry(*kind).or_default().add(count);
        }
        for (kind, count) in &other.moved_by_kind {
            self.moved_by_kind.entry(*kind).or_default().add(count);
        }
    }
}

#[derive(Debug, Clone)]
pub struct McmcRun {
    /// Post-burn-in states. Consecutive repeats of one state are stored once
    /// with log weight `ln(repeats)`.
    pub posterior: EmpiricalPosterior,
    pub diagnostics: McmcDiagnostics,
}

/// Metropolis-Hastings acceptance decision in log space.
fn accept(log_ratio: f64, rng: &mut SimRng) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || rng.next_f64().ln() < log_ratio
}

fn run_chain(
    model: &RatingModel,
    observed: &RatingMatrix,
    n_steps: usize,
    seed: u64,
    stream: u64,
    options: McmcOptions,
) -> Result<McmcRun> {
    let mut rng = SimRng::new(seed, stream);
    let mut current = run_conditioned(model, &mut rng, observed)?;
    let burn_in = (options.burn_in_fraction * n_steps as f64).floor() as usize;
    let thin = options.thin.max(1);

    let mut diagnostics = McmcDiagnostics::default();
    let mut traces: Vec<Trace> = Vec::new();
    let mut repeats: Vec<u64> = Vec::new();
    let mut changed_since_record = true;

    for step in 0..n_steps {
        let n_latent = current.n_latent_sites();
        let pick = (rng.next_f64() * n_latent as f64) as usize;
        let address = current
            .latent_sites()
            .nth(pick.min(n_latent - 1))
            .expect("trace has latent sites")
            .address;
        let (proposal, correction) = resample_site(&current, address, &mut rng, model, Some(observed))?;
        let moved = proposal.site(&address).map(|s| s.value) != current.site(&address).map(|s| s.value);
        let log_ratio = if proposal.log_joint() == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else if current.log_joint() == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            proposal.log_joint() - current.log_joint() + correction
        };
        let accepted = accept(log_ratio, &mut rng);
        diagnostics.overall.record(accepted);
        diagnostics.by_kind.entry(address.kind()).or_default().record(accepted);
        if moved {
            diagnostics.moved_by_kind.entry(address.kind()).or_default().record(accepted);
        }
        if accepted {
            current = proposal;
            changed_since_record = true;
        }

        if step >= burn_in && (step - burn_in).is_multiple_of(thin) {
            if changed_since_record || traces.is_empty() {
                traces.push(current.clone().without_sites());
                repeats.push(1);
                changed_since_record = false;
            } else {
                *repeats.last_mut().expect("non-empty") += 1;
            }
        }
    }
    let log_weights = repeats.iter().map(|&r| (r as f64).ln()).collect();
    Ok(McmcRun {
        posterior: EmpiricalPosterior::new(traces, log_weights)?,
        diagnostics,
    })
}

/// Single-site lightweight Metropolis-Hastings.
///
/// Each step picks one latent site of the current trace uniformly, redraws it
/// from its prior with [`resample_site`] and accepts by the MH ratio.
pub fn mh_chain(
    model: &RatingModel,
    observed: &RatingMatrix,
    n_steps: usize,
    seed: u64,
    options: McmcOptions,
) -> Result<McmcRun> {
    mh_chains(model, observed, n_steps, seed, 1, options)
}

/// Independent chains on streams `0..n_chains` of `seed`, pooled.
pub fn mh_chains(
    model: &RatingModel,
    observed: &RatingMatrix,
    n_steps: usize,
    seed: u64,
    n_chains: usize,
    options: McmcOptions,
) -> Result<McmcRun> {
    if n_steps == 0 || n_chains == 0 {
        return Err(Error::InvalidArgument("n_steps and n_chains must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&options.burn_in_fraction) {
        return Err(Error::InvalidArgument(format!(
            "burn-in fraction {} must lie in [0, 1)",
            options.burn_in_fraction
        )));
    }
    let cfg = model.config();
    observed.check_shape(cfg.n_users, cfg.n_movies)?;
    let runs: Vec<McmcRun> = (0..n_chains as u64)
        .into_par_iter()
        .map(|c| run_chain(model, observed, n_steps, seed, c, options))
        .collect::<Result<_>>()?;
    let mut runs = runs.into_iter();
    let first = runs.next().expect("at least one chain");
    Ok(runs.fold(first, |mut acc, run| {
        acc.diagnostics.absorb(&run.diagnostics);
        acc.posterior = acc.posterior.merge(run.posterior);
        acc
    }))
}

/// Posterior marginals over the quantities of interest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    /// `P(user i is malicious | observed)`.
    pub p_malicious: Vec<f64>,
    /// Entry `k` is the posterior probability of exactly `k` malicious users.
    pub p_n_malicious: Vec<f64>,
    /// Natural log of `p_n_malicious`, computed without underflow.
    /// Zero-mass entries serialize as `null`.
    #[serde(with = "log_values")]
    pub log_p_n_malicious: Vec<f64>,
    /// Per user, log mass of the traces where that user is the only
    /// malicious one.
    #[serde(with = "log_values")]
    pub log_p_sole_malicious: Vec<f64>,
    /// Per user, the distribution of the target movie among traces where the
    /// user is malicious; `None` if no such trace carries weight.
    pub target_marginal: Vec<Option<Vec<f64>>>,
    pub posterior_predictive_mean: RatingMatrix,
    pub ess: f64,
    pub n_traces: usize,
}

impl PosteriorSummary {
    /// Most likely malicious user, if any user has positive probability.
    pub fn modal_user(&self) -> Option<usize> {
        argmax(&self.p_malicious).filter(|&i| self.p_malicious[i] > 0.0)
    }

    /// Most likely user among explanations with exactly one malicious user.
    pub fn modal_sole_malicious(&self) -> Option<usize> {
        argmax(&self.log_p_sole_malicious).filter(|&i| self.log_p_sole_malicious[i] > f64::NEG_INFINITY)
    }

    pub fn modal_target(&self, user: usize) -> Option<usize> {
        self.target_marginal[user].as_deref().and_then(argmax)
    }

    /// Shannon entropy (nats) of a user's target marginal.
    pub fn target_entropy(&self, user: usize) -> Option<f64> {
        self.target_marginal[user].as_ref().map(|p| {
            -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
        })
    }
}

mod log_values {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mapped: Vec<Option<f64>> = values.iter().map(|&v| v.is_finite().then_some(v)).collect();
        mapped.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let mapped = Vec::<Option<f64>>::deserialize(d)?;
        Ok(mapped.into_iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect())
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

pub fn summarize(posterior: &EmpiricalPosterior) -> Result<PosteriorSummary> {
    if posterior.is_empty() {
        return Err(Error::EmptyPosterior);
    }
    let weights = posterior.normalized_weights()?;
    let first = &posterior.traces()[0];
    let n_users = first.latents.n_users();
    let (rows, cols) = (first.result.rows(), first.result.cols());

    let mut p_malicious = vec![0.0; n_users];
    let mut p_n_malicious = vec![0.0; n_users + 1];
    let mut target_mass = vec![vec![0.0; cols]; n_users];
    let mut mean = vec![0.0; rows * cols];

    for (trace, &w) in posterior.traces().iter().zip(&weights) {
        if w == 0.0 {
            continue;
        }
        let latents = &trace.latents;
        p_n_malicious[latents.n_malicious()] += w;
        for user in latents.malicious_users() {
            p_malicious[user] += w;
            target_mass[user][latents.target_movie(user, cols)] += w;
        }
        for (m, &r) in mean.iter_mut().zip(trace.result.as_slice()) {
            *m += w * r;
        }
    }

    let target_marginal = target_mass
        .into_iter()
        .map(|mass| {
            let total: f64 = mass.iter().sum();
            (total > 0.0).then(|| mass.iter().map(|m| m / total).collect())
        })
        .collect();
    let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    let mean = mean.into_iter().map(|v: f64| v.clamp(0.0, 1.0)).collect();

    let log_p_n_malicious = (0..=n_users)
        .map(|k| posterior.log_mass(|t| t.latents.n_malicious() == k))
        .collect();
    let log_p_sole_malicious = (0..n_users)
        .map(|i| posterior.log_mass(|t| t.latents.malicious[i] && t.latents.n_malicious() == 1))
        .collect();

    Ok(PosteriorSummary {
        p_malicious,
        p_n_malicious,
        log_p_n_malicious,
        log_p_sole_malicious,
        target_marginal,
        posterior_predictive_mean: RatingMatrix::from_vec(rows, cols, mean)?,
        ess,
        n_traces: posterior.len(),
    })
}
