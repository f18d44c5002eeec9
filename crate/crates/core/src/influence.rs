//! Counterfactual influence of a set of users on the rating dynamics.
//!
//! Two ensembles of simulations are run, one with every user active and one
//! with the chosen users disarmed. Each matrix cell gets a rating histogram
//! per ensemble, and the influence is the mean Jensen-Shannon distance
//! between the paired cell histograms.

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::EmpiricalPosterior;
use crate::model::{DisarmMask, LatentAssignment, ModelConfig, RatingMatrix, RatingModel};
use crate::rng::{derive_seed, SimRng};
use crate::trace::{run_with_latents, FixedLatents};

/// Runs per parallel work item. Partial histograms are merged in chunk order.
const CHUNK: usize = 64;

const ARMED_STREAM: u64 = 0xA5;
const DISARMED_STREAM: u64 = 0xD5;
const RESAMPLE_STREAM: u64 = 0x5E;
const MALICIOUS_SET_STREAM: u64 = 0xB7;

fn kl_to_mixture(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &mi)| pi * (pi / mi).ln())
        .sum::<f64>()
        / LN_2
}

/// Jensen-Shannon distance with base-2 logarithms, in `[0, 1]`.
pub fn js_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::SupportMismatch(p.len(), q.len()));
    }
    for dist in [p, q] {
        let sum: f64 = dist.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || dist.iter().any(|&x| x.is_nan() || x < 0.0) {
            return Err(Error::Unnormalized(sum));
        }
    }
    Ok(js_distance_unchecked(p, q))
}

fn js_distance_unchecked(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let divergence = 0.5 * kl_to_mixture(p, &m) + 0.5 * kl_to_mixture(q, &m);
    divergence.clamp(0.0, 1.0).sqrt()
}

/// Per-cell rating histograms over an ensemble of simulated matrices.
///
/// Bins split `[0, 1]` uniformly; the first bin also holds the unrated value
/// zero and a rating of exactly one lands in the last bin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingHistogramField {
    pub bins: usize,
    pub rows: usize,
    pub cols: usize,
    pub n_runs: u64,
    /// Row-major over cells, then bins.
    pub counts: Vec<u64>,
}

impl RatingHistogramField {
    pub fn new(rows: usize, cols: usize, bins: usize) -> Self {
        RatingHistogramField {
            bins,
            rows,
            cols,
            n_runs: 0,
            counts: vec![0; rows * cols * bins],
        }
    }

    pub fn bin_of(&self, rating: f64) -> usize {
        ((rating * self.bins as f64) as usize).min(self.bins - 1)
    }

    pub fn add(&mut self, matrix: &RatingMatrix) {
        for (cell, &v) in matrix.as_slice().iter().enumerate() {
            let b = self.bin_of(v);
            self.counts[cell * self.bins + b] += 1;
        }
        self.n_runs += 1;
    }

    fn merge(&mut self, other: &RatingHistogramField) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.n_runs += other.n_runs;
    }

    pub fn cell_counts(&self, row: usize, col: usize) -> &[u64] {
        let start = (row * self.cols + col) * self.bins;
        &self.counts[start..start + self.bins]
    }

    pub fn cell_distribution(&self, row: usize, col: usize) -> Vec<f64> {
        let n = self.n_runs as f64;
        self.cell_counts(row, col).iter().map(|&c| c as f64 / n).collect()
    }
}

/// Where ensemble runs take their latents from.
#[derive(Debug, Clone, Copy)]
pub enum LatentSource<'a> {
    /// Draw from the prior, holding any supplied values fixed.
    Prior(Option<&'a FixedLatents>),
    /// One weighted draw per run from a posterior.
    Posterior(&'a [LatentAssignment]),
}

fn validate_runs(n_runs: usize, bins: usize) -> Result<()> {
    if n_runs == 0 {
        return Err(Error::InvalidArgument("n_runs must be at least 1".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be at least 1".into()));
    }
    Ok(())
}

fn ensemble(
    model: &RatingModel,
    mask: Option<&DisarmMask>,
    n_runs: usize,
    seed: u64,
    bins: usize,
    source: LatentSource<'_>,
) -> RatingHistogramField {
    let cfg = model.config();
    let posterior_fixed: Vec<FixedLatents> = match source {
        LatentSource::Posterior(draws) => draws.iter().map(FixedLatents::from).collect(),
        LatentSource::Prior(_) => Vec::new(),
    };
    let default_fixed = FixedLatents::default();
    let partials: Vec<RatingHistogramField> = (0..n_runs)
        .step_by(CHUNK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let mut field = RatingHistogramField::new(cfg.n_users, cfg.n_movies, bins);
            for run in start..(start + CHUNK).min(n_runs) {
                let fixed = match source {
                    LatentSource::Prior(f) => f.unwrap_or(&default_fixed),
                    LatentSource::Posterior(_) => &posterior_fixed[run],
                };
                let mut rng = SimRng::new(seed, run as u64);
                let trace = run_with_latents(model, &mut rng, fixed, mask);
                field.add(&trace.result);
            }
            field
        })
        .collect();
    let mut total = RatingHistogramField::new(cfg.n_users, cfg.n_movies, bins);
    for p in &partials {
        total.merge(p);
    }
    total
}

/// Histograms of `n_runs` forward simulations; run `r` uses stream `r` of `seed`.
pub fn predictive_histograms(
    model: &RatingModel,
    mask: &DisarmMask,
    n_runs: usize,
    seed: u64,
    bins: usize,
    latents_fixed: Option<&FixedLatents>,
) -> Result<RatingHistogramField> {
    validate_runs(n_runs, bins)?;
    model.check_mask(mask)?;
    Ok(ensemble(model, Some(mask), n_runs, seed, bins, LatentSource::Prior(latents_fixed)))
}

/// Per-cell distances between two histogram fields and their mean.
pub fn field_distance(a: &RatingHistogramField, b: &RatingHistogramField) -> Result<(Vec<f64>, f64)> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(Error::ShapeMismatch {
            expected_rows: a.rows,
            expected_cols: a.cols,
            rows: b.rows,
            cols: b.cols,
        });
    }
    if a.bins != b.bins {
        return Err(Error::SupportMismatch(a.bins, b.bins));
    }
    let mut per_cell = Vec::with_capacity(a.rows * a.cols);
    for i in 0..a.rows {
        for j in 0..a.cols {
            per_cell.push(js_distance(&a.cell_distribution(i, j), &b.cell_distribution(i, j))?);
        }
    }
    let avg = per_cell.iter().sum::<f64>() / per_cell.len() as f64;
    Ok((per_cell, avg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictiveMode {
    Prior,
    Posterior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceReport {
    pub avg_js: f64,
    pub rows: usize,
    pub cols: usize,
    /// Row-major per-cell JS distances.
    pub per_cell_js: Vec<f64>,
    pub mask: DisarmMask,
    pub n_runs: usize,
    pub seed: u64,
    pub bins: usize,
    pub mode: PredictiveMode,
}

impl InfluenceReport {
    pub fn cell(&self, row: usize, col: usize) -> f64 {
        self.per_cell_js[row * self.cols + col]
    }
}

/// Which predictive distribution the two ensembles are drawn from.
#[derive(Debug, Clone, Copy)]
pub enum Predictive<'a> {
    /// Prior predictive, with optional latents held fixed across runs.
    Prior(Option<&'a FixedLatents>),
    /// Posterior predictive: latents resampled by weight from the posterior.
    Posterior(&'a EmpiricalPosterior),
}

/// Average JS distance between armed and disarmed predictive ensembles.
///
/// The two ensembles draw from independent random streams derived from
/// `seed`, so an empty mask yields the Monte Carlo noise floor, not zero.
pub fn influence(
    model: &RatingModel,
    mask: &DisarmMask,
    n_runs: usize,
    seed: u64,
    bins: usize,
    predictive: Predictive<'_>,
) -> Result<InfluenceReport> {
    validate_runs(n_runs, bins)?;
    model.check_mask(mask)?;
    let armed_seed = derive_seed(seed, ARMED_STREAM);
    let disarmed_seed = derive_seed(seed, DISARMED_STREAM);

    let (armed, disarmed, mode) = match predictive {
        Predictive::Prior(fixed) => {
            let src = LatentSource::Prior(fixed);
            (
                ensemble(model, None, n_runs, armed_seed, bins, src),
                ensemble(model, Some(mask), n_runs, disarmed_seed, bins, src),
                PredictiveMode::Prior,
            )
        }
        Predictive::Posterior(posterior) => {
            let mut rng = SimRng::new(derive_seed(seed, RESAMPLE_STREAM), 0);
            let draws: Vec<LatentAssignment> = posterior
                .resample_indices(n_runs, &mut rng)?
                .into_iter()
                .map(|k| posterior.traces()[k].latents.clone())
                .collect();
            let src = LatentSource::Posterior(&draws);
            (
                ensemble(model, None, n_runs, armed_seed, bins, src),
                ensemble(model, Some(mask), n_runs, disarmed_seed, bins, src),
                PredictiveMode::Posterior,
            )
        }
    };
    let (per_cell_js, avg_js) = field_distance(&armed, &disarmed)?;
    Ok(InfluenceReport {
        avg_js,
        rows: armed.rows,
        cols: armed.cols,
        per_cell_js,
        mask: mask.clone(),
        n_runs,
        seed,
        bins,
        mode,
    })
}

/// Draws the malicious set used for one sweep seed, independent of the target spread.
pub fn sweep_malicious_set(config: &ModelConfig, seed: u64) -> Vec<bool> {
    let mut rng = SimRng::new(derive_seed(seed, MALICIOUS_SET_STREAM), 0);
    (0..config.n_users)
        .map(|_| rng.next_f64() < config.p_malicious)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau_sigma: f64,
    pub seeds: Vec<u64>,
    pub avg_js: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub n_runs: usize,
    pub bins: usize,
    /// Spearman rank correlation between target spread and mean influence.
    pub spearman: f64,
}

/// Influence of disarming the malicious users as the target spread varies.
///
/// For every seed a malicious set is drawn once and shared by the whole grid;
/// each run redraws tastes and targets with that set held fixed.
pub fn coordination_sweep(
    config: &ModelConfig,
    tau_sigma_grid: &[f64],
    seeds: &[u64],
    n_runs: usize,
    bins: usize,
) -> Result<SweepTable> {
    if tau_sigma_grid.is_empty() {
        return Err(Error::InvalidArgument("target spread grid is empty".into()));
    }
    if seeds.len() < 2 {
        return Err(Error::InvalidArgument("a sweep needs at least two seeds".into()));
    }
    let mut rows = Vec::with_capacity(tau_sigma_grid.len());
    for &tau_sigma in tau_sigma_grid {
        let mut cfg = config.clone();
        cfg.target_std = tau_sigma;
        let model = RatingModel::new(cfg)?;
        let avg_js = seeds
            .iter()
            .map(|&seed| {
                let malicious = sweep_malicious_set(config, seed);
                let mask = DisarmMask::from_bools(malicious.clone());
                let fixed = FixedLatents::malicious_only(malicious);
                influence(&model, &mask, n_runs, seed, bins, Predictive::Prior(Some(&fixed)))
                    .map(|r| r.avg_js)
            })
            .collect::<Result<Vec<f64>>>()?;
        let (mean, std) = mean_std(&avg_js);
        rows.push(SweepRow {
            tau_sigma,
            seeds: seeds.to_vec(),
            avg_js,
            mean,
            std,
        });
    }
    let means: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    let spearman = spearman(tau_sigma_grid, &means);
    Ok(SweepTable {
        rows,
        n_runs,
        bins,
        spearman,
    })
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // ties share the average rank
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let (rx, ry) = (ranks(xs), ranks(ys));
    let (mx, _) = mean_std(&rx);
    let (my, _) = mean_std(&ry);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}
