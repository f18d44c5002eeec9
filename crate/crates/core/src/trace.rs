//! Addressed execution traces of the rating model.
//!
//! The model reports every random choice to a [`Choices`] handler. The
//! [`Executor`] handler records each choice as a [`Site`] and supports three
//! ways of running the program:
//!
//! * forward: every site is drawn from its prior,
//! * conditioned: rating sites take the observed matrix value and are scored,
//! * replay: values recorded in an earlier trace are reused where the
//!   address still exists, which is what single-site MH needs.

use serde::{Deserialize, Serialize};

use crate::distributions::{Bernoulli, Categorical, TruncatedNormal, Uniform};
use crate::error::{Error, Result};
use crate::model::{DisarmMask, LatentAssignment, RatingMatrix, RatingModel};
use crate::rng::SimRng;

/// Name of a random choice, stable across executions on the same control path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Address {
    UserTaste(usize),
    Malicious(usize),
    Target(usize),
    Pick { user: usize, step: usize },
    Rating { user: usize, movie: usize, step: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteKind {
    UserTaste,
    Malicious,
    Target,
    Pick,
    Rating,
}

impl SiteKind {
    pub const ALL: [SiteKind; 5] = [
        SiteKind::UserTaste,
        SiteKind::Malicious,
        SiteKind::Target,
        SiteKind::Pick,
        SiteKind::Rating,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SiteKind::UserTaste => "user_taste",
            SiteKind::Malicious => "malicious",
            SiteKind::Target => "target",
            SiteKind::Pick => "pick",
            SiteKind::Rating => "rating",
        }
    }
}

impl Address {
    pub fn kind(&self) -> SiteKind {
        match self {
            Address::UserTaste(_) => SiteKind::UserTaste,
            Address::Malicious(_) => SiteKind::Malicious,
            Address::Target(_) => SiteKind::Target,
            Address::Pick { .. } => SiteKind::Pick,
            Address::Rating { .. } => SiteKind::Rating,
        }
    }
}

/// Distribution attached to a site.
#[derive(Debug, Clone, Copy)]
pub enum SiteDist<'a> {
    Uniform(Uniform),
    Bernoulli(Bernoulli),
    TruncatedNormal(TruncatedNormal),
    Categorical(Categorical<'a>),
}

impl SiteDist<'_> {
    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        match self {
            SiteDist::Uniform(d) => d.sample(rng),
            SiteDist::Bernoulli(d) => {
                if d.sample(rng) {
                    1.0
                } else {
                    0.0
                }
            }
            SiteDist::TruncatedNormal(d) => d.sample(rng),
            SiteDist::Categorical(d) => d.sample(rng) as f64,
        }
    }

    pub fn log_prob(&self, value: f64) -> f64 {
        match self {
            SiteDist::Uniform(d) => d.log_pdf(value),
            SiteDist::Bernoulli(d) => d.log_pmf(value != 0.0),
            SiteDist::TruncatedNormal(d) => d.log_pdf(value),
            SiteDist::Categorical(d) => d.log_pmf(value as usize),
        }
    }
}

/// Handler for the random choices made by the model.
pub trait Choices {
    /// A latent random choice.
    fn latent(&mut self, address: Address, dist: SiteDist<'_>) -> f64;
    /// A rating statement; observed when conditioning, latent otherwise.
    fn rating(&mut self, address: Address, dist: TruncatedNormal) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub address: Address,
    pub value: f64,
    pub log_prob: f64,
    pub observed: bool,
}

/// One recorded execution of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// Sites in execution order. May be empty for traces kept only as
    /// posterior samples.
    pub sites: Vec<Site>,
    pub log_prior: f64,
    pub log_likelihood: f64,
    pub latents: LatentAssignment,
    pub result: RatingMatrix,
}

impl Trace {
    pub fn log_joint(&self) -> f64 {
        self.log_prior + self.log_likelihood
    }

    pub fn latent_sites(&self) -> impl Iterator<Item = &Site> {
        self.sites.iter().filter(|s| !s.observed)
    }

    pub fn n_latent_sites(&self) -> usize {
        self.latent_sites().count()
    }

    pub fn site(&self, address: &Address) -> Option<&Site> {
        self.sites.iter().find(|s| s.address == *address)
    }

    /// Drops the site list, keeping latents, scores and the result.
    pub fn without_sites(mut self) -> Trace {
        self.sites = Vec::new();
        self
    }
}

/// Recorded values indexed by address, for O(1) lookup during replay.
#[derive(Debug, Clone)]
pub struct ReplayTable {
    n_users: usize,
    timesteps: usize,
    user_tastes: Vec<Option<f64>>,
    malicious: Vec<Option<f64>>,
    targets: Vec<Option<f64>>,
    picks: Vec<Option<f64>>,
    ratings: Vec<Option<(usize, f64)>>,
}

impl ReplayTable {
    pub fn empty(n_users: usize, timesteps: usize) -> Self {
        ReplayTable {
            n_users,
            timesteps,
            user_tastes: vec![None; n_users],
            malicious: vec![None; n_users],
            targets: vec![None; n_users],
            picks: vec![None; n_users * timesteps],
            ratings: vec![None; n_users * timesteps],
        }
    }

    /// Table of the latent (unobserved) sites of `trace`.
    pub fn from_trace(trace: &Trace, n_users: usize, timesteps: usize) -> Self {
        let mut table = ReplayTable::empty(n_users, timesteps);
        for site in trace.latent_sites() {
            table.insert(site.address, site.value);
        }
        table
    }

    pub fn from_fixed(fixed: &FixedLatents, n_users: usize, timesteps: usize) -> Self {
        let mut table = ReplayTable::empty(n_users, timesteps);
        if let Some(v) = &fixed.user_tastes {
            table.user_tastes = v.iter().map(|&x| Some(x)).collect();
        }
        if let Some(v) = &fixed.malicious {
            table.malicious = v.iter().map(|&b| Some(if b { 1.0 } else { 0.0 })).collect();
        }
        if let Some(v) = &fixed.targets {
            table.targets = v.iter().map(|&x| Some(x)).collect();
        }
        table
    }

    fn slot(&self, user: usize, step: usize) -> Option<usize> {
        (user < self.n_users && step < self.timesteps).then(|| step * self.n_users + user)
    }

    pub fn insert(&mut self, address: Address, value: f64) {
        match address {
            Address::UserTaste(i) => self.user_tastes[i] = Some(value),
            Address::Malicious(i) => self.malicious[i] = Some(value),
            Address::Target(i) => self.targets[i] = Some(value),
            Address::Pick { user, step } => {
                if let Some(k) = self.slot(user, step) {
                    self.picks[k] = Some(value);
                }
            }
            Address::Rating { user, movie, step } => {
                if let Some(k) = self.slot(user, step) {
                    self.ratings[k] = Some((movie, value));
                }
            }
        }
    }

    pub fn get(&self, address: &Address) -> Option<f64> {
        match *address {
            Address::UserTaste(i) => self.user_tastes.get(i).copied().flatten(),
            Address::Malicious(i) => self.malicious.get(i).copied().flatten(),
            Address::Target(i) => self.targets.get(i).copied().flatten(),
            Address::Pick { user, step } => self.slot(user, step).and_then(|k| self.picks[k]),
            Address::Rating { user, movie, step } => self
                .slot(user, step)
                .and_then(|k| self.ratings[k])
                .and_then(|(m, v)| (m == movie).then_some(v)),
        }
    }

    pub fn contains(&self, address: &Address) -> bool {
        self.get(address).is_some()
    }
}

/// Latent values to hold fixed during a run; `None` fields are drawn from the prior.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixedLatents {
    pub user_tastes: Option<Vec<f64>>,
    pub malicious: Option<Vec<bool>>,
    pub targets: Option<Vec<f64>>,
}

impl From<&LatentAssignment> for FixedLatents {
    fn from(l: &LatentAssignment) -> Self {
        FixedLatents {
            user_tastes: Some(l.user_tastes.clone()),
            malicious: Some(l.malicious.clone()),
            targets: Some(l.targets.clone()),
        }
    }
}

impl FixedLatents {
    pub fn malicious_only(malicious: Vec<bool>) -> Self {
        FixedLatents {
            malicious: Some(malicious),
            ..FixedLatents::default()
        }
    }
}

/// The recording [`Choices`] handler.
pub struct Executor<'a> {
    rng: &'a mut SimRng,
    observed: Option<&'a RatingMatrix>,
    replay: Option<&'a ReplayTable>,
    resample: Option<Address>,
    sites: Vec<Site>,
    log_prior: f64,
    log_likelihood: f64,
    fresh_log_prob: f64,
    resampled_log_prob: f64,
}

impl<'a> Executor<'a> {
    pub fn forward(rng: &'a mut SimRng) -> Self {
        Executor {
            rng,
            observed: None,
            replay: None,
            resample: None,
            sites: Vec::new(),
            log_prior: 0.0,
            log_likelihood: 0.0,
            fresh_log_prob: 0.0,
            resampled_log_prob: 0.0,
        }
    }

    pub fn conditioned(rng: &'a mut SimRng, observed: &'a RatingMatrix) -> Self {
        Executor {
            observed: Some(observed),
            ..Executor::forward(rng)
        }
    }

    pub fn with_replay(mut self, table: &'a ReplayTable) -> Self {
        self.replay = Some(table);
        self
    }

    /// Redraw `address` from its prior instead of reusing the replayed value.
    pub fn resampling(mut self, address: Address) -> Self {
        self.resample = Some(address);
        self
    }

    fn finish(self, latents: LatentAssignment, result: RatingMatrix) -> Trace {
        Trace {
            sites: self.sites,
            log_prior: self.log_prior,
            log_likelihood: self.log_likelihood,
            latents,
            result,
        }
    }
}

impl Choices for Executor<'_> {
    fn latent(&mut self, address: Address, dist: SiteDist<'_>) -> f64 {
        let is_resampled = self.resample == Some(address);
        let reused = if is_resampled {
            None
        } else {
            self.replay.and_then(|t| t.get(&address))
        };
        let value = match reused {
            Some(v) => v,
            None => dist.sample(self.rng),
        };
        let log_prob = dist.log_prob(value);
        self.log_prior += log_prob;
        if is_resampled {
            self.resampled_log_prob = log_prob;
        } else if reused.is_none() {
            self.fresh_log_prob += log_prob;
        }
        self.sites.push(Site {
            address,
            value,
            log_prob,
            observed: false,
        });
        value
    }

    fn rating(&mut self, address: Address, dist: TruncatedNormal) -> f64 {
        let Some(observed) = self.observed else {
            return self.latent(address, SiteDist::TruncatedNormal(dist));
        };
        let Address::Rating { user, movie, .. } = address else {
            unreachable!("rating statements carry rating addresses")
        };
        let value = observed.get(user, movie);
        let log_prob = dist.log_pdf(value);
        self.log_likelihood += log_prob;
        self.sites.push(Site {
            address,
            value,
            log_prob,
            observed: true,
        });
        value
    }
}

/// Runs the model with every choice drawn from the prior.
pub fn run_forward(model: &RatingModel, rng: &mut SimRng) -> Trace {
    run_forward_masked(model, rng, None)
}

pub(crate) fn run_forward_masked(model: &RatingModel, rng: &mut SimRng, mask: Option<&DisarmMask>) -> Trace {
    let mut ex = Executor::forward(rng);
    let (latents, result) = model.execute(&mut ex, mask);
    ex.finish(latents, result)
}

/// Runs the model with some latents held fixed; everything else is drawn fresh.
pub fn run_with_latents(
    model: &RatingModel,
    rng: &mut SimRng,
    fixed: &FixedLatents,
    mask: Option<&DisarmMask>,
) -> Trace {
    let cfg = model.config();
    let table = ReplayTable::from_fixed(fixed, cfg.n_users, cfg.timesteps);
    let mut ex = Executor::forward(rng).with_replay(&table);
    let (latents, result) = model.execute(&mut ex, mask);
    ex.finish(latents, result)
}

/// Re-executes `trace` reusing every recorded latent value.
pub fn replay(model: &RatingModel, trace: &Trace, rng: &mut SimRng, mask: Option<&DisarmMask>) -> Trace {
    let cfg = model.config();
    let table = ReplayTable::from_trace(trace, cfg.n_users, cfg.timesteps);
    let mut ex = Executor::forward(rng).with_replay(&table);
    let (latents, result) = model.execute(&mut ex, mask);
    ex.finish(latents, result)
}

/// Runs the model with every rating statement scored against `observed`.
///
/// Latents and ranking picks are drawn from the prior; each rating site takes
/// the observed value of the cell the trace visits.
pub fn run_conditioned(model: &RatingModel, rng: &mut SimRng, observed: &RatingMatrix) -> Result<Trace> {
    let cfg = model.config();
    observed.check_shape(cfg.n_users, cfg.n_movies)?;
    let mut ex = Executor::conditioned(rng, observed);
    let (latents, result) = model.execute(&mut ex, None);
    Ok(ex.finish(latents, result))
}

/// Like [`run_conditioned`], with some latents held fixed.
pub fn run_conditioned_with_latents(
    model: &RatingModel,
    rng: &mut SimRng,
    observed: &RatingMatrix,
    fixed: &FixedLatents,
) -> Result<Trace> {
    let cfg = model.config();
    observed.check_shape(cfg.n_users, cfg.n_movies)?;
    let table = ReplayTable::from_fixed(fixed, cfg.n_users, cfg.timesteps);
    let mut ex = Executor::conditioned(rng, observed).with_replay(&table);
    let (latents, result) = model.execute(&mut ex, None);
    Ok(ex.finish(latents, result))
}

/// Proposes a new trace by redrawing one latent site from its prior.
///
/// All other recorded latent values are reused where their address is still
/// reached; new addresses are drawn fresh and unreached ones are dropped. The
/// returned log-correction completes the Metropolis-Hastings ratio:
/// `accept with min(1, exp(new.log_joint() - old.log_joint() + correction))`.
pub fn resample_site(
    trace: &Trace,
    address: Address,
    rng: &mut SimRng,
    model: &RatingModel,
    observed: Option<&RatingMatrix>,
) -> Result<(Trace, f64)> {
    let old_site = trace
        .latent_sites()
        .find(|s| s.address == address)
        .ok_or(Error::UnknownAddress(address))?;
    let cfg = model.config();
    let table = ReplayTable::from_trace(trace, cfg.n_users, cfg.timesteps);

    let mut ex = match observed {
        Some(obs) => {
            obs.check_shape(cfg.n_users, cfg.n_movies)?;
            Executor::conditioned(rng, obs)
        }
        None => Executor::forward(rng),
    }
    .with_replay(&table)
    .resampling(address);
    let (latents, result) = model.execute(&mut ex, None);
    let fresh = ex.fresh_log_prob;
    let resampled = ex.resampled_log_prob;
    let proposal = ex.finish(latents, result);

    let new_table = ReplayTable::from_trace(&proposal, cfg.n_users, cfg.timesteps);
    let stale: f64 = trace
        .latent_sites()
        .filter(|s| s.address != address && !new_table.contains(&s.address))
        .map(|s| s.log_prob)
        .sum();
    let old_count = trace.n_latent_sites() as f64;
    let new_count = proposal.n_latent_sites() as f64;

    let correction =
        old_count.ln() - new_count.ln() + old_site.log_prob - resampled + stale - fresh;
    Ok((proposal, correction))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::truncated_normal_log_pdf;
    use crate::distributions::TruncatedNormalParams;
    use crate::model::ModelConfig;
    use std::collections::BTreeSet;

    fn config(p: f64, timesteps: usize) -> ModelConfig {
        ModelConfig {
            n_movies: 4,
            n_users: 3,
            p_malicious: p,
            malicious_rating: 1.0,
            rating_std: 0.05,
            target_mean: 2.0,
            target_std: 1.0,
            timesteps,
            difficulty: 0.0,
            movie_tastes: vec![0.15, 0.4, 0.6, 0.85],
        }
    }

    fn model(p: f64, timesteps: usize) -> RatingModel {
        RatingModel::new(config(p, timesteps)).unwrap()
    }

    #[test]
    fn forward_with_no_malicious_users() {
        let t = run_forward(&model(0.0, 5), &mut SimRng::new(1, 0));
        assert!(t.latents.malicious.iter().all(|&b| !b));
        assert_eq!(t.log_likelihood, 0.0);
    }

    #[test]
    fn zero_timesteps_gives_empty_matrix() {
        let m = model(0.5, 0);
        let t = run_forward(&m, &mut SimRng::new(1, 0));
        assert!(t.result.as_slice().iter().all(|&v| v == 0.0));
        let obs = RatingMatrix::from_rows(&vec![vec![0.5; 4]; 3]).unwrap();
        let c = run_conditioned(&m, &mut SimRng::new(1, 0), &obs).unwrap();
        assert_eq!(c.log_likelihood, 0.0);
    }

    #[test]
    fn forward_is_deterministic() {
        let m = model(0.3, 6);
        assert_eq!(run_forward(&m, &mut SimRng::new(8, 2)), run_forward(&m, &mut SimRng::new(8, 2)));
    }

    #[test]
    fn log_prior_matches_recomputed_site_densities() {
        let m = model(0.4, 6);
        let cfg = m.config().clone();
        for stream in 0..20 {
            let t = run_forward(&m, &mut SimRng::new(3, stream));
            // independent recomputation from the recorded values
            let mut total = 0.0;
            let mut matrix = RatingMatrix::zeros(cfg.n_users, cfg.n_movies);
            for s in &t.sites {
                total += match s.address {
                    Address::UserTaste(_) => 0.0,
                    Address::Malicious(_) => {
                        if s.value != 0.0 {
                            cfg.p_malicious.ln()
                        } else {
                            (1.0 - cfg.p_malicious).ln()
                        }
                    }
                    Address::Target(_) => truncated_normal_log_pdf(
                        s.value,
                        TruncatedNormalParams::new(cfg.target_mean, cfg.target_std, 0.0, 4.0),
                    )
                    .unwrap(),
                    Address::Pick { .. } => {
                        let means = matrix.column_means();
                        let total: f64 = means.iter().sum();
                        if total == 0.0 {
                            -(cfg.n_movies as f64).ln()
                        } else {
                            (means[s.value as usize] / total).ln()
                        }
                    }
                    Address::Rating { user, movie, .. } => {
                        let event_mean = {
                            let u = t.latents.user_tastes[user];
                            let matched = 1.0 - (u - cfg.movie_tastes[movie]).abs();
                            if !t.latents.malicious[user] {
                                matched
                            } else if t.sites.iter().any(|p| {
                                matches!(p.address, Address::Pick { user: pu, step: ps }
                                    if pu == user && Some(ps) == step_of(&s.address))
                            }) {
                                0.0
                            } else {
                                cfg.malicious_rating
                            }
                        };
                        matrix.set(user, movie, s.value);
                        truncated_normal_log_pdf(s.value, TruncatedNormalParams::new(event_mean, cfg.rating_std, 0.0, 1.0))
                            .unwrap()
                    }
                };
            }
            assert!((total - t.log_prior).abs() < 1e-10, "{total} vs {}", t.log_prior);
        }
    }

    fn step_of(a: &Address) -> Option<usize> {
        match a {
            Address::Rating { step, .. } | Address::Pick { step, .. } => Some(*step),
            _ => None,
        }
    }

    #[test]
    fn address_count_for_single_step() {
        let m = model(0.5, 1);
        for stream in 0..50 {
            let t = run_forward(&m, &mut SimRng::new(4, stream));
            let n_malicious = t.latents.n_malicious();
            // at step one every malicious target is unrated, so those users skip the pick
            let expected = 3 * 3 + (3 - n_malicious) + 3;
            assert_eq!(t.sites.len(), expected);
            let unique: BTreeSet<_> = t.sites.iter().map(|s| s.address).collect();
            assert_eq!(unique.len(), t.sites.len());
        }
    }

    #[test]
    fn replay_reproduces_result() {
        let m = model(0.4, 6);
        for stream in 0..10 {
            let t = run_forward(&m, &mut SimRng::new(6, stream));
            let again = replay(&m, &t, &mut SimRng::new(999, 0), None);
            assert_eq!(t.result, again.result);
            assert_eq!(t.log_prior, again.log_prior);
        }
    }

    #[test]
    fn identical_latents_give_identical_addresses() {
        let m = model(0.4, 6);
        let t = run_forward(&m, &mut SimRng::new(6, 1));
        let again = replay(&m, &t, &mut SimRng::new(7, 0), None);
        let a: Vec<_> = t.sites.iter().map(|s| s.address).collect();
        let b: Vec<_> = again.sites.iter().map(|s| s.address).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn conditioning_scores_every_rating() {
        let m = model(0.3, 5);
        let gt = run_forward(&m, &mut SimRng::new(10, 0));
        let c = run_conditioned(&m, &mut SimRng::new(11, 0), &gt.result).unwrap();
        let observed: Vec<_> = c.sites.iter().filter(|s| s.observed).collect();
        assert_eq!(observed.len(), 3 * 5);
        let sum: f64 = observed.iter().map(|s| s.log_prob).sum();
        assert!((sum - c.log_likelihood).abs() < 1e-12);
        for s in observed {
            let Address::Rating { user, movie, .. } = s.address else { panic!() };
            assert_eq!(s.value, gt.result.get(user, movie));
        }
        assert!(c.log_likelihood.is_finite());
    }

    #[test]
    fn conditioning_rejects_wrong_shape() {
        let m = model(0.3, 5);
        let obs = RatingMatrix::zeros(2, 4);
        assert!(matches!(
            run_conditioned(&m, &mut SimRng::new(1, 0), &obs),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn unobserved_cell_is_heavily_penalized() {
        let p = TruncatedNormalParams::new(0.98, 0.05, 0.0, 1.0);
        assert!(truncated_normal_log_pdf(0.0, p).unwrap() < -100.0);
    }

    #[test]
    fn resample_rejects_unknown_and_observed_sites() {
        let m = model(0.3, 2);
        let t = run_forward(&m, &mut SimRng::new(1, 0));
        let bogus = Address::Pick { user: 0, step: 50 };
        assert_eq!(
            resample_site(&t, bogus, &mut SimRng::new(2, 0), &m, None).unwrap_err(),
            Error::UnknownAddress(bogus)
        );
        let obs = t.result.clone();
        let c = run_conditioned(&m, &mut SimRng::new(3, 0), &obs).unwrap();
        let rating = c.sites.iter().find(|s| s.observed).unwrap().address;
        assert!(resample_site(&c, rating, &mut SimRng::new(2, 0), &m, Some(&obs)).is_err());
    }

    #[test]
    fn redrawing_identical_value_is_a_null_move() {
        // with p = 0 the malicious flag can only be redrawn as false
        let m = model(0.0, 4);
        let t = run_forward(&m, &mut SimRng::new(21, 0));
        let (p, corr) = resample_site(&t, Address::Malicious(1), &mut SimRng::new(5, 0), &m, None).unwrap();
        assert_eq!(p.result, t.result);
        assert_eq!(p.log_joint(), t.log_joint());
        assert_eq!(corr, 0.0);
    }

    #[test]
    fn flipping_malicious_changes_control_path() {
        let m = model(0.5, 3);
        let (t, user) = (0..200)
            .map(|s| run_forward(&m, &mut SimRng::new(31, s)))
            .find_map(|t| t.latents.malicious.iter().position(|&b| !b).map(|u| (t, u)))
            .unwrap();
        let (p, _) = (0..200)
            .map(|s| resample_site(&t, Address::Malicious(user), &mut SimRng::new(32, s), &m, None).unwrap())
            .find(|(p, _)| p.latents.malicious[user])
            .unwrap();
        let target = p.latents.target_movie(user, 4);
        // the boost at step 0 hits the target, a rating address the organic path never had
        let boost = Address::Rating { user, movie: target, step: 0 };
        assert!(p.site(&boost).is_some());
        assert!(p.site(&Address::Pick { user, step: 0 }).is_none());
        let old_rating = t
            .sites
            .iter()
            .find(|s| matches!(s.address, Address::Rating { user: u, step: 0, .. } if u == user))
            .unwrap();
        if old_rating.address != boost {
            assert!(!ReplayTable::from_trace(&p, 3, 3).contains(&old_rating.address));
        }
    }

    #[test]
    fn fixed_latents_are_respected() {
        let m = model(0.3, 3);
        let fixed = FixedLatents {
            user_tastes: Some(vec![0.1, 0.2, 0.3]),
            malicious: Some(vec![true, false, true]),
            targets: Some(vec![0.5, 1.5, 3.5]),
        };
        let t = run_with_latents(&m, &mut SimRng::new(1, 1), &fixed, None);
        assert_eq!(t.latents.user_tastes, vec![0.1, 0.2, 0.3]);
        assert_eq!(t.latents.malicious, vec![true, false, true]);
        assert_eq!(t.latents.targets, vec![0.5, 1.5, 3.5]);
    }
}
