//! Generative model of users rating movies under a mean-rating ranking.
//!
//! Organic users pick a movie from the current ranking and rate it by how well
//! their taste matches the movie. Malicious users first push their target
//! movie towards `malicious_rating`, then down-rate whatever the ranking shows
//! them. `difficulty` blends malicious ratings towards organic behaviour.
//! A [`DisarmMask`] removes chosen users from the simulation entirely.

use serde::{Deserialize, Serialize};

use crate::distributions::{Bernoulli, Categorical, TruncatedNormal, TruncatedNormalParams, Uniform};
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::trace::{self, Address, Choices, SiteDist, Trace};

/// Fixed hyperparameters of the rating model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_movies: usize,
    pub n_users: usize,
    pub p_malicious: f64,
    pub malicious_rating: f64,
    pub rating_std: f64,
    pub target_mean: f64,
    pub target_std: f64,
    pub timesteps: usize,
    pub difficulty: f64,
    /// Movie taste features, drawn once per scenario and then held fixed.
    pub movie_tastes: Vec<f64>,
}

fn check_unit(what: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::OutOfRange { what, value })
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_movies == 0 {
            return invalid("n_movies must be positive".into());
        }
        if self.n_users == 0 {
            return invalid("n_users must be positive".into());
        }
        for (name, v) in [
            ("p_malicious", self.p_malicious),
            ("malicious_rating", self.malicious_rating),
            ("difficulty", self.difficulty),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return invalid(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        if !(self.rating_std > 0.0 && self.rating_std.is_finite()) {
            return invalid(format!("rating_std = {} must be positive", self.rating_std));
        }
        if !(self.target_std > 0.0 && self.target_std.is_finite()) {
            return invalid(format!("target_std = {} must be positive", self.target_std));
        }
        if !(0.0..=self.n_movies as f64).contains(&self.target_mean) {
            return invalid(format!(
                "target_mean = {} is outside [0, {}]",
                self.target_mean, self.n_movies
            ));
        }
        if self.movie_tastes.len() != self.n_movies {
            return invalid(format!(
                "movie_tastes has {} entries, expected {}",
                self.movie_tastes.len(),
                self.n_movies
            ));
        }
        if let Some(v) = self.movie_tastes.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return invalid(format!("movie taste {v} is outside [0, 1]"));
        }
        Ok(())
    }

    /// Draws movie tastes uniformly on `[0, 1)`.
    pub fn sample_movie_tastes(n_movies: usize, rng: &mut SimRng) -> Vec<f64> {
        let unit = Uniform::new(0.0, 1.0).expect("unit interval");
        (0..n_movies).map(|_| unit.sample(rng)).collect()
    }
}

/// One draw of the per-user latent variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentAssignment {
    pub user_tastes: Vec<f64>,
    pub malicious: Vec<bool>,
    pub targets: Vec<f64>,
}

impl LatentAssignment {
    pub fn n_users(&self) -> usize {
        self.user_tastes.len()
    }

    pub fn n_malicious(&self) -> usize {
        self.malicious.iter().filter(|&&b| b).count()
    }

    pub fn malicious_users(&self) -> Vec<usize> {
        self.malicious
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn target_movie(&self, user: usize, n_movies: usize) -> usize {
        target_movie(self.targets[user], n_movies)
    }
}

/// Maps a continuous target on `[0, n_movies]` to a movie index.
pub fn target_movie(tau: f64, n_movies: usize) -> usize {
    (tau.max(0.0).floor() as usize).min(n_movies - 1)
}

/// Ratings of every user for every movie; zero means "not rated".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct RatingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for RatingMatrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        RatingMatrix::from_vec(raw.rows, raw.cols, raw.data)
    }
}

impl RatingMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RatingMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major data, checking every entry is in `[0, 1]`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        for &v in &data {
            check_unit("rating", v)?;
        }
        Ok(RatingMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged matrix rows".into()));
        }
        RatingMatrix::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column_means(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|j| self.column_sum(j) / self.rows as f64)
            .collect()
    }

    fn column_sum(&self, col: usize) -> f64 {
        (0..self.rows).map(|i| self.get(i, col)).sum()
    }

    pub fn is_rated(&self, row: usize, col: usize) -> bool {
        self.get(row, col) != 0.0
    }

    pub fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if self.rows != rows || self.cols != cols {
            return Err(Error::ShapeMismatch {
                expected_rows: rows,
                expected_cols: cols,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(())
    }

    /// Swaps rows according to `perm`: row `i` of the result is row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> RatingMatrix {
        let mut out = RatingMatrix::zeros(self.rows, self.cols);
        for (i, &src) in perm.iter().enumerate() {
            out.data[i * self.cols..(i + 1) * self.cols].copy_from_slice(self.row(src));
        }
        out
    }
}

/// Users whose ratings are removed from the simulation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DisarmMask(Vec<bool>);

impl DisarmMask {
    pub fn none(n_users: usize) -> Self {
        DisarmMask(vec![false; n_users])
    }

    pub fn all(n_users: usize) -> Self {
        DisarmMask(vec![true; n_users])
    }

    pub fn from_bools(flags: Vec<bool>) -> Self {
        DisarmMask(flags)
    }

    pub fn from_users(users: &[usize], n_users: usize) -> Result<Self> {
        let mut flags = vec![false; n_users];
        for &user in users {
            if user >= n_users {
                return Err(Error::UnknownUser { user, n_users });
            }
            flags[user] = true;
        }
        Ok(DisarmMask(flags))
    }

    /// Disarms exactly the malicious users of `latents`.
    pub fn malicious(latents: &LatentAssignment) -> Self {
        DisarmMask(latents.malicious.clone())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_disarmed(&self, user: usize) -> bool {
        self.0[user]
    }

    pub fn disarmed_users(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }
}

/// Rating a user with taste `user_taste` gives a movie with taste `movie_taste`.
pub fn rate(user_taste: f64, movie_taste: f64) -> Result<f64> {
    check_unit("user taste", user_taste)?;
    check_unit("movie taste", movie_taste)?;
    Ok(rate_unchecked(user_taste, movie_taste))
}

#[inline]
fn rate_unchecked(user_taste: f64, movie_taste: f64) -> f64 {
    1.0 - (user_taste - movie_taste).abs()
}

/// Draws a movie proportionally to its mean rating (uniform if nothing is rated).
pub fn pick(matrix: &RatingMatrix, rng: &mut SimRng) -> usize {
    let means = matrix.column_means();
    Categorical::new(&means)
        .expect("ratings are non-negative")
        .sample(rng)
}

/// Which part of the rating loop produced a rating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    /// Malicious user rating its still-unrated target.
    Boost,
    /// Malicious user down-rating a movie picked from the ranking.
    Camouflage,
    Organic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingEvent {
    pub user: usize,
    pub movie: usize,
    pub step: usize,
    pub branch: Branch,
    /// Mean of the truncated normal the rating is drawn from.
    pub mean: f64,
    pub value: f64,
}

/// The evolving rating matrix plus its column sums.
#[derive(Debug, Clone)]
pub struct SimulationState {
    matrix: RatingMatrix,
    column_means: Vec<f64>,
}

impl SimulationState {
    pub fn new(n_users: usize, n_movies: usize) -> Self {
        SimulationState {
            matrix: RatingMatrix::zeros(n_users, n_movies),
            column_means: vec![0.0; n_movies],
        }
    }

    pub fn matrix(&self) -> &RatingMatrix {
        &self.matrix
    }

    pub fn column_means(&self) -> &[f64] {
        &self.column_means
    }

    pub fn into_matrix(self) -> RatingMatrix {
        self.matrix
    }

    fn write(&mut self, user: usize, movie: usize, value: f64) {
        self.matrix.set(user, movie, value);
        // recomputed from scratch so the weights never drift below zero
        self.column_means[movie] = self.matrix.column_sum(movie) / self.matrix.rows as f64;
    }
}

/// The rating model with a validated configuration.
#[derive(Debug, Clone)]
pub struct RatingModel {
    config: ModelConfig,
    taste_prior: Uniform,
    malicious_prior: Bernoulli,
    target_prior: TruncatedNormal,
}

impl RatingModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let target_prior = TruncatedNormal::new(TruncatedNormalParams::new(
            config.target_mean,
            config.target_std,
            0.0,
            config.n_movies as f64,
        ))?;
        Ok(RatingModel {
            taste_prior: Uniform::new(0.0, 1.0)?,
            malicious_prior: Bernoulli::new(config.p_malicious)?,
            target_prior,
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn sample_latents<C: Choices>(&self, choices: &mut C) -> LatentAssignment {
        let n = self.config.n_users;
        let user_tastes = (0..n)
            .map(|i| choices.latent(Address::UserTaste(i), SiteDist::Uniform(self.taste_prior)))
            .collect();
        let malicious = (0..n)
            .map(|i| {
                choices.latent(Address::Malicious(i), SiteDist::Bernoulli(self.malicious_prior)) != 0.0
            })
            .collect();
        let targets = (0..n)
            .map(|i| choices.latent(Address::Target(i), SiteDist::TruncatedNormal(self.target_prior)))
            .collect();
        LatentAssignment {
            user_tastes,
            malicious,
            targets,
        }
    }

    fn rating_dist(&self, mean: f64) -> TruncatedNormal {
        TruncatedNormal::new(TruncatedNormalParams::new(mean, self.config.rating_std, 0.0, 1.0))
            .expect("rating mean lies in [0, 1] and std was validated")
    }

    fn pick_movie<C: Choices>(&self, user: usize, step: usize, state: &SimulationState, choices: &mut C) -> usize {
        let ranking = Categorical::new(&state.column_means).expect("ratings are non-negative");
        choices.latent(Address::Pick { user, step }, SiteDist::Categorical(ranking)) as usize
    }

    /// One user's turn at one timestep: choose a movie and record a rating.
    pub fn step_user<C: Choices>(
        &self,
        user: usize,
        step: usize,
        state: &mut SimulationState,
        latents: &LatentAssignment,
        choices: &mut C,
    ) -> RatingEvent {
        let cfg = &self.config;
        let taste = latents.user_tastes[user];
        let alpha = cfg.difficulty;
        let (movie, branch) = if latents.malicious[user] {
            let target = latents.target_movie(user, cfg.n_movies);
            if !state.matrix.is_rated(user, target) {
                (target, Branch::Boost)
            } else {
                (self.pick_movie(user, step, state, choices), Branch::Camouflage)
            }
        } else {
            (self.pick_movie(user, step, state, choices), Branch::Organic)
        };
        let matched = rate_unchecked(taste, cfg.movie_tastes[movie]);
        let mean = match branch {
            Branch::Boost => (1.0 - alpha) * cfg.malicious_rating + alpha * matched,
            Branch::Camouflage => alpha * matched,
            Branch::Organic => matched,
        };
        let value = choices.rating(Address::Rating { user, movie, step }, self.rating_dist(mean));
        state.write(user, movie, value);
        RatingEvent {
            user,
            movie,
            step,
            branch,
            mean,
            value,
        }
    }

    /// Runs the whole program and returns the latents and the final matrix.
    pub fn execute<C: Choices>(
        &self,
        choices: &mut C,
        mask: Option<&DisarmMask>,
    ) -> (LatentAssignment, RatingMatrix) {
        let latents = self.sample_latents(choices);
        let cfg = &self.config;
        let mut state = SimulationState::new(cfg.n_users, cfg.n_movies);
        for step in 0..cfg.timesteps {
            for user in 0..cfg.n_users {
                if mask.is_some_and(|m| m.is_disarmed(user)) {
                    continue;
                }
                self.step_user(user, step, &mut state, &latents, choices);
            }
        }
        (latents, state.into_matrix())
    }

    pub fn check_mask(&self, mask: &DisarmMask) -> Result<()> {
        if mask.len() != self.config.n_users {
            return Err(Error::InvalidArgument(format!(
                "disarm mask has {} entries, expected {}",
                mask.len(),
                self.config.n_users
            )));
        }
        Ok(())
    }
}

/// Forward-simulates the model, optionally with some users disarmed.
pub fn simulate(model: &RatingModel, rng: &mut SimRng, mask: Option<&DisarmMask>) -> Result<Trace> {
    if let Some(m) = mask {
        model.check_mask(m)?;
    }
    Ok(trace::run_forward_masked(model, rng, mask))
}
