//! Scenario files: a model configuration plus a ground-truth draw and the
//! rating matrix it produced.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LatentAssignment, ModelConfig, RatingMatrix, RatingModel};
use crate::rng::{derive_seed, SimRng};
use crate::trace::{run_with_latents, Executor, FixedLatents};
use crate::TOOL_VERSION;

pub const SCENARIO_FORMAT: &str = "ratingsim-scenario";
pub const SCHEMA_VERSION: u32 = 1;

const MOVIE_TASTE_STREAM: u64 = 0x4D;
const LATENT_STREAM: u64 = 0;
const SIMULATION_STREAM: u64 = 1;

/// Scenario configuration as read from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_movies: usize,
    pub n_users: usize,
    pub p_malicious: f64,
    pub malicious_rating: f64,
    pub rating_std: f64,
    pub target_mean: f64,
    pub target_std: f64,
    pub timesteps: usize,
    pub difficulty: f64,
    #[serde(default)]
    pub seed: u64,
    /// Explicit movie tastes; drawn from `Uniform(0, 1)` with the seed if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub movie_tastes: Option<Vec<f64>>,
    /// Forces exactly these users to be malicious in the ground truth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub malicious_users: Option<Vec<usize>>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Resolves the model configuration, drawing movie tastes if needed.
    pub fn model_config(&self, seed: u64) -> Result<ModelConfig> {
        let movie_tastes = match &self.movie_tastes {
            Some(t) => t.clone(),
            None => {
                let mut rng = SimRng::new(derive_seed(seed, MOVIE_TASTE_STREAM), 0);
                ModelConfig::sample_movie_tastes(self.n_movies, &mut rng)
            }
        };
        let config = ModelConfig {
            n_movies: self.n_movies,
            n_users: self.n_users,
            p_malicious: self.p_malicious,
            malicious_rating: self.malicious_rating,
            rating_std: self.rating_std,
            target_mean: self.target_mean,
            target_std: self.target_std,
            timesteps: self.timesteps,
            difficulty: self.difficulty,
            movie_tastes,
        };
        config.validate()?;
        Ok(config)
    }
}

/// A generated scenario with known ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub format: String,
    pub schema_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub config: ModelConfig,
    pub ground_truth: LatentAssignment,
    /// Target movie index of every user (meaningful for malicious users).
    pub ground_truth_targets: Vec<usize>,
    pub observed: RatingMatrix,
}

fn simulate_observed(model: &RatingModel, seed: u64, latents: &LatentAssignment) -> RatingMatrix {
    let mut rng = SimRng::new(seed, SIMULATION_STREAM);
    run_with_latents(model, &mut rng, &FixedLatents::from(latents), None).result
}

/// Draws ground-truth latents and forward-simulates the observed matrix.
pub fn generate(config: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    let model_config = config.model_config(seed)?;
    let model = RatingModel::new(model_config.clone())?;
    let mut rng = SimRng::new(seed, LATENT_STREAM);
    let mut latents = model.sample_latents(&mut Executor::forward(&mut rng));
    if let Some(users) = &config.malicious_users {
        let mut flags = vec![false; config.n_users];
        for &user in users {
            if user >= config.n_users {
                return Err(Error::UnknownUser {
                    user,
                    n_users: config.n_users,
                });
            }
            flags[user] = true;
        }
        latents.malicious = flags;
    }
    let observed = simulate_observed(&model, seed, &latents);
    let ground_truth_targets = (0..config.n_users)
        .map(|i| latents.target_movie(i, config.n_movies))
        .collect();
    Ok(Scenario {
        format: SCENARIO_FORMAT.to_string(),
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        seed,
        config: model_config,
        ground_truth: latents,
        ground_truth_targets,
        observed,
    })
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Scenario =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if scenario.format != SCENARIO_FORMAT {
            return Err(Error::InvalidConfig(format!(
                "not a scenario file (format {:?})",
                scenario.format
            )));
        }
        scenario.config.validate()?;
        scenario
            .observed
            .check_shape(scenario.config.n_users, scenario.config.n_movies)?;
        Ok(scenario)
    }

    pub fn model(&self) -> Result<RatingModel> {
        RatingModel::new(self.config.clone())
    }

    /// Re-simulates the observed matrix from the seed and ground truth.
    pub fn regenerate_observed(&self) -> Result<RatingMatrix> {
        Ok(simulate_observed(&self.model()?, self.seed, &self.ground_truth))
    }
}
