//! Every tuned constant of the engine in one table.
//!
//! Any field can be overridden from a TOML or JSON document; omitted fields
//! keep their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub seed: u64,
    pub marking: MarkingConfig,
    pub foreground: ForegroundConfig,
    pub detection: DetectionConfig,
    pub tracklets: TrackletConfig,
    pub matching: MatchingConfig,
    pub chunking: ChunkingConfig,
    pub correction: CorrectionConfig,
    pub harness: HarnessConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            Ok(serde_json::from_str(&text)?)
        } else {
            Ok(toml::from_str(&text)?)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarkingConfig {
    /// Marks to gather before the schedule stops adding interior frames.
    pub min_total_marks: usize,
    pub area_low: f64,
    pub area_high: f64,
    pub ratio_low: f64,
    pub ratio_high: f64,
    /// land_dist = factor × median body length.
    pub land_dist_factor: f64,
    /// θ₁ = factor × median body length; θ₂ = θ₁.
    pub theta1_factor: f64,
    pub theta3: usize,
    pub motion_sigma_factor: f64,
}

impl Default for MarkingConfig {
    fn default() -> Self {
        MarkingConfig {
            min_total_marks: 30,
            area_low: 0.5,
            area_high: 2.0,
            ratio_low: 0.5,
            ratio_high: 2.0,
            land_dist_factor: 0.5,
            theta1_factor: 0.5,
            theta3: 2,
            motion_sigma_factor: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForegroundConfig {
    pub background_samples: usize,
    pub weight_correct: f64,
    pub weight_over: f64,
    pub weight_under: f64,
    pub weight_incorrect: f64,
    pub pso: PsoConfig,
}

impl Default for ForegroundConfig {
    fn default() -> Self {
        ForegroundConfig {
            background_samples: 25,
            weight_correct: 1.0,
            weight_over: 0.5,
            weight_under: 1.0,
            weight_incorrect: 1.0,
            pso: PsoConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub max_majority_reps: f64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        PsoConfig {
            particles: 30,
            iterations: 50,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            max_majority_reps: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    /// Mean mark area (px²) below which the classifier is bypassed.
    pub small_target_area: f64,
    pub svm_c: f64,
    pub svm_epochs: usize,
    pub min_examples: usize,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            small_target_area: 50.0,
            svm_c: 1.0,
            svm_epochs: 300,
            min_examples: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackletConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub min_states: usize,
    /// Cap on positive training states (subsampled, seeded).
    pub max_training_states: usize,
    pub negative_offset: (f64, f64),
    pub negative_angle_deg: (f64, f64),
    pub confidence_cutoff: f64,
}

impl Default for TrackletConfig {
    fn default() -> Self {
        TrackletConfig {
            trees: 100,
            max_depth: 12,
            min_states: 50,
            max_training_states: 1500,
            negative_offset: (0.5, 1.5),
            negative_angle_deg: (30.0, 90.0),
            confidence_cutoff: 0.5,
        }
    }
}

/// How the final GA configuration is averaged over the population.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationMean {
    /// Members weighted by `1 - W`, W the normalised target fitness.
    Complement,
    /// Members weighted by `W`.
    Fitness,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchingConfig {
    pub population: usize,
    pub omega_cycles: usize,
    pub crossover_prob: f64,
    pub elitism: usize,
    pub templates: usize,
    pub delta_samples_per_tracklet: usize,
    pub iterations: usize,
    pub population_mean: PopulationMean,
    /// The constant added to Ω in the pruning rule.
    pub prune_slack: usize,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        MatchingConfig {
            population: 50,
            omega_cycles: 20,
            crossover_prob: 0.7,
            elitism: 1,
            templates: 3,
            delta_samples_per_tracklet: 10,
            iterations: 3,
            population_mean: PopulationMean::Complement,
            prune_slack: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkingConfig {
    pub ideal_len: usize,
    pub min_len: usize,
    pub trigger: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        ChunkingConfig {
            ideal_len: 5000,
            min_len: 300,
            trigger: 7000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrectionConfig {
    pub lookback: usize,
    pub keyframe_step: usize,
    pub lookahead_keyframes: usize,
    pub requeue_keyframes: usize,
    pub connection_window: usize,
    pub threshold_start: f64,
    pub threshold_step: f64,
    pub base_particles: usize,
    pub attempts: u32,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        CorrectionConfig {
            lookback: 45,
            keyframe_step: 15,
            lookahead_keyframes: 3,
            requeue_keyframes: 3,
            connection_window: 15,
            threshold_start: 0.6,
            threshold_step: 0.1,
            base_particles: 200,
            attempts: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    /// Frames within which a switched identity must return (IdInteg).
    pub id_return_window: usize,
    pub annotation_seconds: f64,
    pub switch_seconds: f64,
    pub fps: f64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            id_return_window: 30,
            annotation_seconds: 1.5,
            switch_seconds: 2.0,
            fps: 30.0,
        }
    }
}
