//! Pipeline configuration: every threshold in one flat, typed table.
//!
//! Keys carry their unit as a suffix. A config file is plain `key = value`
//! lines with `#` comments; any key can also be set from the command line.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::clustering::DbscanParams;
use crate::geo::{Degrees, Knots, Meters, Seconds};
use crate::ports::{ConsolidationConfig, DetectionConfig};
use crate::regression::ClampRanges;
use crate::routes::{default_d_complete, ExtractionParams};
use crate::segmentation::SegmentationConfig;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
    #[error("line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("{0}")]
    Invalid(String),
}

macro_rules! pipeline_config {
    ($( $(#[$doc:meta])* $name:ident : $ty:ty = $default:expr; )*) => {
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        pub struct PipelineConfig {
            $( $(#[$doc])* pub $name: $ty, )*
        }

        impl Default for PipelineConfig {
            fn default() -> Self {
                PipelineConfig { $( $name: $default, )* }
            }
        }

        impl PipelineConfig {
            pub const KEYS: &'static [&'static str] = &[ $( stringify!($name), )* ];

            /// Set one key from its textual value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
                let bad = || ConfigError::BadValue { key: key.to_string(), value: value.to_string() };
                match key {
                    $( stringify!($name) => self.$name = value.trim().parse().map_err(|_| bad())?, )*
                    _ => return Err(ConfigError::UnknownKey(key.to_string())),
                }
                Ok(())
            }

            pub fn get(&self, key: &str) -> Option<String> {
                match key {
                    $( stringify!($name) => Some(self.$name.to_string()), )*
                    _ => None,
                }
            }
        }
    };
}

pipeline_config! {
    min_speed_departure_kn: Knots = 2.0;
    v_stop_kn: Knots = 0.5;
    t_lost_s: Seconds = 6 * 3600;
    window_s: Seconds = 600;
    min_window_fixes: usize = 3;
    heading_change_min_deg: Degrees = 60.0;
    dwell_min_s: Seconds = 1800;
    d_port_slack_m: Meters = 1000.0;
    eps_port_m: Meters = 1500.0;
    min_samples_port: usize = 3;
    label_match_dist_m: Meters = 3000.0;
    reference_radius_m: Meters = 1000.0;
    speed_jump_kn: Knots = 60.0;
    min_segment_points: usize = 10;
    min_segment_distance_m: Meters = 5000.0;
    t_merge_max_s: Seconds = 48 * 3600;
    min_group_routes: usize = 3;
    /// Extraction parameters used when no fitted model is present.
    route_eps_m: Meters = 3000.0;
    route_min_samples: usize = 3;
    route_r_m: Meters = 6000.0;
    expansion_factor: f64 = 1.5;
    max_expansions: usize = 3;
    max_iterations: usize = 10_000;
    eps_min_m: Meters = 100.0;
    eps_max_m: Meters = 20_000.0;
    min_samples_min: usize = 2;
    min_samples_max: usize = 20;
    r_min_m: Meters = 500.0;
    r_max_m: Meters = 50_000.0;
    /// Worker threads; 0 lets the runtime choose.
    workers: usize = 0;
}

impl PipelineConfig {
    /// Apply a flat `key = value` text.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Render as a config file that reads back to the same values.
    pub fn to_text(&self) -> String {
        Self::KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.get(k).unwrap_or_default()))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive: [(&str, f64); 27] = [
            ("min_speed_departure_kn", self.min_speed_departure_kn),
            ("v_stop_kn", self.v_stop_kn),
            ("t_lost_s", self.t_lost_s as f64),
            ("window_s", self.window_s as f64),
            ("min_window_fixes", self.min_window_fixes as f64),
            ("heading_change_min_deg", self.heading_change_min_deg),
            ("dwell_min_s", self.dwell_min_s as f64),
            ("d_port_slack_m", self.d_port_slack_m),
            ("eps_port_m", self.eps_port_m),
            ("min_samples_port", self.min_samples_port as f64),
            ("label_match_dist_m", self.label_match_dist_m),
            ("reference_radius_m", self.reference_radius_m),
            ("speed_jump_kn", self.speed_jump_kn),
            ("min_segment_points", self.min_segment_points as f64),
            ("min_segment_distance_m", self.min_segment_distance_m),
            ("t_merge_max_s", self.t_merge_max_s as f64),
            ("min_group_routes", self.min_group_routes as f64),
            ("route_eps_m", self.route_eps_m),
            ("route_min_samples", self.route_min_samples as f64),
            ("route_r_m", self.route_r_m),
            ("expansion_factor", self.expansion_factor),
            ("max_iterations", self.max_iterations as f64),
            ("eps_min_m", self.eps_min_m),
            ("min_samples_min", self.min_samples_min as f64),
            ("r_min_m", self.r_min_m),
            ("eps_max_m", self.eps_max_m),
            ("r_max_m", self.r_max_m),
        ];
        for (k, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::Invalid(format!("{k} must be positive")));
            }
        }
        if self.expansion_factor < 1.0 {
            return Err(ConfigError::Invalid("expansion_factor must be at least 1".into()));
        }
        if self.route_r_m < self.route_eps_m {
            return Err(ConfigError::Invalid("route_r_m must not be below route_eps_m".into()));
        }
        if self.eps_min_m > self.eps_max_m || self.r_min_m > self.r_max_m || self.min_samples_min > self.min_samples_max {
            return Err(ConfigError::Invalid("clamp range minimum exceeds maximum".into()));
        }
        Ok(())
    }

    pub fn detection(&self) -> DetectionConfig {
        DetectionConfig {
            min_speed_departure: self.min_speed_departure_kn,
            window: self.window_s,
            min_window_fixes: self.min_window_fixes,
            heading_change_min: self.heading_change_min_deg,
            dwell_min: self.dwell_min_s,
        }
    }

    pub fn consolidation(&self) -> ConsolidationConfig {
        ConsolidationConfig {
            dbscan: DbscanParams {
                eps: self.eps_port_m,
                min_samples: self.min_samples_port,
            },
            label_match_dist: self.label_match_dist_m,
            reference_radius: self.reference_radius_m,
        }
    }

    pub fn segmentation(&self) -> SegmentationConfig {
        SegmentationConfig {
            min_speed_departure: self.min_speed_departure_kn,
            v_stop: self.v_stop_kn,
            t_lost: self.t_lost_s,
            window: self.window_s,
            d_port_slack: self.d_port_slack_m,
            min_segment_points: self.min_segment_points,
            min_segment_distance: self.min_segment_distance_m,
            t_merge_max: self.t_merge_max_s,
        }
    }

    pub fn clamp_ranges(&self) -> ClampRanges {
        ClampRanges {
            eps: (self.eps_min_m, self.eps_max_m),
            min_samples: (self.min_samples_min, self.min_samples_max),
            r: (self.r_min_m, self.r_max_m),
        }
    }

    /// Apply the expansion policy of this config to `(eps, min_samples, r)`.
    pub fn extraction(&self, eps: Meters, min_samples: usize, r: Meters) -> ExtractionParams {
        ExtractionParams {
            eps,
            min_samples,
            r,
            expansion_factor: self.expansion_factor,
            max_expansions: self.max_expansions,
            d_complete: default_d_complete(r),
            max_iterations: self.max_iterations,
        }
    }

    pub fn default_extraction(&self) -> ExtractionParams {
        self.extraction(self.route_eps_m, self.route_min_samples, self.route_r_m)
    }
}
