//! Rolling speed estimation over a trailing time window.

use std::collections::VecDeque;

use crate::geo::{haversine_distance, Knots, Seconds, METERS_PER_NM};
use crate::ingest::AisRecord;

/// Speed of `rec`: reported SOG when present, otherwise implied by the
/// displacement from `prev`.
pub fn record_speed(prev: Option<&AisRecord>, rec: &AisRecord) -> Option<Knots> {
    rec.sog.or_else(|| {
        let prev = prev?;
        let dt = (rec.ts - prev.ts) as f64;
        (dt > 0.0).then(|| haversine_distance(prev.pos, rec.pos) / dt * 3600.0 / METERS_PER_NM)
    })
}

/// Trailing-window average of per-fix speeds. Fixes older than `window`
/// seconds before the newest one are evicted.
#[derive(Debug, Clone)]
pub struct RollingSpeed {
    window: Seconds,
    fixes: VecDeque<(Seconds, Option<Knots>)>,
}

impl RollingSpeed {
    pub fn new(window: Seconds) -> Self {
        RollingSpeed {
            window,
            fixes: VecDeque::new(),
        }
    }

    pub fn push(&mut self, ts: Seconds, speed: Option<Knots>) {
        self.fixes.push_back((ts, speed));
        while let Some(&(t, _)) = self.fixes.front() {
            if t < ts - self.window {
                self.fixes.pop_front();
            } else {
                break;
            }
        }
    }

    pub fn clear(&mut self) {
        self.fixes.clear();
    }

    /// Number of fixes currently inside the window.
    pub fn len(&self) -> usize {
        self.fixes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixes.is_empty()
    }

    /// Mean of the known speeds in the window.
    pub fn mean(&self) -> Option<Knots> {
        let (sum, n) = self
            .fixes
            .iter()
            .filter_map(|(_, s)| *s)
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        (n > 0).then(|| sum / n as f64)
    }
}
