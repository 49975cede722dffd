//! Run metrics and their accumulation.

use crate::v2x::ChannelStats;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct MessageStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    /// Mean broadcast-to-delivery delay over delivered messages, s.
    pub mean_delay: f64,
}

impl From<ChannelStats> for MessageStats {
    fn from(s: ChannelStats) -> Self {
        MessageStats {
            sent: s.sent,
            delivered: s.delivered,
            dropped: s.dropped,
            mean_delay: s.mean_delay,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossTrackError {
    pub straight_mean: f64,
    pub curve_mean: f64,
}

/// Summary of one simulation run.
#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub completed_routes: u64,
    /// Per completed route, seconds.
    pub travel_times: Vec<f64>,
    /// Routes per minute: completed_routes / (duration / 60).
    pub throughput: f64,
    /// Global minimum pairwise center distance over the trace; null for
    /// single-car runs.
    pub min_separation: Option<f64>,
    /// Count of (tick, pair) samples closer than d_safe.
    pub separation_violations: u64,
    pub deadlock_events: u64,
    pub mean_speed: f64,
    pub message_stats: MessageStats,
    pub cross_track_error: CrossTrackError,
}

/// Streaming accumulator the engine feeds every tick.
#[derive(Debug, Default)]
pub struct MetricsAccumulator {
    pub completed_routes: u64,
    pub travel_times: Vec<f64>,
    pub min_separation: f64,
    pub has_pairs: bool,
    pub separation_violations: u64,
    pub deadlock_events: u64,
    speed_sum: f64,
    speed_samples: u64,
    straight_abs_d: f64,
    straight_samples: u64,
    curve_abs_d: f64,
    curve_samples: u64,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        MetricsAccumulator {
            min_separation: f64::INFINITY,
            ..Default::default()
        }
    }

    pub fn speed_sample(&mut self, v: f64) {
        self.speed_sum += v;
        self.speed_samples += 1;
    }

    pub fn cross_track_sample(&mut self, abs_d: f64, on_curve: bool) {
        if on_curve {
            self.curve_abs_d += abs_d;
            self.curve_samples += 1;
        } else {
            self.straight_abs_d += abs_d;
            self.straight_samples += 1;
        }
    }

    pub fn separation_sample(&mut self, distance: f64) {
        self.has_pairs = true;
        self.min_separation = self.min_separation.min(distance);
    }

    pub fn finish(self, duration: f64, channel: ChannelStats) -> Metrics {
        let mean = |sum: f64, n: u64| if n == 0 { 0.0 } else { sum / n as f64 };
        Metrics {
            completed_routes: self.completed_routes,
            throughput: self.completed_routes as f64 / (duration / 60.0),
            travel_times: self.travel_times,
            min_separation: self.has_pairs.then_some(self.min_separation),
            separation_violations: self.separation_violations,
            deadlock_events: self.deadlock_events,
            mean_speed: mean(self.speed_sum, self.speed_samples),
            message_stats: channel.into(),
            cross_track_error: CrossTrackError {
                straight_mean: mean(self.straight_abs_d, self.straight_samples),
                curve_mean: mean(self.curve_abs_d, self.curve_samples),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn throughput_identity() {
        let mut acc = MetricsAccumulator::new();
        acc.completed_routes = 7;
        let m = acc.finish(300.0, ChannelStats::default());
        assert!((m.throughput - 7.0 / 5.0).abs() < 1e-9);
    }

    #[test]
    fn single_car_has_no_min_separation() {
        let acc = MetricsAccumulator::new();
        let m = acc.finish(60.0, ChannelStats::default());
        assert!(m.min_separation.is_none());
    }
}
