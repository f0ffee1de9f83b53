//! The four-pulse gradient profile F(t).
//!
//! F(t) is +1 during the splitting pulse, 0 during the first delay, -1 during
//! the back-to-back stopping and reversing pulses, 0 during the second delay
//! and +1 during the recombining pulse. Magnitudes live in
//! [`FieldModel`](crate::config::FieldModel); this module only deals with
//! timing and signs.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative deviation of `t4` from `t1` above which a timing is flagged.
pub const T4_WARNING_FRACTION: f64 = 0.10;

/// Durations of the four gradient pulses and the two delays, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseTiming {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    pub td1: f64,
    pub td2: f64,
}

/// One constant-force interval of the profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceSegment {
    pub start: f64,
    pub end: f64,
    /// Sign of F(t) on this interval: -1, 0 or +1.
    pub polarity: i8,
    /// 1-based gradient pulse number, `None` for the delays.
    pub pulse: Option<u8>,
}

impl ForceSegment {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

impl PulseTiming {
    pub fn new(t1: f64, t2: f64, t3: f64, t4: f64, td1: f64, td2: f64) -> Result<Self> {
        let timing = Self { t1, t2, t3, t4, td1, td2 };
        timing.check()?;
        Ok(timing)
    }

    /// Ideal sequence: all pulses `t1` long, both delays `td`.
    pub fn build_ideal(t1: f64, td: f64) -> Result<Self> {
        Self::new(t1, t1, t1, t1, td, td)
    }

    /// Ideal sequence with a different recombining pulse length.
    pub fn with_t4(self, t4: f64) -> Result<Self> {
        Self::new(self.t1, self.t2, self.t3, t4, self.td1, self.td2)
    }

    pub fn check(&self) -> Result<()> {
        let fields = [
            ("t1", self.t1),
            ("t2", self.t2),
            ("t3", self.t3),
            ("t4", self.t4),
            ("td1", self.td1),
            ("td2", self.td2),
        ];
        for (name, value) in fields {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidTiming(format!("{name} = {value} must be finite and >= 0")));
            }
        }
        if self.t1 <= 0.0 {
            return Err(Error::InvalidTiming(format!("t1 = {} must be > 0", self.t1)));
        }
        Ok(())
    }

    /// Total sequence time T from the start of pulse 1 to the end of pulse 4.
    pub fn total_time(&self) -> f64 {
        self.t1 + self.td1 + self.t2 + self.t3 + self.td2 + self.t4
    }

    /// True when t2 = t3 = t4 = t1 and td1 = td2, the assumptions behind the
    /// closed-form phase.
    pub fn is_ideal(&self) -> bool {
        self.t2 == self.t1 && self.t3 == self.t1 && self.t4 == self.t1 && self.td1 == self.td2
    }

    /// Non-fatal remarks about the timing.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let deviation = (self.t4 - self.t1).abs() / self.t1;
        if deviation > T4_WARNING_FRACTION {
            out.push(format!(
                "t4 deviates from t1 by {:.1}% (more than {:.0}%)",
                100.0 * deviation,
                100.0 * T4_WARNING_FRACTION
            ));
        }
        out
    }

    /// Durations and polarities of the six segments in time order.
    fn layout(&self) -> [(f64, i8, Option<u8>); 6] {
        [
            (self.t1, 1, Some(1)),
            (self.td1, 0, None),
            (self.t2, -1, Some(2)),
            (self.t3, -1, Some(3)),
            (self.td2, 0, None),
            (self.t4, 1, Some(4)),
        ]
    }

    /// The six segments of F(t). Zero-length segments are kept with
    /// `start == end`.
    pub fn force_profile(&self) -> Vec<ForceSegment> {
        let mut start = 0.0;
        self.layout()
            .into_iter()
            .map(|(duration, polarity, pulse)| {
                let end = start + duration;
                let seg = ForceSegment { start, end, polarity, pulse };
                start = end;
                seg
            })
            .collect()
    }

    /// F(t) with half-open windows `[start, end)`; zero outside `[0, T)`.
    pub fn polarity_at(&self, t: f64) -> i8 {
        self.force_profile()
            .iter()
            .find(|s| !s.is_empty() && t >= s.start && t < s.end)
            .map_or(0, |s| s.polarity)
    }

    /// Momentum and position closure of the bare profile.
    ///
    /// Returns `(∫F dt / t1, ∫(T-τ)F dτ / t1²)`, both evaluated in exact
    /// rational arithmetic on the f64 durations so that the ideal sequence
    /// gives exactly zero.
    pub fn closure_defect(&self) -> (f64, f64) {
        let rational = |x: f64| BigRational::from_float(x).expect("timing is finite");
        let layout = self.layout();
        let mut momentum = BigRational::zero();
        let mut position = BigRational::zero();
        let two = BigRational::from_integer(BigInt::from(2));
        for (k, &(duration, polarity, _)) in layout.iter().enumerate() {
            if polarity == 0 {
                continue;
            }
            let d = rational(duration);
            let remaining = layout[k + 1..]
                .iter()
                .fold(BigRational::zero(), |acc, &(dur, _, _)| acc + rational(dur));
            let sign = BigRational::from_integer(BigInt::from(polarity));
            momentum += &sign * &d;
            position += &sign * &d * (remaining + &d / &two);
        }
        let t1 = rational(self.t1);
        let momentum = (momentum / &t1).to_f64().unwrap_or(f64::NAN);
        let position = (position / (&t1 * &t1)).to_f64().unwrap_or(f64::NAN);
        (momentum, position)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const US: f64 = 1e-6;

    #[test]
    fn default_operating_point_total_time() {
        let timing = PulseTiming::build_ideal(70.0 * US, 2.6 * US).unwrap();
        assert!((timing.total_time() - 285.2 * US).abs() < 1e-18);
        assert!(timing.is_ideal());
        assert!(timing.warnings().is_empty());
    }

    #[test]
    fn zero_delay_total_is_four_pulses() {
        let timing = PulseTiming::build_ideal(13.0 * US, 0.0).unwrap();
        assert_eq!(timing.total_time(), 4.0 * 13.0 * US);
    }

    #[test]
    fn rejects_non_positive_t1() {
        assert!(PulseTiming::build_ideal(0.0, 1.0).is_err());
        assert!(PulseTiming::build_ideal(-1.0, 1.0).is_err());
        assert!(PulseTiming::build_ideal(1.0, -1.0).is_err());
        assert!(PulseTiming::build_ideal(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn unit_sequence_segments() {
        let timing = PulseTiming::build_ideal(1.0, 1.0).unwrap();
        let segs = timing.force_profile();
        let polarities: Vec<i8> = segs.iter().map(|s| s.polarity).collect();
        assert_eq!(polarities, vec![1, 0, -1, -1, 0, 1]);
        let mut edges: Vec<f64> = segs.iter().map(|s| s.start).collect();
        edges.push(segs.last().unwrap().end);
        assert_eq!(edges, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn polarity_queries() {
        let (t1, td) = (70.0 * US, 2.6 * US);
        let timing = PulseTiming::build_ideal(t1, td).unwrap();
        assert_eq!(timing.polarity_at(t1 / 2.0), 1);
        assert_eq!(timing.polarity_at(t1 + td + t1), -1);
        assert_eq!(timing.polarity_at(t1 + td / 2.0), 0);
        assert_eq!(timing.polarity_at(timing.total_time() + US), 0);
        assert_eq!(timing.polarity_at(-US), 0);
    }

    #[test]
    fn zero_delay_keeps_empty_segments() {
        let timing = PulseTiming::build_ideal(1.0, 0.0).unwrap();
        let segs = timing.force_profile();
        assert_eq!(segs.len(), 6);
        assert!(segs[1].is_empty() && segs[4].is_empty());
        assert_eq!(timing.polarity_at(1.0), -1);
    }

    #[test]
    fn ideal_closure_is_exactly_zero() {
        let timing = PulseTiming::build_ideal(70.0 * US, 2.6 * US).unwrap();
        assert_eq!(timing.closure_defect(), (0.0, 0.0));
    }

    #[test]
    fn longer_fourth_pulse_breaks_momentum_closure() {
        let t1 = 70.0 * US;
        let timing = PulseTiming::build_ideal(t1, 2.6 * US).unwrap().with_t4(1.08 * t1).unwrap();
        let (dp, dz) = timing.closure_defect();
        assert!((dp - 0.08).abs() < 1e-12, "{dp}");
        assert!(dz != 0.0);
        assert!(timing.warnings().is_empty());
        let flagged = PulseTiming::build_ideal(t1, 0.0).unwrap().with_t4(1.2 * t1).unwrap();
        assert_eq!(flagged.warnings().len(), 1);
    }

    #[test]
    fn unequal_delays_break_position_closure_only() {
        let (t1, td, delta) = (20.0 * US, 3.0 * US, 0.5 * US);
        let timing = PulseTiming::new(t1, t1, t1, t1, td, td + delta).unwrap();
        let (dp, dz) = timing.closure_defect();
        assert_eq!(dp, 0.0);
        // Only the relative velocity accumulated during pulse 4's predecessor
        // matters: ∫(T-τ)F picks up -t1·δ from the stretched delay.
        assert!((dz - (-t1 * delta) / (t1 * t1)).abs() < 1e-12, "{dz}");
    }

    proptest! {
        #[test]
        fn segments_tile_total_time(
            t1 in 1e-7..1e-3f64, t2 in 0.0..1e-3f64, t3 in 0.0..1e-3f64,
            t4 in 0.0..1e-3f64, td1 in 0.0..1e-3f64, td2 in 0.0..1e-3f64,
        ) {
            let timing = PulseTiming::new(t1, t2, t3, t4, td1, td2).unwrap();
            let segs = timing.force_profile();
            let total: f64 = segs.iter().map(ForceSegment::duration).sum();
            let t = timing.total_time();
            prop_assert!((total - t).abs() <= 1e-15 * t);
            prop_assert_eq!(segs[0].start, 0.0);
            for w in segs.windows(2) {
                prop_assert_eq!(w[0].end, w[1].start);
            }
        }

        #[test]
        fn ideal_closure_vanishes(t1 in 1e-7..1e-3f64, td in 0.0..1e-3f64) {
            let timing = PulseTiming::build_ideal(t1, td).unwrap();
            prop_assert_eq!(timing.closure_defect(), (0.0, 0.0));
        }

        #[test]
        fn closure_defect_is_scale_invariant(
            t1 in 1e-6..1e-4f64, t4f in 0.9..1.1f64, td1 in 0.0..1e-5f64, td2 in 0.0..1e-5f64,
            lambda in prop::sample::select(vec![2.0, 4.0, 0.5, 1024.0]),
        ) {
            let a = PulseTiming::new(t1, t1, t1, t4f * t1, td1, td2).unwrap();
            let b = PulseTiming::new(lambda * t1, lambda * t1, lambda * t1, lambda * (t4f * t1), lambda * td1, lambda * td2).unwrap();
            // power-of-two scaling is exact in binary, so the rational result is identical
            prop_assert_eq!(a.closure_defect(), b.closure_defect());
        }
    }
}
