//! Periodic extra-insertion defense: known probe bits are interleaved with
//! the data bits at fixed slots of every period, and the flip probabilities
//! are estimated by the sample frequencies of the received probes.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::plant::FlipProbabilities;

/// What to insert after the data bit of step `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbePlan {
    None,
    SendZero,
    SendOne,
}

impl ProbePlan {
    pub fn bit(self) -> Option<bool> {
        match self {
            ProbePlan::None => None,
            ProbePlan::SendZero => Some(false),
            ProbePlan::SendOne => Some(true),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InsertionSchedule {
    period: u64,
    slots_zero: BTreeSet<u64>,
    slots_one: BTreeSet<u64>,
}

impl InsertionSchedule {
    /// Slots are 1-based positions inside a period of length `period`.
    pub fn new(
        period: u64,
        slots_zero: impl IntoIterator<Item = u64>,
        slots_one: impl IntoIterator<Item = u64>,
    ) -> Result<Self> {
        if period == 0 {
            return Err(Error::invalid("defense.T", "must be positive"));
        }
        let slots_zero: BTreeSet<u64> = slots_zero.into_iter().collect();
        let slots_one: BTreeSet<u64> = slots_one.into_iter().collect();
        if slots_zero.is_empty() {
            return Err(Error::invalid("defense.slots_zero", "must not be empty"));
        }
        if slots_one.is_empty() {
            return Err(Error::invalid("defense.slots_one", "must not be empty"));
        }
        for (key, set) in [("defense.slots_zero", &slots_zero), ("defense.slots_one", &slots_one)] {
            if set.iter().any(|&s| s == 0 || s > period) {
                return Err(Error::invalid(key, format!("slots must lie in 1..={period}")));
            }
        }
        if !slots_zero.is_disjoint(&slots_one) {
            return Err(Error::invalid(
                "defense.slots_one",
                "must be disjoint from defense.slots_zero",
            ));
        }
        Ok(InsertionSchedule {
            period,
            slots_zero,
            slots_one,
        })
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn slots_zero(&self) -> &BTreeSet<u64> {
        &self.slots_zero
    }

    pub fn slots_one(&self) -> &BTreeSet<u64> {
        &self.slots_one
    }

    pub fn probe_plan(&self, k: u64) -> ProbePlan {
        if k == 0 {
            return ProbePlan::None;
        }
        let slot = (k - 1) % self.period + 1;
        if self.slots_zero.contains(&slot) {
            ProbePlan::SendZero
        } else if self.slots_one.contains(&slot) {
            ProbePlan::SendOne
        } else {
            ProbePlan::None
        }
    }
}

/// Running probe counts and the resulting estimates `(p_hat, q_hat)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DefenseState {
    count_zero: u64,
    sum_zero_received: u64,
    count_one: u64,
    sum_one_flipped: u64,
    warmup_probes: u64,
}

impl Default for DefenseState {
    fn default() -> Self {
        Self::new(1)
    }
}

impl DefenseState {
    /// `warmup_probes` is the number of probes of each kind after which the
    /// estimates are considered usable (see [`DefenseState::is_warmed_up`]).
    pub fn new(warmup_probes: u64) -> Self {
        DefenseState {
            count_zero: 0,
            sum_zero_received: 0,
            count_one: 0,
            sum_one_flipped: 0,
            warmup_probes: warmup_probes.max(1),
        }
    }

    pub fn ingest_probe(&mut self, sent: bool, received: bool) {
        if sent {
            self.count_one += 1;
            if !received {
                self.sum_one_flipped += 1;
            }
        } else {
            self.count_zero += 1;
            if received {
                self.sum_zero_received += 1;
            }
        }
    }

    pub fn zero_probes(&self) -> u64 {
        self.count_zero
    }

    pub fn one_probes(&self) -> u64 {
        self.count_one
    }

    /// Fraction of one-probes received as 0; zero before the first probe.
    pub fn p_hat(&self) -> f64 {
        if self.count_one == 0 {
            0.0
        } else {
            self.sum_one_flipped as f64 / self.count_one as f64
        }
    }

    /// Fraction of zero-probes received as 1; zero before the first probe.
    pub fn q_hat(&self) -> f64 {
        if self.count_zero == 0 {
            0.0
        } else {
            self.sum_zero_received as f64 / self.count_zero as f64
        }
    }

    pub fn estimates(&self) -> FlipProbabilities {
        FlipProbabilities {
            p: self.p_hat(),
            q: self.q_hat(),
        }
    }

    pub fn is_warmed_up(&self) -> bool {
        self.count_zero >= self.warmup_probes && self.count_one >= self.warmup_probes
    }
}

/// `sqrt(ln ln k / k)`, the iterated-logarithm rate of a sample frequency.
pub fn lil_envelope(k: f64) -> Result<f64> {
    if !(k >= 3.0) {
        return Err(Error::invalid("k", "iterated-logarithm envelope needs k >= 3"));
    }
    Ok((k.ln().ln() / k).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::TamperChannel;
    use crate::rng::{stream_rng, Stream};

    fn example_schedule() -> InsertionSchedule {
        InsertionSchedule::new(20, [1, 3, 5, 7, 9], [2, 4, 6, 8, 10]).unwrap()
    }

    #[test]
    fn plan_wraps_period() {
        let s = example_schedule();
        assert_eq!(s.probe_plan(21), ProbePlan::SendZero);
        assert_eq!(s.probe_plan(44), ProbePlan::SendOne);
        assert_eq!(s.probe_plan(15), ProbePlan::None);
        assert_eq!(s.probe_plan(1), ProbePlan::SendZero);
        assert_eq!(s.probe_plan(20), ProbePlan::None);
        let per_period = (1..=20).filter(|&k| s.probe_plan(k) != ProbePlan::None).count();
        assert_eq!(per_period, 10);
    }

    #[test]
    fn schedule_validation() {
        assert!(InsertionSchedule::new(0, [1], [2]).is_err());
        assert!(InsertionSchedule::new(10, [], [2]).is_err());
        assert!(InsertionSchedule::new(10, [1], []).is_err());
        assert!(InsertionSchedule::new(10, [1, 2], [2]).is_err());
        assert!(InsertionSchedule::new(10, [11], [2]).is_err());
        assert!(InsertionSchedule::new(10, [0], [2]).is_err());
    }

    #[test]
    fn estimates_are_sample_frequencies() {
        let mut d = DefenseState::default();
        assert_eq!(d.estimates(), FlipProbabilities::NONE);
        d.ingest_probe(false, false);
        assert_eq!(d.q_hat(), 0.0);
        for i in 0..10 {
            d.ingest_probe(true, i >= 3);
        }
        assert!((d.p_hat() - 0.3).abs() < 1e-15);
        assert!(d.is_warmed_up());
    }

    #[test]
    fn warm_up_needs_both_kinds() {
        let mut d = DefenseState::new(3);
        for _ in 0..5 {
            d.ingest_probe(false, false);
        }
        assert!(!d.is_warmed_up());
        for _ in 0..3 {
            d.ingest_probe(true, true);
        }
        assert!(d.is_warmed_up());
    }

    #[test]
    fn estimates_converge_through_channel() {
        let flips = FlipProbabilities::new(0.2, 0.3).unwrap();
        let mut ch = TamperChannel::new(flips, stream_rng(99, Stream::Channel)).unwrap();
        let mut d = DefenseState::default();
        for _ in 0..100_000 {
            let r0 = ch.tamper(false);
            d.ingest_probe(false, r0);
            let r1 = ch.tamper(true);
            d.ingest_probe(true, r1);
        }
        assert!((d.p_hat() - 0.2).abs() < 0.01);
        assert!((d.q_hat() - 0.3).abs() < 0.01);
    }

    #[test]
    fn lil_values() {
        let want16 = (16f64.ln().ln() / 16.0).sqrt();
        assert_eq!(lil_envelope(16.0).unwrap(), want16);
        assert!((lil_envelope(1e5).unwrap() - 4.943_147_132_831_528e-3).abs() < 1e-15);
        assert!(lil_envelope(2.0).is_err());
        let mut prev = lil_envelope(10.0).unwrap();
        for k in 11..5000 {
            let v = lil_envelope(k as f64).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }
}
