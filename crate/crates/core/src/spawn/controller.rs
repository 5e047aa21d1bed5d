use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::SpawnConfig;
use crate::geom::Vec2;

/// A pending replacement for an eliminated entity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ticket {
    pub site: Vec2,
    pub eliminated: u64,
    pub eligible: u64,
}

/// Tickets consumed by one admission, oldest first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Admission {
    pub tickets: Vec<Ticket>,
    pub dropped: usize,
}

/// Replenishment controller. Live entities plus queued tickets always sum to
/// the target population; only tickets past their eligibility tick count
/// towards the admissible deficit.
#[derive(Clone, Debug)]
pub struct Controller {
    pub target_pop: usize,
    pub cycle_quota: usize,
    pub cooldown_budget: usize,
    pub cycle: u64,
    pub spawned_this_cycle: usize,
    pub queue: VecDeque<Ticket>,
    pub dropped: u64,
}

impl Controller {
    pub fn new(cfg: &SpawnConfig) -> Self {
        Self {
            target_pop: cfg.target_pop,
            cycle_quota: cfg.cycle_quota,
            cooldown_budget: cfg.cooldown_budget,
            cycle: cfg.cycle,
            spawned_this_cycle: 0,
            queue: VecDeque::new(),
            dropped: 0,
        }
    }

    pub fn begin_tick(&mut self, t: u64) {
        if t % self.cycle == 0 {
            self.spawned_this_cycle = 0;
        }
    }

    pub fn eliminated(&mut self, site: Vec2, t: u64, delay: u64) {
        self.queue.push_back(Ticket { site, eliminated: t, eligible: t + delay });
    }

    /// Tickets admissible at `t`.
    pub fn deficit(&self, t: u64) -> usize {
        self.queue.iter().filter(|k| k.eligible <= t).count()
    }

    pub fn quota_remaining(&self) -> usize {
        self.cycle_quota.min(self.cooldown_budget).saturating_sub(self.spawned_this_cycle)
    }

    /// Admits the first `min(deficit, quota remaining, proposals)` proposals.
    pub fn admit(&mut self, t: u64, proposals: usize) -> Admission {
        let k = self.deficit(t).min(self.quota_remaining()).min(proposals);
        let mut tickets = Vec::with_capacity(k);
        let mut kept = VecDeque::with_capacity(self.queue.len());
        for ticket in self.queue.drain(..) {
            if tickets.len() < k && ticket.eligible <= t {
                tickets.push(ticket);
            } else {
                kept.push_back(ticket);
            }
        }
        self.queue = kept;
        self.spawned_this_cycle += k;
        let dropped = proposals - k;
        self.dropped += dropped as u64;
        Admission { tickets, dropped }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn controller(eligible: usize, quota: usize) -> Controller {
        let cfg = SpawnConfig { target_pop: 20, cycle_quota: quota, cooldown_budget: quota, ..SpawnConfig::default() };
        let mut c = Controller::new(&cfg);
        for _ in 0..eligible {
            c.eliminated([1.0, 1.0], 0, 0);
        }
        c
    }

    #[test]
    fn zero_deficit_admits_nothing() {
        let mut c = controller(0, 10);
        assert_eq!(c.admit(5, 7).tickets.len(), 0);
        assert_eq!(c.dropped, 7);
    }

    #[test]
    fn min_rule() {
        let mut c = controller(5, 10);
        c.spawned_this_cycle = 7;
        let a = c.admit(5, 10);
        assert_eq!((a.tickets.len(), a.dropped), (3, 7));
        assert_eq!(c.spawned_this_cycle, 10);
        assert_eq!(c.queue.len(), 2);
    }

    #[test]
    fn tickets_wait_for_their_delay() {
        let mut c = controller(0, 10);
        c.eliminated([2.0, 2.0], 100, 90);
        assert_eq!(c.admit(189, 3).tickets.len(), 0);
        let a = c.admit(190, 3);
        assert_eq!(a.tickets.len(), 1);
        assert_eq!(a.tickets[0].eligible, 190);
    }

    #[test]
    fn quota_resets_each_cycle() {
        let mut c = controller(30, 10);
        c.begin_tick(0);
        assert_eq!(c.admit(0, 50).tickets.len(), 10);
        c.begin_tick(1);
        assert_eq!(c.admit(1, 50).tickets.len(), 0);
        c.begin_tick(600);
        assert_eq!(c.admit(600, 50).tickets.len(), 10);
    }
}
