use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geom::{dist2, reflect, Vec2};
use crate::noise::SimRng;

/// Persistent-heading random walk: each tick the heading is kept with
/// probability `persistence`, otherwise turned by `turn_noise * N(0, 1)`;
/// the step adds isotropic positional jitter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MoverParams {
    pub speed: f64,
    pub persistence: f64,
    pub turn_noise: f64,
    pub jitter: f64,
}

impl Default for MoverParams {
    fn default() -> Self {
        Self { speed: 1.5, persistence: 0.85, turn_noise: 0.5, jitter: 0.1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mover {
    pub pos: Vec2,
    pub heading: f64,
}

impl Mover {
    /// One step, reflecting off the walls of `[0, side]^2`. Draws exactly
    /// four variates so the stream layout does not depend on the outcome.
    pub fn step(&mut self, p: &MoverParams, side: f64, rng: &mut SimRng) {
        let u: f64 = rng.random();
        let z: f64 = rng.sample(StandardNormal);
        let jx: f64 = rng.sample(StandardNormal);
        let jy: f64 = rng.sample(StandardNormal);
        if u >= p.persistence {
            self.heading += p.turn_noise * z;
        }
        let (s, c) = self.heading.sin_cos();
        let (x, fx) = reflect(self.pos[0] + p.speed * c + p.jitter * jx, side);
        let (y, fy) = reflect(self.pos[1] + p.speed * s + p.jitter * jy, side);
        if fx {
            self.heading = PI - self.heading;
        }
        if fy {
            self.heading = -self.heading;
        }
        self.pos = [x, y];
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub side: f64,
    /// Live monsters in admission order with their ids.
    pub monsters: Vec<(u64, Mover)>,
    pub players: Vec<Mover>,
    /// First tick at which each player may eliminate again.
    pub ready_at: Vec<u64>,
}

impl World {
    pub fn positions(&self) -> Vec<Vec2> {
        self.monsters.iter().map(|(_, m)| m.pos).collect()
    }

    pub fn player_positions(&self) -> Vec<Vec2> {
        self.players.iter().map(|m| m.pos).collect()
    }

    /// Monsters first in id order, then players.
    pub fn step(&mut self, monster: &MoverParams, player: &MoverParams, rng: &mut SimRng) {
        for (_, m) in &mut self.monsters {
            m.step(monster, self.side, rng);
        }
        for p in &mut self.players {
            p.step(player, self.side, rng);
        }
    }

    /// Removes every monster within `radius` of a ready player, returning
    /// `(id, position, player)` in player order, then monster order. A player
    /// that removed anything rests for `cooldown` ticks.
    pub fn eliminate(&mut self, radius: f64, t: u64, cooldown: u64) -> Vec<(u64, Vec2, usize)> {
        let r2 = radius * radius;
        let mut out = Vec::new();
        for (k, p) in self.players.iter().enumerate() {
            if self.ready_at[k] > t {
                continue;
            }
            let before = out.len();
            self.monsters.retain(|(id, m)| {
                let hit = dist2(m.pos, p.pos) <= r2;
                if hit {
                    out.push((*id, m.pos, k));
                }
                !hit
            });
            if out.len() > before {
                self.ready_at[k] = t + cooldown;
            }
        }
        out
    }

    pub fn in_bounds(&self) -> bool {
        let ok = |p: Vec2| (0.0..=self.side).contains(&p[0]) && (0.0..=self.side).contains(&p[1]);
        self.monsters.iter().all(|(_, m)| ok(m.pos)) && self.players.iter().all(|m| ok(m.pos))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::rng_from_seed;

    #[test]
    fn straight_line_until_the_wall() {
        let p = MoverParams { speed: 1.0, persistence: 1.0, turn_noise: 0.0, jitter: 0.0 };
        let mut m = Mover { pos: [50.0, 50.0], heading: 0.0 };
        let mut rng = rng_from_seed(1);
        for k in 1..=49 {
            m.step(&p, 100.0, &mut rng);
            assert!((m.pos[0] - (50.0 + k as f64)).abs() < 1e-9 && m.pos[1] == 50.0);
        }
        m.step(&p, 100.0, &mut rng);
        m.step(&p, 100.0, &mut rng);
        // Reflected at x = 100 and now heading back.
        assert!((m.pos[0] - 99.0).abs() < 1e-9);
        assert!(m.heading.cos() < 0.0);
    }

    #[test]
    fn walkers_stay_inside() {
        let p = MoverParams { speed: 3.0, ..MoverParams::default() };
        let mut rng = rng_from_seed(2);
        let mut m = Mover { pos: [1.0, 1.0], heading: 2.0 };
        for _ in 0..10_000 {
            m.step(&p, 10.0, &mut rng);
            assert!((0.0..=10.0).contains(&m.pos[0]) && (0.0..=10.0).contains(&m.pos[1]));
        }
    }

    #[test]
    fn co_located_monsters_are_all_removed() {
        let mover = |x: f64| Mover { pos: [x, 5.0], heading: 0.0 };
        let mut w = World {
            side: 10.0,
            monsters: vec![(0, mover(5.0)), (1, mover(5.5)), (2, mover(6.0)), (3, mover(9.0))],
            players: vec![mover(5.2)],
            ready_at: vec![0],
        };
        let gone = w.eliminate(1.75, 0, 0);
        assert_eq!(gone.iter().map(|g| g.0).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(w.monsters.len(), 1);
    }

    #[test]
    fn resting_players_do_not_eliminate() {
        let mover = |x: f64| Mover { pos: [x, 5.0], heading: 0.0 };
        let mut w = World { side: 10.0, monsters: vec![(0, mover(5.0))], players: vec![mover(5.0)], ready_at: vec![0] };
        assert_eq!(w.eliminate(1.0, 10, 90).len(), 1);
        w.monsters.push((1, mover(5.0)));
        assert!(w.eliminate(1.0, 99, 90).is_empty());
        assert_eq!(w.eliminate(1.0, 100, 90).len(), 1);
    }
}
