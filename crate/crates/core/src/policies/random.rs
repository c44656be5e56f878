use rand::Rng as _;

use super::{DecisionContext, Policy, PolicyError};
use crate::agents::Action;
use crate::tasks::Task;
use crate::{rng_from_seed, Rng};

/// Uniform over the three movement primitives, with a rare Stop.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    pub stop_probability: f64,
    rng: Rng,
}

impl Default for RandomPolicy {
    fn default() -> Self {
        RandomPolicy {
            stop_probability: 0.002,
            rng: rng_from_seed(0),
        }
    }
}

impl RandomPolicy {
    pub fn next_action(&mut self) -> Action {
        if self.rng.random::<f64>() < self.stop_probability {
            return Action::Stop;
        }
        match self.rng.random_range(0..3u8) {
            0 => Action::MoveForward,
            1 => Action::TurnLeft,
            _ => Action::TurnRight,
        }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn reset(&mut self, _task: &Task, _agent: usize, seed: u64) {
        self.rng = rng_from_seed(seed);
    }

    fn decide(&mut self, _ctx: &DecisionContext<'_>) -> Result<Action, PolicyError> {
        Ok(self.next_action())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn task() -> Task {
        Task {
            id: "t".into(),
            scene_id: "s".into(),
            benchmark: crate::tasks::Benchmark::B3,
            instruction: crate::tasks::EXPLORE_INSTRUCTION.into(),
            goal: Default::default(),
            start: Vec::new(),
            shortest_path_m: 0.0,
            solvable: true,
            seed: 0,
        }
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RandomPolicy::default();
        let mut b = RandomPolicy::default();
        a.reset(&task(), 0, 42);
        b.reset(&task(), 0, 42);
        let xs: Vec<Action> = (0..200).map(|_| a.next_action()).collect();
        let ys: Vec<Action> = (0..200).map(|_| b.next_action()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn movement_primitives_are_uniform() {
        let mut p = RandomPolicy {
            stop_probability: 0.0,
            ..Default::default()
        };
        p.reset(&task(), 0, 7);
        let n = 10_000;
        let mut counts = [0u32; 3];
        for _ in 0..n {
            match p.next_action() {
                Action::MoveForward => counts[0] += 1,
                Action::TurnLeft => counts[1] += 1,
                Action::TurnRight => counts[2] += 1,
                a => panic!("unexpected {a:?}"),
            }
        }
        // Chi-square with 2 degrees of freedom; 13.8 is the 0.001 quantile.
        let e = n as f64 / 3.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - e) * (c as f64 - e) / e)
            .sum();
        assert!(chi2 < 13.8, "{counts:?} chi2 {chi2}");
        let sigma = libm::sqrt(n as f64 * (1.0 / 3.0) * (2.0 / 3.0));
        for c in counts {
            assert!(libm::fabs(c as f64 - e) <= 3.0 * sigma, "{counts:?}");
        }
    }
}
