use rand::Rng;

use super::FactorizationError;

/// Argmax over available entries; ties go to the lowest index.
pub fn greedy_action(q: &[f64], avail: &[bool]) -> Result<usize, FactorizationError> {
    if q.len() != avail.len() {
        return Err(FactorizationError::Dimension {
            what: "availability mask",
            expected: q.len(),
            actual: avail.len(),
        });
    }
    let mut best: Option<usize> = None;
    for (i, (&v, &ok)) in q.iter().zip(avail).enumerate() {
        if ok && best.is_none_or(|b| v > q[b]) {
            best = Some(i);
        }
    }
    best.ok_or(FactorizationError::NoAvailableAction)
}

/// With probability `epsilon` a uniform choice among available actions,
/// otherwise [`greedy_action`].
pub fn epsilon_greedy<R: Rng + ?Sized>(
    q: &[f64],
    avail: &[bool],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize, FactorizationError> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(FactorizationError::InvalidParameter(format!(
            "epsilon {epsilon} outside [0, 1]"
        )));
    }
    let greedy = greedy_action(q, avail)?;
    if rng.random::<f64>() < epsilon {
        let choices: Vec<usize> = avail
            .iter()
            .enumerate()
            .filter_map(|(i, &ok)| ok.then_some(i))
            .collect();
        Ok(choices[rng.random_range(0..choices.len())])
    } else {
        Ok(greedy)
    }
}

/// Linear decay from `start` to `end` over `decay_steps` environment steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.05,
            decay_steps: 50_000,
        }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, env_step: u64) -> f64 {
        if env_step >= self.decay_steps {
            self.end
        } else {
            self.start - (self.start - self.end) * env_step as f64 / self.decay_steps as f64
        }
    }
}
