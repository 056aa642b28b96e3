use super::{EnvError, Environment};

/// Largest number of complete joint-action sequences the oracle will visit.
pub const ORACLE_SEQUENCE_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    /// Best undiscounted team return.
    pub value: f64,
    /// A joint-action sequence achieving it (first found in lexicographic order).
    pub actions: Vec<Vec<usize>>,
}

/// Exhaustive search over every joint-action sequence from `reset(seed)`.
///
/// Fails once more than [`ORACLE_SEQUENCE_LIMIT`] sequences have been visited.
pub fn oracle_optimal_return<E: Environment + Clone>(
    env: &E,
    seed: u64,
) -> Result<OracleSolution, EnvError> {
    let mut root = env.clone();
    root.reset(seed);
    let mut search = Search {
        visited: 0,
        best: None,
        prefix: Vec::new(),
    };
    search.explore(&root, 0.0)?;
    Ok(search.best.expect("at least one sequence"))
}

struct Search {
    visited: usize,
    best: Option<OracleSolution>,
    prefix: Vec<Vec<usize>>,
}

impl Search {
    fn explore<E: Environment + Clone>(&mut self, env: &E, ret: f64) -> Result<(), EnvError> {
        if env.is_done() {
            self.visited += 1;
            if self.visited > ORACLE_SEQUENCE_LIMIT {
                return Err(EnvError::SearchSpaceExceeded {
                    limit: ORACLE_SEQUENCE_LIMIT,
                });
            }
            if self.best.as_ref().is_none_or(|b| ret > b.value) {
                self.best = Some(OracleSolution {
                    value: ret,
                    actions: self.prefix.clone(),
                });
            }
            return Ok(());
        }
        let n = env.spec().n_agents;
        let choices: Vec<Vec<usize>> = (0..n)
            .map(|a| {
                env.available_actions(a).map(|m| {
                    m.iter()
                        .enumerate()
                        .filter_map(|(i, &ok)| ok.then_some(i))
                        .collect()
                })
            })
            .collect::<Result<_, _>>()?;
        let mut joint = vec![0usize; n];
        let mut digits = vec![0usize; n];
        loop {
            for a in 0..n {
                joint[a] = choices[a][digits[a]];
            }
            let mut child = env.clone();
            let r = child.step(&joint)?;
            self.prefix.push(joint.clone());
            let outcome = self.explore(&child, ret + r.team_reward);
            self.prefix.pop();
            outcome?;
            // advance the mixed-radix counter, last agent fastest
            let mut a = n;
            loop {
                if a == 0 {
                    return Ok(());
                }
                a -= 1;
                digits[a] += 1;
                if digits[a] < choices[a].len() {
                    break;
                }
                digits[a] = 0;
            }
        }
    }
}
