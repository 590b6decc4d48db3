use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::shapley_kernel_weight;
use crate::error::{Error, Result};
use crate::masking::Coalition;

/// A coalition with its regression weight.
///
/// For exhaustive enumeration the weight is the Shapley kernel weight. For
/// sampled coalitions the kernel is already in the sampling distribution, so
/// the weight is the number of times the coalition was drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCoalition {
    pub coalition: Coalition,
    pub weight: f64,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionSample {
    pub n_players: usize,
    pub entries: Vec<SampledCoalition>,
    /// Every non-trivial coalition appears exactly once.
    pub exhaustive: bool,
    pub seed: u64,
}

impl CoalitionSample {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn coalitions(&self) -> impl Iterator<Item = &Coalition> {
        self.entries.iter().map(|e| &e.coalition)
    }
}

/// Chooses up to `budget` distinct non-trivial coalitions.
///
/// If all `2^M - 2` fit in the budget they are enumerated in mask order.
/// Otherwise sizes are drawn in proportion to the kernel mass per size,
/// `(M-1) / (s (M-s))`, members uniformly within a size, and each draw is
/// paired with its complement. Repeated draws raise the multiplicity of an
/// existing pair. Sampling stops when `budget` distinct coalitions are held.
pub fn sample_coalitions(m: usize, budget: usize, seed: u64) -> Result<CoalitionSample> {
    if budget < 2 {
        return Err(Error::Domain(format!("coalition budget must be at least 2, got {budget}")));
    }
    if m == 0 {
        return Err(Error::Domain("cannot sample coalitions of zero features".into()));
    }
    if m < 63 && (1usize << m) - 2 <= budget {
        return Ok(enumerate_all(m, seed));
    }

    let size_mass: Vec<f64> = (1..m).map(|s| 1.0 / (s * (m - s)) as f64).collect();
    let sizes = WeightedIndex::new(&size_mass).expect("positive masses");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut entries: Vec<SampledCoalition> = Vec::with_capacity(budget);
    let mut index: HashMap<Coalition, usize> = HashMap::with_capacity(budget);
    let max_draws = budget.saturating_mul(1000).max(100_000);
    let mut draws = 0;
    while entries.len() < budget && draws < max_draws {
        draws += 1;
        let s = sizes.sample(&mut rng) + 1;
        let members = rand::seq::index::sample(&mut rng, m, s);
        let z = Coalition::from_indices(m, members.iter());
        let pair = [z.complement(), z];
        if let Some(&k) = index.get(&pair[1]) {
            entries[k].count += 1;
            entries[k].weight += 1.0;
            if let Some(&k2) = index.get(&pair[0]) {
                entries[k2].count += 1;
                entries[k2].weight += 1.0;
            }
            continue;
        }
        let [comp, z] = pair;
        index.insert(z.clone(), entries.len());
        entries.push(SampledCoalition {
            coalition: z,
            weight: 1.0,
            count: 1,
        });
        if entries.len() < budget {
            index.insert(comp.clone(), entries.len());
            entries.push(SampledCoalition {
                coalition: comp,
                weight: 1.0,
                count: 1,
            });
        }
    }
    Ok(CoalitionSample {
        n_players: m,
        entries,
        exhaustive: false,
        seed,
    })
}

fn enumerate_all(m: usize, seed: u64) -> CoalitionSample {
    let full = (1u64 << m) - 1;
    let entries = (1..full)
        .map(|mask| {
            let coalition = Coalition::from_mask(m, mask);
            let weight = shapley_kernel_weight(m, coalition.size())
                .expect("size in range")
                .finite()
                .expect("non-trivial size");
            SampledCoalition {
                coalition,
                weight,
                count: 1,
            }
        })
        .collect();
    CoalitionSample {
        n_players: m,
        entries,
        exhaustive: true,
        seed,
    }
}
