use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Explanation;
use crate::error::{Error, Result};
use crate::masking::{Coalition, SetFunctionCache};
use crate::model::Predict;

/// Monte Carlo Shapley estimate from `n_orderings` uniformly drawn feature
/// orderings.
///
/// When `n_orderings >= M!` every ordering is used exactly once instead and
/// the result is exact.
pub fn permutation_estimate<P: Predict>(
    cache: &SetFunctionCache<P>,
    n_orderings: usize,
    seed: u64,
) -> Result<Explanation> {
    if n_orderings == 0 {
        return Err(Error::Domain("permutation estimate needs at least one ordering".into()));
    }
    let m = cache.n_players();
    let orderings = match factorial(m) {
        Some(total) if total <= n_orderings => all_orderings(m),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut order: Vec<usize> = (0..m).collect();
            (0..n_orderings)
                .map(|_| {
                    order.shuffle(&mut rng);
                    order.clone()
                })
                .collect()
        }
    };

    // Evaluate every prefix in parallel, then reduce in a fixed order.
    let mut prefixes = Vec::with_capacity(orderings.len() * m);
    for order in &orderings {
        let mut s = Coalition::empty(m);
        for &i in order {
            s.set(i, true);
            prefixes.push(s.clone());
        }
    }
    cache.prefill(&prefixes);

    let base = cache.empty_value();
    let mut sums = vec![0.0; m];
    let mut prefix = prefixes.iter();
    for order in &orderings {
        let mut prev = base;
        for &i in order {
            let next = cache.value(prefix.next().expect("one prefix per step"));
            sums[i] += next - prev;
            prev = next;
        }
    }
    let n = orderings.len() as f64;
    let phi = sums.into_iter().map(|s| s / n).collect();
    Ok(Explanation::new(base, phi, "permutation", cache.evaluations(), seed))
}

fn factorial(m: usize) -> Option<usize> {
    (1..=m).try_fold(1usize, |acc, k| acc.checked_mul(k))
}

/// All permutations of `0..m` in lexicographic order.
fn all_orderings(m: usize) -> Vec<Vec<usize>> {
    let mut current: Vec<usize> = (0..m).collect();
    let mut out = vec![current.clone()];
    while next_permutation(&mut current) {
        out.push(current.clone());
    }
    out
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = v.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = v.iter().rposition(|&x| x > v[i]).expect("a larger element exists");
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}
