use crate::error::{Error, Result};
use crate::estimators::Explanation;

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Leaf order of average-linkage agglomerative clustering on the Euclidean
/// distance between attribution vectors. At each step the closest pair of
/// clusters merges, ties going to the pair whose smallest member indices are
/// lowest; the cluster holding the lower index is placed first.
pub fn order_by_similarity(explanations: &[Explanation]) -> Result<Vec<usize>> {
    let n = explanations.len();
    if n == 0 {
        return Err(Error::InputDomain("no explanations to order".into()));
    }
    let m = explanations[0].phi.len();
    if let Some(bad) = explanations.iter().find(|e| e.phi.len() != m) {
        return Err(Error::InputShape {
            what: "explanation attributions",
            expected: m,
            actual: bad.phi.len(),
        });
    }

    // Active clusters keyed by slot; each keeps its leaf order, and the
    // smallest member index is its first leaf's minimum.
    let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    let mut min_index: Vec<usize> = (0..n).collect();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = euclidean(&explanations[i].phi, &explanations[j].phi);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    for _ in 1..n {
        let active: Vec<usize> = (0..n).filter(|&i| members[i].is_some()).collect();
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[ai + 1..] {
                let key = {
                    let (lo, hi) = (min_index[a].min(min_index[b]), min_index[a].max(min_index[b]));
                    (lo, hi)
                };
                let d = dist[a * n + b];
                let better = match best {
                    None => true,
                    Some((bd, bkey, _, _)) => d < bd || (d == bd && key < bkey),
                };
                if better {
                    best = Some((d, key, a, b));
                }
            }
        }
        let (_, _, a, b) = best.expect("at least two active clusters");
        let (first, second) = if min_index[a] < min_index[b] { (a, b) } else { (b, a) };
        let na = members[a].as_ref().map_or(0, Vec::len) as f64;
        let nb = members[b].as_ref().map_or(0, Vec::len) as f64;
        for &k in &active {
            if k != a && k != b {
                let d = (na * dist[k * n + a] + nb * dist[k * n + b]) / (na + nb);
                dist[k * n + first] = d;
                dist[first * n + k] = d;
            }
        }
        let mut merged = members[first].take().expect("active");
        merged.extend(members[second].take().expect("active"));
        members[first] = Some(merged);
        min_index[first] = min_index[a].min(min_index[b]);
    }
    Ok(members.into_iter().flatten().next().expect("one cluster remains"))
}
