use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{levenshtein_chars, ClusterModel, ClusterParams, Coded};
use crate::error::{Error, Result};
use crate::rng;

/// Distinct code strings in order of first appearance, with multiplicities.
#[derive(Clone, Debug)]
pub struct DistinctSequences {
    pub strings: Vec<String>,
    pub weights: Vec<u64>,
    /// Distinct index of every input sequence.
    pub member_of: Vec<usize>,
}

impl DistinctSequences {
    pub fn new<T: Coded>(seqs: &[T]) -> Self {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut strings = Vec::new();
        let mut weights = Vec::new();
        let mut member_of = Vec::with_capacity(seqs.len());
        for s in seqs {
            let i = *index.entry(s.codes()).or_insert_with(|| {
                strings.push(s.codes().to_string());
                weights.push(0);
                strings.len() - 1
            });
            weights[i] += 1;
            member_of.push(i);
        }
        DistinctSequences { strings, weights, member_of }
    }

    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strings.is_empty()
    }
}

/// Dense symmetric Levenshtein matrix over distinct strings.
#[derive(Clone, Debug)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<u32>,
}

impl DistanceMatrix {
    pub fn new(strings: &[String]) -> Self {
        let chars: Vec<Vec<char>> = strings.iter().map(|s| s.chars().collect()).collect();
        let n = chars.len();
        let data: Vec<u32> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let chars = &chars;
                (0..n).map(move |j| levenshtein_chars(&chars[i], &chars[j]) as u32)
            })
            .collect();
        DistanceMatrix { n, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.data[i * self.n + j]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Partition {
    /// Distinct indices of the medoids, in cluster order.
    pub medoids: Vec<usize>,
    /// Cluster of every distinct string.
    pub labels: Vec<usize>,
    pub cost: u64,
    /// Total cost after BUILD and after every accepted swap.
    #[cfg_attr(not(test), allow(dead_code))]
    pub trace: Vec<u64>,
}

struct Nearest {
    /// (distance, medoid slot) to the nearest and second-nearest medoid.
    first: Vec<(u32, usize)>,
    second: Vec<u32>,
}

fn nearest(d: &DistanceMatrix, medoids: &[usize]) -> Nearest {
    let n = d.len();
    let mut first = vec![(u32::MAX, 0); n];
    let mut second = vec![u32::MAX; n];
    for j in 0..n {
        for (slot, &m) in medoids.iter().enumerate() {
            let v = d.get(m, j);
            if v < first[j].0 {
                second[j] = first[j].0;
                first[j] = (v, slot);
            } else if v < second[j] {
                second[j] = v;
            }
        }
    }
    Nearest { first, second }
}

fn total_cost(d: &DistanceMatrix, w: &[u64], medoids: &[usize]) -> u64 {
    (0..d.len())
        .map(|j| w[j] * medoids.iter().map(|&m| d.get(m, j)).min().unwrap_or(0) as u64)
        .sum()
}

/// PAM: greedy BUILD followed by best-improvement SWAP to a local optimum.
///
/// The seed only permutes the candidate scan order, which decides ties.
pub(crate) fn pam(d: &DistanceMatrix, w: &[u64], k: usize, seed: u64) -> Partition {
    let n = d.len();
    assert!(k >= 1 && k <= n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));

    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    let mut is_medoid = vec![false; n];
    let mut best_d: Vec<u64> = vec![u64::MAX; n];
    for _ in 0..k {
        let mut pick: Option<(usize, i128)> = None;
        for &c in &order {
            if is_medoid[c] {
                continue;
            }
            // Negated cost change: larger is better.
            let gain: i128 = (0..n)
                .map(|j| {
                    let dj = d.get(c, j) as u64;
                    if best_d[j] == u64::MAX {
                        -((w[j] * dj) as i128)
                    } else {
                        (w[j] * best_d[j].saturating_sub(dj)) as i128
                    }
                })
                .sum();
            if pick.is_none_or(|(_, g)| gain > g) {
                pick = Some((c, gain));
            }
        }
        let (c, _) = pick.expect("k <= n guarantees a candidate");
        medoids.push(c);
        is_medoid[c] = true;
        for j in 0..n {
            best_d[j] = best_d[j].min(d.get(c, j) as u64);
        }
    }

    let mut cost = total_cost(d, w, &medoids);
    let mut trace = vec![cost];
    loop {
        let near = nearest(d, &medoids);
        let mut best: Option<(usize, usize, i64)> = None;
        for slot in 0..k {
            for &c in &order {
                if is_medoid[c] {
                    continue;
                }
                let mut delta: i64 = 0;
                for j in 0..n {
                    let (dn, sn) = near.first[j];
                    let dc = d.get(c, j);
                    let new = if sn == slot { near.second[j].min(dc) } else { dn.min(dc) };
                    delta += w[j] as i64 * (new as i64 - dn as i64);
                }
                if delta < 0 && best.is_none_or(|(_, _, b)| delta < b) {
                    best = Some((slot, c, delta));
                }
            }
        }
        match best {
            Some((slot, c, delta)) => {
                is_medoid[medoids[slot]] = false;
                is_medoid[c] = true;
                medoids[slot] = c;
                cost = (cost as i64 + delta) as u64;
                trace.push(cost);
            }
            None => break,
        }
    }

    // Canonical cluster order: by first appearance of the medoid string.
    medoids.sort_unstable();
    let labels: Vec<usize> = (0..n)
        .map(|j| {
            let mut best = 0;
            for slot in 1..k {
                if d.get(medoids[slot], j) < d.get(medoids[best], j) {
                    best = slot;
                }
            }
            best
        })
        .collect();
    debug_assert_eq!(cost, total_cost(d, w, &medoids));
    Partition { medoids, labels, cost, trace }
}

pub(crate) fn model_from_partition<T: Coded>(
    seqs: &[T],
    distinct: &DistinctSequences,
    part: &Partition,
    params: &ClusterParams,
) -> ClusterModel {
    let k = part.medoids.len();
    let mut sizes = vec![0usize; k];
    let mut assignment = BTreeMap::new();
    for (s, &di) in seqs.iter().zip(&distinct.member_of) {
        let c = part.labels[di];
        sizes[c] += 1;
        assignment.insert(s.id().to_string(), c);
    }
    let discarded = (0..k).filter(|&c| sizes[c] < params.min_cluster_size).collect();
    ClusterModel {
        k,
        medoids: part.medoids.iter().map(|&m| distinct.strings[m].clone()).collect(),
        sizes,
        cost: part.cost,
        cv_curve: Vec::new(),
        assignment,
        discarded,
    }
}

pub(crate) fn check_k(k: usize, distinct: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidRange("k must be at least 1".into()));
    }
    if k > distinct {
        return Err(Error::TooManyClusters { k, distinct });
    }
    Ok(())
}

/// Clusters `seqs` into exactly `k` groups with default parameters.
pub fn kmedoids<T: Coded>(seqs: &[T], k: usize, seed: u64) -> Result<ClusterModel> {
    kmedoids_with(seqs, k, seed, &ClusterParams::default())
}

pub fn kmedoids_with<T: Coded>(
    seqs: &[T],
    k: usize,
    seed: u64,
    params: &ClusterParams,
) -> Result<ClusterModel> {
    let distinct = DistinctSequences::new(seqs);
    check_k(k, distinct.len())?;
    let d = DistanceMatrix::new(&distinct.strings);
    let part = pam(&d, &distinct.weights, k, seed);
    Ok(model_from_partition(seqs, &distinct, &part, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{adjusted_rand_index, levenshtein};
    use std::collections::BTreeSet;

    fn corpus(codes: &[&str]) -> Vec<(String, String)> {
        codes
            .iter()
            .enumerate()
            .map(|(i, c)| (format!("c{i:03}"), c.to_string()))
            .collect()
    }

    fn partition_sets(model: &ClusterModel) -> BTreeSet<BTreeSet<String>> {
        let mut groups: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
        for (id, &c) in &model.assignment {
            groups.entry(c).or_default().insert(id.clone());
        }
        groups.into_values().collect()
    }

    fn brute_force_cost(d: &DistanceMatrix, w: &[u64], k: usize) -> u64 {
        fn rec(d: &DistanceMatrix, w: &[u64], k: usize, start: usize, chosen: &mut Vec<usize>) -> u64 {
            if chosen.len() == k {
                return total_cost(d, w, chosen);
            }
            (start..d.len())
                .map(|c| {
                    chosen.push(c);
                    let v = rec(d, w, k, c + 1, chosen);
                    chosen.pop();
                    v
                })
                .min()
                .unwrap_or(u64::MAX)
        }
        rec(d, w, k, 0, &mut Vec::new())
    }

    #[test]
    fn identical_sequences_single_cluster() {
        let seqs = corpus(&["AFE"; 6]);
        let m = kmedoids(&seqs, 1, 0).unwrap();
        assert_eq!(m.k, 1);
        assert_eq!(m.cost, 0);
        assert_eq!(m.sizes, vec![6]);
        assert!(m.discarded.is_empty());
    }

    #[test]
    fn separable_templates_split_exactly() {
        let mut codes = vec!["AFE"; 7];
        codes.extend(["AFIFE"; 5]);
        let seqs = corpus(&codes);
        let m = kmedoids(&seqs, 2, 11).unwrap();
        let truth: Vec<usize> = codes.iter().map(|c| usize::from(*c == "AFIFE")).collect();
        let got: Vec<usize> = seqs.iter().map(|(id, _)| m.assignment[id]).collect();
        assert_eq!(adjusted_rand_index(&truth, &got), 1.0);
        assert_eq!(m.cost, 0);
    }

    #[test]
    fn too_many_clusters() {
        let seqs = corpus(&["AFE", "AFE", "AF"]);
        assert!(matches!(kmedoids(&seqs, 3, 0), Err(Error::TooManyClusters { k: 3, distinct: 2 })));
        assert!(kmedoids(&seqs, 0, 0).is_err());
    }

    #[test]
    fn medoid_belongs_to_own_cluster_and_discard_rule() {
        let codes = ["AFE", "AFE", "AFE", "AFE", "AFE", "AFIFE", "AFIFE", "ACNCNCE", "ACNCNE"];
        let seqs = corpus(&codes);
        let m = kmedoids(&seqs, 3, 5).unwrap();
        for (c, medoid) in m.medoids.iter().enumerate() {
            let member = seqs.iter().find(|(_, s)| s == medoid).unwrap();
            assert_eq!(m.assignment[&member.0], c);
        }
        for c in 0..m.k {
            assert_eq!(m.discarded.contains(&c), m.sizes[c] < 5);
        }
        assert!(!m.discarded.is_empty());
    }

    #[test]
    fn pam_trace_nonincreasing_and_near_optimal() {
        let codes = [
            "AFE", "AFIE", "AFIFE", "AFIFDE", "ACFIFE", "AEFNINFEDE", "AFINFE", "AFIFD", "AE",
            "AFNE", "ACE", "ACFE",
        ];
        let distinct = DistinctSequences::new(&corpus(&codes));
        let d = DistanceMatrix::new(&distinct.strings);
        for k in 1..=4 {
            for seed in 0..5 {
                let p = pam(&d, &distinct.weights, k, seed);
                assert!(p.trace.windows(2).all(|w| w[1] <= w[0]));
                assert_eq!(p.cost, *p.trace.last().unwrap());
                // Local optimum of single swaps is within a small factor of the global one.
                let opt = brute_force_cost(&d, &distinct.weights, k);
                assert!(p.cost >= opt);
                assert!(p.cost as f64 <= opt as f64 * 1.5 + 1.0, "k={k} {} vs {opt}", p.cost);
            }
        }
    }

    #[test]
    fn no_single_swap_improves() {
        let codes = ["AFE", "AFIE", "AFIFE", "AFIFDE", "ACFIFE", "AEFNINFEDE", "AFINFE", "AE", "ACE"];
        let distinct = DistinctSequences::new(&corpus(&codes));
        let d = DistanceMatrix::new(&distinct.strings);
        let p = pam(&d, &distinct.weights, 3, 9);
        for slot in 0..3 {
            for c in 0..d.len() {
                if p.medoids.contains(&c) {
                    continue;
                }
                let mut trial = p.medoids.clone();
                trial[slot] = c;
                assert!(total_cost(&d, &distinct.weights, &trial) >= p.cost);
            }
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let codes = ["AFE", "AFIE", "AFIFE", "AFIFDE", "ACFIFE", "AEFNINFEDE", "AFINFE", "AE", "ACE"];
        let seqs = corpus(&codes);
        assert_eq!(kmedoids(&seqs, 3, 4).unwrap(), kmedoids(&seqs, 3, 4).unwrap());
    }

    #[test]
    fn matrix_is_levenshtein() {
        let strings: Vec<String> = ["AFE", "", "AFIFE", "ACE"].iter().map(|s| s.to_string()).collect();
        let d = DistanceMatrix::new(&strings);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(d.get(i, j) as usize, levenshtein(&strings[i], &strings[j]));
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn relabel(s: &str, perm: &[char; 4]) -> String {
            s.chars()
                .map(|c| match c {
                    'A' => perm[0],
                    'F' => perm[1],
                    'E' => perm[2],
                    _ => perm[3],
                })
                .collect()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn alphabet_relabeling_keeps_partition(
                codes in prop::collection::vec("[AFEI]{1,7}", 6..24),
                perm in Just(['A', 'F', 'E', 'I']).prop_shuffle(),
                k in 1usize..4,
                seed in 0u64..100,
            ) {
                let seqs = corpus(&codes.iter().map(String::as_str).collect::<Vec<_>>());
                let distinct = DistinctSequences::new(&seqs).len();
                prop_assume!(k <= distinct);
                let renamed: Vec<(String, String)> = seqs
                    .iter()
                    .map(|(id, c)| (id.clone(), relabel(c, &perm)))
                    .collect();
                let a = kmedoids(&seqs, k, seed).unwrap();
                let b = kmedoids(&renamed, k, seed).unwrap();
                prop_assert_eq!(partition_sets(&a), partition_sets(&b));
                prop_assert_eq!(a.cost, b.cost);
            }
        }
    }
}
