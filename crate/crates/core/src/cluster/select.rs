use serde::{Deserialize, Serialize};

use super::kmedoids::{check_k, model_from_partition, pam, DistanceMatrix, DistinctSequences, Partition};
use super::{ClusterModel, ClusterParams, Coded};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub k: usize,
    pub cv_intra: f64,
    pub cv_inter: f64,
    pub cv_ratio: f64,
}

/// Coefficient of variation (population sd over mean) of weighted values.
fn weighted_cv(values: &[(f64, f64)]) -> Option<f64> {
    let total: f64 = values.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return None;
    }
    let mean = values.iter().map(|(x, w)| x * w).sum::<f64>() / total;
    if mean <= 0.0 {
        return None;
    }
    let var = values.iter().map(|(x, w)| w * (x - mean).powi(2)).sum::<f64>() / total;
    Some(var.sqrt() / mean)
}

/// Intra-cluster CV over member-to-medoid distances divided by the
/// inter-cluster CV over pairwise medoid distances.
///
/// `None` when either CV is undefined (zero mean, fewer than two medoids)
/// or zero.
pub(crate) fn cv_point(
    d: &DistanceMatrix,
    distinct: &DistinctSequences,
    part: &Partition,
    unweighted: bool,
) -> Option<CvPoint> {
    let k = part.medoids.len();
    let intra: Vec<(f64, f64)> = (0..d.len())
        .map(|j| {
            let w = if unweighted { 1.0 } else { distinct.weights[j] as f64 };
            (d.get(part.medoids[part.labels[j]], j) as f64, w)
        })
        .collect();
    let mut inter = Vec::with_capacity(k * k.saturating_sub(1) / 2);
    for a in 0..k {
        for b in a + 1..k {
            inter.push((d.get(part.medoids[a], part.medoids[b]) as f64, 1.0));
        }
    }
    let cv_intra = weighted_cv(&intra)?;
    let cv_inter = weighted_cv(&inter)?;
    if cv_intra <= 0.0 || cv_inter <= 0.0 {
        return None;
    }
    Some(CvPoint {
        k,
        cv_intra,
        cv_inter,
        cv_ratio: cv_intra / cv_inter,
    })
}

/// CV ratio of an already fitted model, recomputed from its medoids and assignment.
pub fn cv_ratio<T: Coded>(seqs: &[T], model: &ClusterModel, unweighted: bool) -> Option<CvPoint> {
    let distinct = DistinctSequences::new(seqs);
    let d = DistanceMatrix::new(&distinct.strings);
    let medoids: Vec<usize> = model
        .medoids
        .iter()
        .map(|m| distinct.strings.iter().position(|s| s == m))
        .collect::<Option<_>>()?;
    let mut labels = vec![0; distinct.len()];
    for (s, &di) in seqs.iter().zip(&distinct.member_of) {
        labels[di] = *model.assignment.get(s.id())?;
    }
    let part = Partition { medoids, labels, cost: model.cost, trace: vec![] };
    cv_point(&d, &distinct, &part, unweighted)
}

pub fn select_k<T: Coded>(seqs: &[T], krange: &[usize], seed: u64) -> Result<ClusterModel> {
    select_k_with(seqs, krange, seed, &ClusterParams::default())
}

/// Fits every k in `krange` and keeps the one with the smallest CV ratio
/// (ties go to the smaller k).
pub fn select_k_with<T: Coded>(
    seqs: &[T],
    krange: &[usize],
    seed: u64,
    params: &ClusterParams,
) -> Result<ClusterModel> {
    if krange.is_empty() {
        return Err(Error::InvalidRange("empty k range".into()));
    }
    let distinct = DistinctSequences::new(seqs);
    for &k in krange {
        check_k(k, distinct.len())?;
    }
    let d = DistanceMatrix::new(&distinct.strings);

    let mut ks = krange.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut curve = Vec::new();
    let mut best: Option<(CvPoint, Partition)> = None;
    for k in ks {
        let part = pam(&d, &distinct.weights, k, seed);
        match cv_point(&d, &distinct, &part, params.cv_unweighted) {
            Some(point) => {
                log::info!(
                    "k = {k}: cv_intra {:.6} / cv_inter {:.6} = {:.6}",
                    point.cv_intra,
                    point.cv_inter,
                    point.cv_ratio
                );
                curve.push(point);
                if best.as_ref().is_none_or(|(b, _)| point.cv_ratio < b.cv_ratio) {
                    best = Some((point, part));
                }
            }
            None => log::warn!("k = {k} skipped: coefficient of variation undefined"),
        }
    }
    let (_, part) = best.ok_or(Error::NoValidK)?;
    let mut model = model_from_partition(seqs, &distinct, &part, params);
    model.cv_curve = curve;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(codes: &[&str]) -> Vec<(String, String)> {
        codes
            .iter()
            .enumerate()
            .map(|(i, c)| (format!("c{i:03}"), c.to_string()))
            .collect()
    }

    #[test]
    fn k_one_alone_is_an_error() {
        let seqs = corpus(&["AFE", "AFIFE", "AFE", "ACE"]);
        assert!(matches!(select_k(&seqs, &[1], 0), Err(Error::NoValidK)));
        assert!(matches!(select_k(&seqs, &[], 0), Err(Error::InvalidRange(_))));
        assert!(select_k(&seqs, &[2, 9], 0).is_err());
    }

    #[test]
    fn chosen_k_minimises_curve() {
        let codes = [
            "AFE", "AFE", "AFE", "AFIE", "AFIFE", "AFIFE", "AFIFE", "AFIFDE", "AEFNINFEDE",
            "AEFNINFEDE", "AEFNINFED", "ACNCNE", "ACNCNCE", "ACNCNCE",
        ];
        let seqs = corpus(&codes);
        let m = select_k(&seqs, &[1, 2, 3, 4, 5], 3).unwrap();
        assert!(m.cv_curve.iter().all(|p| p.cv_ratio > 0.0));
        assert!(m.cv_curve.iter().all(|p| p.k >= 2));
        let min = m.cv_curve.iter().map(|p| p.cv_ratio).fold(f64::INFINITY, f64::min);
        let chosen = m.cv_curve.iter().find(|p| p.k == m.k).unwrap();
        assert_eq!(chosen.cv_ratio, min);
        let again = cv_ratio(&seqs, &m, false).unwrap();
        assert!((again.cv_ratio - chosen.cv_ratio).abs() < 1e-12);
    }

    #[test]
    fn weighted_cv_hand_computed() {
        // Values 1 (w=3) and 4 (w=1): mean 1.75, var 1.6875.
        let cv = weighted_cv(&[(1.0, 3.0), (4.0, 1.0)]).unwrap();
        assert!((cv - 1.6875f64.sqrt() / 1.75).abs() < 1e-12);
        assert!(weighted_cv(&[(0.0, 2.0)]).is_none());
        assert!(weighted_cv(&[]).is_none());
    }
}
