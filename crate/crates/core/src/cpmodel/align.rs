use std::fmt;

use serde::{Deserialize, Serialize};

use super::{PositionedState, Template};
use crate::cluster::Coded;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedSequence {
    pub case_id: String,
    pub cluster: usize,
    /// Every letter of the sequence, in sequence order.
    pub path: Vec<PositionedState>,
}

impl AlignedSequence {
    /// Matched `(letter, template position)` pairs.
    pub fn pairs(&self) -> Vec<(char, usize)> {
        self.path.iter().filter(|p| !p.off_template).map(|p| (p.letter, p.pos)).collect()
    }

    /// Unmatched `(letter, insertion point)` pairs.
    pub fn unmatched(&self) -> Vec<(char, usize)> {
        self.path.iter().filter(|p| p.off_template).map(|p| (p.letter, p.pos)).collect()
    }

    pub fn matched(&self) -> usize {
        self.path.iter().filter(|p| !p.off_template).count()
    }

    /// Matched pairs in compact form, e.g. `A0F2I4F6D8E9`.
    pub fn notation(&self) -> String {
        self.pairs().iter().map(|(c, p)| format!("{c}{p}")).collect()
    }
}

impl fmt::Display for AlignedSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.path {
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

/// Suffix LCS lengths: `t[i][j]` = LCS of `a[i..]` and `b[j..]`.
fn suffix_lcs(a: &[char], b: &[char]) -> Vec<Vec<usize>> {
    let (n, m) = (a.len(), b.len());
    let mut t = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            t[i][j] = if a[i] == b[j] {
                1 + t[i + 1][j + 1]
            } else {
                t[i + 1][j].max(t[i][j + 1])
            };
        }
    }
    t
}

/// Embeds `codes` into the template as a longest common subsequence.
///
/// Among maximum embeddings the one with the lexicographically smallest
/// tuple of template positions is chosen.
pub fn align(case_id: &str, codes: &str, template: &Template) -> AlignedSequence {
    let s: Vec<char> = codes.chars().collect();
    let t: Vec<char> = template.codes.chars().collect();
    let lcs = suffix_lcs(&s, &t);
    let mut path = Vec::with_capacity(s.len());
    let (mut i, mut j) = (0, 0);
    let mut left = lcs[0][0];
    while left > 0 {
        let (mi, mj) = (j..t.len())
            .find_map(|jj| (i..s.len()).find(|&ii| s[ii] == t[jj] && lcs[ii + 1][jj + 1] == left - 1).map(|ii| (ii, jj)))
            .expect("a remaining match exists while the suffix LCS is positive");
        for &c in &s[i..mi] {
            path.push(PositionedState::off(c, j));
        }
        path.push(PositionedState::on(s[mi], mj));
        i = mi + 1;
        j = mj + 1;
        left -= 1;
    }
    for &c in &s[i..] {
        path.push(PositionedState::off(c, j));
    }
    AlignedSequence {
        case_id: case_id.to_string(),
        cluster: template.cluster,
        path,
    }
}

/// Aligns each sequence against its own cluster's template; sequences in
/// clusters without a template are skipped.
pub fn align_all<S: Coded>(
    seqs: &[S],
    assignment: impl Fn(&str) -> Option<usize>,
    templates: &[Template],
) -> Vec<AlignedSequence> {
    seqs.iter()
        .filter_map(|s| {
            let c = assignment(s.id())?;
            let t = templates.iter().find(|t| t.cluster == c)?;
            Some(align(s.id(), s.codes(), t))
        })
        .collect()
}
