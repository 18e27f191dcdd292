//! Overlap between the top-m neurons of several rankings, and the expected
//! overlap when the rankings are independent and uniformly random.
//!
//! Every one of n neurons lands in all i random top-m sets with probability
//! `(m/n)^i`, so the expectation is `m^i / n^(i-1)`. The exact count table
//! `C_i[n, m, k]` (the number of i-tuples of m-subsets whose intersection has
//! size k) is also available for small n, built with big integers.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rankings::Ranking;
use crate::report::{csv_row, fmt_f64};

/// Largest universe the exact table is built for.
pub const EXACT_CAP: usize = 64;

fn check_args(n: usize, m: usize, i: usize) -> Result<()> {
    if m == 0 || m > n {
        return Err(Error::Range(format!(
            "need 1 <= m <= n, got m = {m}, n = {n}"
        )));
    }
    if i < 2 {
        return Err(Error::Range(format!("need at least 2 rankings, got {i}")));
    }
    Ok(())
}

/// Size of the intersection of the rankings' top-m sets.
pub fn topm_overlap(rankings: &[&Ranking], m: usize) -> Result<usize> {
    let Some(first) = rankings.first() else {
        return Err(Error::Range("no rankings".into()));
    };
    let d = first.len();
    if let Some(r) = rankings.iter().find(|r| r.len() != d) {
        return Err(Error::DimMismatch(d, r.len()));
    }
    if m > d {
        return Err(Error::Range(format!("m = {m} exceeds {d} neurons")));
    }
    let mut common: BTreeSet<usize> = first.top(m).iter().copied().collect();
    for r in &rankings[1..] {
        let next: BTreeSet<usize> = r.top(m).iter().copied().collect();
        common.retain(|n| next.contains(n));
    }
    Ok(common.len())
}

/// `m^i / n^(i-1)` in floating point.
pub fn expected_overlap_closed(n: usize, m: usize, i: usize) -> Result<f64> {
    check_args(n, m, i)?;
    Ok((m as f64).powi(i as i32) / (n as f64).powi(i as i32 - 1))
}

/// `m^i / n^(i-1)` as an exact fraction.
pub fn expected_overlap_closed_exact(n: usize, m: usize, i: usize) -> Result<BigRational> {
    check_args(n, m, i)?;
    let num = num_bigint::BigInt::from(m).pow(i as u32);
    let den = num_bigint::BigInt::from(n).pow(i as u32 - 1);
    Ok(BigRational::new(num, den))
}

pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for j in 0..k {
        acc = acc * BigUint::from(n - j) / BigUint::from(j + 1);
    }
    acc
}

/// Exact counts `C_i[n, m, k]` for `k = 0..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapTable {
    pub n: usize,
    pub m: usize,
    pub i: usize,
    pub counts: Vec<BigUint>,
}

impl OverlapTable {
    /// Builds the table by the recurrence
    /// `C_i[n,m,k] = C(n,k) (C(n-k,m-k)^i - sum_{j>=1} C_i[n-k,m-k,j])`,
    /// with the k = 0 entry taken from the total `C(n,m)^i`.
    pub fn build(n: usize, m: usize, i: usize) -> Result<Self> {
        check_args(n, m, i)?;
        if n > EXACT_CAP {
            return Err(Error::Budget { n, cap: EXACT_CAP });
        }
        let gap = n - m;
        // tables[mm] holds C_i[gap + mm, mm, 0..=mm]
        let mut tables: Vec<Vec<BigUint>> = Vec::with_capacity(m + 1);
        for mm in 0..=m {
            let nn = gap + mm;
            let mut row = vec![BigUint::zero(); mm + 1];
            for k in 1..=mm {
                let inner_total = binomial(nn - k, mm - k).pow(i as u32);
                let nonempty: BigUint = tables[mm - k].iter().skip(1).sum();
                row[k] = binomial(nn, k) * (inner_total - nonempty);
            }
            let with_overlap: BigUint = row.iter().skip(1).sum();
            row[0] = binomial(nn, mm).pow(i as u32) - with_overlap;
            tables.push(row);
        }
        Ok(Self {
            n,
            m,
            i,
            counts: tables.pop().expect("m + 1 tables"),
        })
    }

    pub fn total(&self) -> BigUint {
        self.counts.iter().sum()
    }

    /// `sum_k k C_i[n,m,k] / C(n,m)^i`.
    pub fn expected(&self) -> BigRational {
        let weighted: BigUint = self
            .counts
            .iter()
            .enumerate()
            .map(|(k, c)| c * BigUint::from(k))
            .sum();
        let total = binomial(self.n, self.m).pow(self.i as u32);
        BigRational::new(weighted.into(), total.into())
    }
}

/// Expected overlap from the exact count table; limited to `n <= EXACT_CAP`.
pub fn expected_overlap_exact(n: usize, m: usize, i: usize) -> Result<BigRational> {
    Ok(OverlapTable::build(n, m, i)?.expected())
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapMatrix {
    pub labels: Vec<String>,
    pub d: usize,
    pub m: usize,
    pub counts: Vec<Vec<usize>>,
    /// Expected overlap of two random rankings.
    pub expected: f64,
}

impl OverlapMatrix {
    pub fn above_expected(&self, a: usize, b: usize) -> bool {
        self.counts[a][b] as f64 > self.expected
    }

    /// Mean of the cells above the diagonal.
    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.counts.len();
        let mut sum = 0usize;
        for a in 0..n {
            for b in a + 1..n {
                sum += self.counts[a][b];
            }
        }
        sum as f64 / (n * (n - 1) / 2) as f64
    }

    /// Square matrix with a label column, followed by the expected overlap.
    pub fn to_csv(&self) -> String {
        let mut header = vec![String::from("ranking")];
        header.extend(self.labels.iter().cloned());
        let mut out = csv_row(&header);
        for (label, row) in self.labels.iter().zip(&self.counts) {
            let mut fields = vec![label.clone()];
            fields.extend(row.iter().map(usize::to_string));
            out.push_str(&csv_row(&fields));
        }
        out.push_str(&csv_row(&["expected".to_string(), fmt_f64(self.expected)]));
        out
    }
}

/// Pairwise top-m overlaps. `labels` names the rows; pass an empty slice to
/// use each ranking's own label.
pub fn overlap_matrix(rankings: &[Ranking], labels: &[String], m: usize) -> Result<OverlapMatrix> {
    if rankings.len() < 2 {
        return Err(Error::Range(format!(
            "an overlap matrix needs at least 2 rankings, got {}",
            rankings.len()
        )));
    }
    let d = rankings[0].len();
    let labels: Vec<String> = if labels.is_empty() {
        rankings.iter().map(Ranking::label).collect()
    } else if labels.len() == rankings.len() {
        labels.to_vec()
    } else {
        return Err(Error::LengthMismatch(labels.len(), rankings.len()));
    };
    let n = rankings.len();
    let counts = (0..n)
        .into_par_iter()
        .map(|a| {
            (0..n)
                .map(|b| topm_overlap(&[&rankings[a], &rankings[b]], m))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OverlapMatrix {
        labels,
        d,
        m,
        counts,
        expected: expected_overlap_closed(d, m, 2)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rankings::{random_rank, reverse, Method};

    fn ranking(order: Vec<usize>) -> Ranking {
        Ranking::new(Method::Probeless, order).unwrap()
    }

    /// Mean intersection size over every pair of m-subsets of n items.
    fn enumerate_pairs(n: usize, m: usize) -> BigRational {
        let subsets: Vec<u32> = (0u32..1 << n)
            .filter(|s| s.count_ones() as usize == m)
            .collect();
        let mut sum = 0u64;
        for a in &subsets {
            for b in &subsets {
                sum += u64::from((a & b).count_ones());
            }
        }
        let count = (subsets.len() * subsets.len()) as u64;
        BigRational::new(sum.into(), count.into())
    }

    #[test]
    fn overlap_examples() {
        let a = ranking(vec![0, 1, 2, 3, 4]);
        let b = ranking(vec![2, 3, 4, 0, 1]);
        assert_eq!(topm_overlap(&[&a, &b], 3).unwrap(), 1);
        assert_eq!(topm_overlap(&[&a, &a], 3).unwrap(), 3);
        assert_eq!(topm_overlap(&[&a, &reverse(&a)], 2).unwrap(), 0);
        let short = ranking(vec![0, 1]);
        assert!(matches!(
            topm_overlap(&[&a, &short], 1),
            Err(Error::DimMismatch(5, 2))
        ));
    }

    #[test]
    fn closed_form_constants() {
        assert!((expected_overlap_closed(768, 100, 2).unwrap() - 13.0208).abs() < 1e-4);
        assert!((expected_overlap_closed(768, 100, 3).unwrap() - 1.6954).abs() < 1e-4);
        assert_eq!(expected_overlap_closed(50, 50, 3).unwrap(), 50.0);
    }

    #[test]
    fn exact_examples() {
        let one = BigRational::one();
        assert_eq!(expected_overlap_exact(4, 2, 2).unwrap(), one);
        assert_eq!(enumerate_pairs(4, 2), one);
        assert_eq!(
            expected_overlap_exact(6, 2, 3).unwrap(),
            BigRational::new(2.into(), 9.into())
        );
        for i in 2..5 {
            assert_eq!(
                expected_overlap_exact(7, 7, i).unwrap(),
                BigRational::from_integer(7.into())
            );
        }
        assert_eq!(
            OverlapTable::build(1, 1, 2).unwrap().counts,
            vec![BigUint::zero(), BigUint::one()]
        );
        assert!(matches!(
            expected_overlap_exact(65, 3, 2),
            Err(Error::Budget { n: 65, cap: 64 })
        ));
    }

    #[test]
    fn recurrence_matches_closed_form() {
        for n in 1..=12 {
            for m in 1..=n {
                for i in [2, 3] {
                    let t = OverlapTable::build(n, m, i).unwrap();
                    assert_eq!(t.total(), binomial(n, m).pow(i as u32));
                    assert_eq!(
                        t.expected(),
                        expected_overlap_closed_exact(n, m, i).unwrap(),
                        "n={n} m={m} i={i}"
                    );
                }
            }
        }
    }

    #[test]
    fn recurrence_matches_enumeration() {
        for n in 1..=6 {
            for m in 1..=n {
                assert_eq!(
                    expected_overlap_exact(n, m, 2).unwrap(),
                    enumerate_pairs(n, m)
                );
            }
        }
    }

    #[test]
    fn counts_at_cap() {
        let t = OverlapTable::build(64, 20, 3).unwrap();
        assert_eq!(t.total(), binomial(64, 20).pow(3));
        assert_eq!(
            t.expected(),
            expected_overlap_closed_exact(64, 20, 3).unwrap()
        );
    }

    #[test]
    fn matrix_properties() {
        let rs: Vec<Ranking> = (0..4).map(|s| random_rank(20, s).unwrap()).collect();
        let m = overlap_matrix(&rs, &[], 5).unwrap();
        for a in 0..4 {
            assert_eq!(m.counts[a][a], 5);
            for b in 0..4 {
                assert_eq!(m.counts[a][b], m.counts[b][a]);
            }
        }
        assert_eq!(m.expected, 1.25);
        assert!(m.above_expected(0, 0));
        assert!(matches!(
            overlap_matrix(&rs[..1], &[], 5),
            Err(Error::Range(_))
        ));
        assert!(m.to_csv().ends_with("expected,1.25\n"));
    }

    #[test]
    fn random_rankings_match_expectation() {
        let rs: Vec<Ranking> = (0..100)
            .map(|s| random_rank(768, 1000 + s).unwrap())
            .collect();
        let m = overlap_matrix(&rs, &[], 100).unwrap();
        assert!(
            (m.mean_off_diagonal() - 13.02).abs() < 0.5,
            "{}",
            m.mean_off_diagonal()
        );
    }
}
