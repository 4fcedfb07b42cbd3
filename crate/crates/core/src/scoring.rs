//! Pairwise compatibility functions.
//!
//! Distances are returned as distances; callers that rank negate them so that
//! a higher score always means "more compatible".

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Translation distance `‖x + r − y‖²` and its expansion
/// `‖x‖² + ‖y‖² + ‖r‖² − 2·xᵀy − 2·(y − x)ᵀr`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreBreakdown {
    pub total: f64,
    /// `xᵀy`
    pub global: f64,
    /// `(y − x)ᵀr`
    pub category: f64,
    /// `‖x‖² + ‖y‖² + ‖r‖²`
    pub norm_terms: f64,
}

impl ScoreBreakdown {
    /// `norm_terms − 2·global − 2·category`, which equals `total` up to rounding.
    pub fn recombined(&self) -> f64 {
        self.norm_terms - 2.0 * self.global - 2.0 * self.category
    }

    /// Ranking score for one part of the expansion.
    pub fn score(&self, part: ScorePart) -> f64 {
        match part {
            ScorePart::All => -self.total,
            ScorePart::Global => self.global,
            ScorePart::Category => self.category,
        }
    }
}

/// Which part of the translation distance ranks candidates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorePart {
    #[default]
    All,
    Global,
    Category,
}

impl ScorePart {
    pub fn as_str(self) -> &'static str {
        match self {
            ScorePart::All => "all",
            ScorePart::Global => "global",
            ScorePart::Category => "category",
        }
    }
}

impl std::str::FromStr for ScorePart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(ScorePart::All),
            "global" => Ok(ScorePart::Global),
            "category" => Ok(ScorePart::Category),
            other => Err(Error::Invalid(format!(
                "unknown score part {other:?} (expected all, global or category)"
            ))),
        }
    }
}

fn check(context: &str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dims(context, a.len(), b.len()));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn dist_transnfcm(x: &[f64], y: &[f64], r: &[f64]) -> Result<ScoreBreakdown> {
    check("translation distance (x, y)", x, y)?;
    check("translation distance (x, r)", x, r)?;
    let mut total = 0.0;
    let mut global = 0.0;
    let mut category = 0.0;
    let mut norm_terms = 0.0;
    for ((&a, &b), &t) in x.iter().zip(y).zip(r) {
        let e = a + t - b;
        total += e * e;
        global += a * b;
        category += (b - a) * t;
        norm_terms += a * a + b * b + t * t;
    }
    Ok(ScoreBreakdown {
        total,
        global,
        category,
        norm_terms,
    })
}

pub fn score_inner(x: &[f64], y: &[f64]) -> Result<f64> {
    check("inner product", x, y)?;
    Ok(dot(x, y))
}

pub fn dist_euclid(x: &[f64], y: &[f64]) -> Result<f64> {
    check("euclidean distance", x, y)?;
    Ok(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// `‖x⊙w − y⊙w‖²`
pub fn dist_csn(x: &[f64], y: &[f64], w: &[f64]) -> Result<f64> {
    check("masked distance (x, y)", x, y)?;
    check("masked distance (x, w)", x, w)?;
    Ok(x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((a, b), m)| {
            let e = m * (a - b);
            e * e
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_translation_is_zero() {
        let s = dist_transnfcm(&[1.0, 0.0], &[0.0, 1.0], &[-1.0, 1.0]).unwrap();
        assert_eq!(s.total, 0.0);
    }

    #[test]
    fn identical_items_without_relation() {
        let x = [0.3, -0.4, 1.2];
        let s = dist_transnfcm(&x, &x, &[0.0; 3]).unwrap();
        assert_eq!(s.total, 0.0);
        assert_eq!(s.global, dot(&x, &x));
        assert_eq!(s.category, 0.0);
    }

    #[test]
    fn worked_expansion() {
        let s = dist_transnfcm(&[0.6, 0.8], &[0.8, 0.6], &[0.0, 0.0]).unwrap();
        assert!((s.total - 0.08).abs() < 1e-12);
        assert!((s.global - 0.96).abs() < 1e-12);
        assert!((s.norm_terms - 2.0).abs() < 1e-12);
        assert!((s.recombined() - 0.08).abs() < 1e-12);
    }

    #[test]
    fn inner_and_euclid_examples() {
        assert_eq!(score_inner(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(score_inner(&[0.6, 0.8], &[0.6, 0.8]).unwrap(), 1.0);
        assert!((score_inner(&[0.6, 0.8], &[0.8, 0.6]).unwrap() - 0.96).abs() < 1e-12);
        assert_eq!(dist_euclid(&[0.2, 0.1], &[0.2, 0.1]).unwrap(), 0.0);
        assert_eq!(dist_euclid(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        assert!((dist_euclid(&[0.6, 0.8], &[0.8, 0.6]).unwrap() - 0.08).abs() < 1e-12);
    }

    #[test]
    fn masked_distance_examples() {
        let (x, y) = ([0.3, -0.2, 0.9], [0.1, 0.5, -0.4]);
        assert_eq!(
            dist_csn(&x, &y, &[1.0; 3]).unwrap(),
            dist_euclid(&x, &y).unwrap()
        );
        assert_eq!(dist_csn(&x, &y, &[0.0; 3]).unwrap(), 0.0);
        assert_eq!(dist_csn(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            dist_transnfcm(&[1.0], &[1.0, 2.0], &[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(dist_transnfcm(&[1.0], &[1.0], &[0.0, 1.0]).is_err());
        assert!(score_inner(&[1.0], &[]).is_err());
        assert!(dist_euclid(&[1.0], &[]).is_err());
        assert!(dist_csn(&[1.0], &[1.0], &[]).is_err());
    }

    fn unit(v: Vec<f64>) -> Vec<f64> {
        let n = dot(&v, &v).sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    fn ranking(scores: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        idx
    }

    proptest! {
        #[test]
        fn decomposition_identity(
            v in (2usize..64).prop_flat_map(|d| proptest::collection::vec(-10.0f64..10.0, 3 * d))
        ) {
            let d = v.len() / 3;
            let s = dist_transnfcm(&v[..d], &v[d..2 * d], &v[2 * d..]).unwrap();
            prop_assert!((s.total - s.recombined()).abs() / s.total.abs().max(1.0) <= 1e-9);
        }

        #[test]
        fn zero_relation_rankings_agree(
            query in proptest::collection::vec(-1.0f64..1.0, 6),
            cands in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 6), 2..20),
        ) {
            prop_assume!(dot(&query, &query) > 1e-6);
            prop_assume!(cands.iter().all(|c| dot(c, c) > 1e-6));
            let q = unit(query);
            let cs: Vec<Vec<f64>> = cands.into_iter().map(unit).collect();
            let zero = vec![0.0; 6];
            let trans: Vec<f64> = cs.iter().map(|c| -dist_transnfcm(&q, c, &zero).unwrap().total).collect();
            let inner: Vec<f64> = cs.iter().map(|c| score_inner(&q, c).unwrap()).collect();
            let eucl: Vec<f64> = cs.iter().map(|c| -dist_euclid(&q, c).unwrap()).collect();
            // equal up to rounding; compare orders only where scores are separated
            let separated = |s: &[f64]| {
                let mut v = s.to_vec();
                v.sort_by(f64::total_cmp);
                v.windows(2).all(|w| w[1] - w[0] > 1e-9)
            };
            prop_assume!(separated(&inner));
            prop_assert_eq!(ranking(&trans), ranking(&inner));
            prop_assert_eq!(ranking(&eucl), ranking(&inner));
        }

        #[test]
        fn scoring_is_pure(v in proptest::collection::vec(-5.0f64..5.0, 12)) {
            let (x, y, r) = (&v[..4], &v[4..8], &v[8..]);
            prop_assert_eq!(
                dist_transnfcm(x, y, r).unwrap().total.to_bits(),
                dist_transnfcm(x, y, r).unwrap().total.to_bits()
            );
            prop_assert_eq!(dist_csn(x, y, r).unwrap().to_bits(), dist_csn(x, y, r).unwrap().to_bits());
        }
    }
}
