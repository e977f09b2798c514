//! Pairwise co-occurrence probabilities between candidates.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{Candidate, CandidateId};

/// Probability that two candidates belong to the same person.
///
/// Implementations must be symmetric, return values in `[0, 1]`, and return
/// 1 for a candidate paired with itself.
pub trait AssociationProvider: Send + Sync {
    fn pairwise(&self, a: &Candidate, b: &Candidate) -> f64;
}

impl<T: AssociationProvider + ?Sized> AssociationProvider for &T {
    fn pairwise(&self, a: &Candidate, b: &Candidate) -> f64 {
        (**self).pairwise(a, b)
    }
}

impl<T: AssociationProvider + ?Sized> AssociationProvider for Box<T> {
    fn pairwise(&self, a: &Candidate, b: &Candidate) -> f64 {
        (**self).pairwise(a, b)
    }
}

/// Explicit table of pair probabilities. Pairs not listed score 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseAssociation {
    table: HashMap<(CandidateId, CandidateId), f64>,
}

fn key(a: CandidateId, b: CandidateId) -> (CandidateId, CandidateId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl SparseAssociation {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `p` for the unordered pair `{a, b}`. Giving the same pair
    /// twice with different values is an error.
    pub fn insert(&mut self, a: CandidateId, b: CandidateId, p: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("association {a}-{b}: p = {p} outside [0, 1]")));
        }
        match self.table.insert(key(a, b), p) {
            Some(old) if old != p => Err(Error::invalid(format!(
                "association {a}-{b} given twice with different values ({old} and {p})"
            ))),
            _ => Ok(()),
        }
    }

    pub fn get(&self, a: CandidateId, b: CandidateId) -> f64 {
        if a == b {
            return 1.0;
        }
        self.table.get(&key(a, b)).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Entries sorted by pair, each unordered pair once.
    pub fn entries(&self) -> Vec<(CandidateId, CandidateId, f64)> {
        let mut v: Vec<_> = self.table.iter().map(|(&(a, b), &p)| (a, b, p)).collect();
        v.sort_by_key(|x| (x.0, x.1));
        v
    }
}

impl AssociationProvider for SparseAssociation {
    fn pairwise(&self, a: &Candidate, b: &Candidate) -> f64 {
        self.get(a.id, b.id)
    }
}

/// Association backed by a closure, mostly for tests.
pub struct FnAssociation<F>(pub F);

impl<F> AssociationProvider for FnAssociation<F>
where
    F: Fn(&Candidate, &Candidate) -> f64 + Send + Sync,
{
    fn pairwise(&self, a: &Candidate, b: &Candidate) -> f64 {
        if a.id == b.id {
            1.0
        } else {
            (self.0)(a, b)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PartClass;

    #[test]
    fn sparse_is_symmetric_with_zero_default() {
        let mut s = SparseAssociation::new();
        s.insert(CandidateId(1), CandidateId(2), 0.7).unwrap();
        s.insert(CandidateId(2), CandidateId(1), 0.7).unwrap();
        assert_eq!(s.len(), 1);
        let a = Candidate::new(1, PartClass::Head, 0.0, 0.0, 1.0);
        let b = Candidate::new(2, PartClass::Neck, 0.0, 0.0, 1.0);
        let c = Candidate::new(3, PartClass::Neck, 0.0, 0.0, 1.0);
        assert_eq!(s.pairwise(&a, &b), 0.7);
        assert_eq!(s.pairwise(&b, &a), 0.7);
        assert_eq!(s.pairwise(&a, &c), 0.0);
        assert_eq!(s.pairwise(&a, &a), 1.0);
    }

    #[test]
    fn sparse_rejects_conflicts_and_out_of_range() {
        let mut s = SparseAssociation::new();
        s.insert(CandidateId(1), CandidateId(2), 0.7).unwrap();
        assert!(s.insert(CandidateId(2), CandidateId(1), 0.6).is_err());
        assert!(s.insert(CandidateId(3), CandidateId(4), 1.5).is_err());
    }
}
