//! Strict preference orders.
//!
//! Every comparison between two partners goes through a [`PrefKey`]: the
//! utility first and an independent tie-break word second, so that atomic
//! score distributions still yield strict orders.

use std::cmp::Ordering;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrefKey {
    pub utility: f64,
    pub tiebreak: u64,
}

impl PrefKey {
    pub fn new(utility: f64, tiebreak: u64) -> Self {
        PrefKey { utility, tiebreak }
    }
}

impl Eq for PrefKey {}

impl PartialOrd for PrefKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PrefKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.utility
            .total_cmp(&other.utility)
            .then(self.tiebreak.cmp(&other.tiebreak))
    }
}

/// A source of strict preferences over neighbours. Larger keys are preferred.
pub trait Preferences {
    fn key(&self, viewer: usize, target: usize) -> PrefKey;

    fn prefers(&self, viewer: usize, x: usize, y: usize) -> bool {
        self.key(viewer, x) > self.key(viewer, y)
    }
}

impl<P: Preferences + ?Sized> Preferences for &P {
    fn key(&self, viewer: usize, target: usize) -> PrefKey {
        (**self).key(viewer, target)
    }
}

/// Preferences given by explicit ranked lists, most preferred first.
///
/// Targets missing from a viewer's list are ranked below every listed one.
#[derive(Clone, Debug, Default)]
pub struct RankedLists {
    lists: Vec<Vec<usize>>,
}

impl RankedLists {
    pub fn new(lists: Vec<Vec<usize>>) -> Self {
        RankedLists { lists }
    }

    pub fn list(&self, viewer: usize) -> &[usize] {
        self.lists.get(viewer).map(Vec::as_slice).unwrap_or(&[])
    }

    /// 0-based position of `target` in `viewer`'s list.
    pub fn position(&self, viewer: usize, target: usize) -> Option<usize> {
        self.list(viewer).iter().position(|&t| t == target)
    }
}

impl Preferences for RankedLists {
    fn key(&self, viewer: usize, target: usize) -> PrefKey {
        match self.position(viewer, target) {
            Some(r) => PrefKey::new(-(r as f64), target as u64),
            None => PrefKey::new(f64::NEG_INFINITY, target as u64),
        }
    }
}
