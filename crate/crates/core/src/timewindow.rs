//! Exact integer-second interval algebra.
//!
//! All availability math in the crate is expressed with [`TimeWindow`] (a
//! half-open `[start, end)` interval in seconds since the start of the week)
//! and [`WindowSet`] (a canonical, sorted, disjoint and coalesced list of
//! windows). Two windows `[a, b)` and `[b, c)` touch but do not overlap, so
//! back-to-back tracks on one antenna are legal.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Seconds since the start of the scheduling week.
pub type Seconds = i64;

pub const SECONDS_PER_HOUR: Seconds = 3600;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WindowError {
    #[error("window start {0} is negative")]
    NegativeStart(Seconds),
    #[error("window [{start}, {end}) is empty or reversed")]
    Empty { start: Seconds, end: Seconds },
}

/// A non-empty half-open interval `[start, end)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[Seconds; 2]", into = "[Seconds; 2]")]
pub struct TimeWindow {
    start: Seconds,
    end: Seconds,
}

impl TimeWindow {
    pub fn new(start: Seconds, end: Seconds) -> Result<Self, WindowError> {
        if start < 0 {
            return Err(WindowError::NegativeStart(start));
        }
        if start >= end {
            return Err(WindowError::Empty { start, end });
        }
        Ok(Self { start, end })
    }

    /// Builds a window that may extend before zero. Only used for flank
    /// probes, which are compared against sets but never stored.
    pub(crate) fn probe(start: Seconds, end: Seconds) -> Option<Self> {
        (start < end).then_some(Self { start, end })
    }

    #[inline]
    pub fn start(&self) -> Seconds {
        self.start
    }

    #[inline]
    pub fn end(&self) -> Seconds {
        self.end
    }

    #[inline]
    pub fn duration(&self) -> Seconds {
        self.end - self.start
    }

    #[inline]
    pub fn contains_instant(&self, t: Seconds) -> bool {
        self.start <= t && t < self.end
    }

    #[inline]
    pub fn contains_window(&self, other: &TimeWindow) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    #[inline]
    pub fn overlaps(&self, other: &TimeWindow) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn intersection(&self, other: &TimeWindow) -> Option<TimeWindow> {
        TimeWindow::probe(self.start.max(other.start), self.end.min(other.end))
    }
}

impl fmt::Debug for TimeWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

impl TryFrom<[Seconds; 2]> for TimeWindow {
    type Error = WindowError;

    fn try_from([start, end]: [Seconds; 2]) -> Result<Self, Self::Error> {
        TimeWindow::new(start, end)
    }
}

impl From<TimeWindow> for [Seconds; 2] {
    fn from(w: TimeWindow) -> Self {
        [w.start, w.end]
    }
}

/// A canonical set of instants, stored as windows that are sorted by start,
/// pairwise disjoint and non-adjacent.
#[derive(Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<TimeWindow>", into = "Vec<TimeWindow>")]
pub struct WindowSet {
    windows: Vec<TimeWindow>,
}

impl WindowSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(window: TimeWindow) -> Self {
        Self {
            windows: vec![window],
        }
    }

    /// Builds a canonical set from arbitrary (possibly overlapping, unsorted)
    /// windows.
    pub fn from_windows<I: IntoIterator<Item = TimeWindow>>(windows: I) -> Self {
        let mut raw: Vec<TimeWindow> = windows.into_iter().collect();
        raw.sort_unstable();
        let mut out: Vec<TimeWindow> = Vec::with_capacity(raw.len());
        for w in raw {
            match out.last_mut() {
                Some(last) if w.start <= last.end => last.end = last.end.max(w.end),
                _ => out.push(w),
            }
        }
        Self { windows: out }
    }

    /// Convenience constructor from `(start, end)` pairs.
    pub fn from_pairs(pairs: &[(Seconds, Seconds)]) -> Result<Self, WindowError> {
        let windows = pairs
            .iter()
            .map(|&(s, e)| TimeWindow::new(s, e))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_windows(windows))
    }

    #[inline]
    pub fn windows(&self) -> &[TimeWindow] {
        &self.windows
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TimeWindow> {
        self.windows.iter()
    }

    pub fn total_duration(&self) -> Seconds {
        self.windows.iter().map(TimeWindow::duration).sum()
    }

    pub fn contains_instant(&self, t: Seconds) -> bool {
        let idx = self.windows.partition_point(|w| w.end <= t);
        self.windows.get(idx).is_some_and(|w| w.contains_instant(t))
    }

    /// True iff `query` lies entirely inside one member window. Because the
    /// set is coalesced this is equivalent to every instant of `query` being
    /// a member.
    pub fn contains(&self, query: &TimeWindow) -> bool {
        let idx = self.windows.partition_point(|w| w.end <= query.start);
        self.windows
            .get(idx)
            .is_some_and(|w| w.contains_window(query))
    }

    /// True iff no member overlaps `query`.
    pub fn is_disjoint_from(&self, query: &TimeWindow) -> bool {
        let idx = self.windows.partition_point(|w| w.end <= query.start);
        self.windows.get(idx).is_none_or(|w| !w.overlaps(query))
    }

    /// Instants in `self` that are not in `holes`.
    pub fn subtract(&self, holes: &WindowSet) -> WindowSet {
        let mut out = Vec::with_capacity(self.windows.len() + holes.windows.len());
        let mut j = 0;
        for w in &self.windows {
            let mut cursor = w.start;
            while j < holes.windows.len() && holes.windows[j].end <= cursor {
                j += 1;
            }
            let mut k = j;
            while k < holes.windows.len() && holes.windows[k].start < w.end {
                let h = holes.windows[k];
                if h.start > cursor {
                    out.push(TimeWindow {
                        start: cursor,
                        end: h.start,
                    });
                }
                cursor = cursor.max(h.end);
                if cursor >= w.end {
                    break;
                }
                k += 1;
            }
            if cursor < w.end {
                out.push(TimeWindow {
                    start: cursor,
                    end: w.end,
                });
            }
        }
        // Pieces of distinct base windows are never adjacent, so `out` is
        // already canonical.
        WindowSet { windows: out }
    }

    /// Removes a single window from the set in place.
    pub fn remove(&mut self, hole: &TimeWindow) {
        *self = self.subtract(&WindowSet::single(*hole));
    }

    pub fn intersect(&self, other: &WindowSet) -> WindowSet {
        let (a, b) = (&self.windows, &other.windows);
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            if let Some(w) = a[i].intersection(&b[j]) {
                out.push(w);
            }
            if a[i].end <= b[j].end {
                i += 1;
            } else {
                j += 1;
            }
        }
        WindowSet { windows: out }
    }

    /// Instants present in every input set; `None` for an empty list.
    pub fn intersect_all<'a, I>(sets: I) -> Option<WindowSet>
    where
        I: IntoIterator<Item = &'a WindowSet>,
    {
        let mut iter = sets.into_iter();
        let mut acc = iter.next()?.clone();
        for s in iter {
            if acc.is_empty() {
                break;
            }
            acc = acc.intersect(s);
        }
        Some(acc)
    }

    pub fn union(&self, other: &WindowSet) -> WindowSet {
        WindowSet::from_windows(self.windows.iter().chain(other.windows.iter()).copied())
    }

    /// Drops member windows shorter than `min`.
    pub fn retain_min_duration(&self, min: Seconds) -> WindowSet {
        WindowSet {
            windows: self
                .windows
                .iter()
                .copied()
                .filter(|w| w.duration() >= min)
                .collect(),
        }
    }

    /// Shrinks every window inward onto a `quantum`-second grid, dropping
    /// windows that vanish.
    pub fn quantize(&self, quantum: Seconds) -> WindowSet {
        assert!(quantum > 0, "quantum must be positive");
        let windows = self
            .windows
            .iter()
            .filter_map(|w| {
                let start = w.start.div_euclid(quantum) * quantum
                    + if w.start.rem_euclid(quantum) == 0 { 0 } else { quantum };
                let end = w.end.div_euclid(quantum) * quantum;
                TimeWindow::probe(start, end)
            })
            .collect();
        WindowSet { windows }
    }

    /// Checks the canonical-form invariants. Used by tests and debug
    /// assertions.
    pub fn is_canonical(&self) -> bool {
        self.windows.iter().all(|w| w.start < w.end && w.start >= 0)
            && self.windows.windows(2).all(|p| p[0].end < p[1].start)
    }
}

impl From<Vec<TimeWindow>> for WindowSet {
    fn from(windows: Vec<TimeWindow>) -> Self {
        WindowSet::from_windows(windows)
    }
}

impl From<WindowSet> for Vec<TimeWindow> {
    fn from(set: WindowSet) -> Self {
        set.windows
    }
}

impl FromIterator<TimeWindow> for WindowSet {
    fn from_iter<I: IntoIterator<Item = TimeWindow>>(iter: I) -> Self {
        WindowSet::from_windows(iter)
    }
}

impl<'a> IntoIterator for &'a WindowSet {
    type Item = &'a TimeWindow;
    type IntoIter = std::slice::Iter<'a, TimeWindow>;

    fn into_iter(self) -> Self::IntoIter {
        self.windows.iter()
    }
}

impl fmt::Debug for WindowSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.windows.iter()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ws(pairs: &[(Seconds, Seconds)]) -> WindowSet {
        WindowSet::from_pairs(pairs).unwrap()
    }

    fn w(s: Seconds, e: Seconds) -> TimeWindow {
        TimeWindow::new(s, e).unwrap()
    }

    /// Per-second membership oracle.
    fn members(set: &WindowSet, horizon: Seconds) -> Vec<bool> {
        (0..horizon)
            .map(|t| set.windows().iter().any(|w| w.start() <= t && t < w.end()))
            .collect()
    }

    #[test]
    fn rejects_empty_and_negative_windows() {
        assert!(matches!(TimeWindow::new(5, 5), Err(WindowError::Empty { .. })));
        assert!(matches!(TimeWindow::new(9, 5), Err(WindowError::Empty { .. })));
        assert!(matches!(TimeWindow::new(-1, 5), Err(WindowError::NegativeStart(-1))));
    }

    #[test]
    fn subtract_examples() {
        assert_eq!(ws(&[(0, 100)]).subtract(&ws(&[(40, 60)])), ws(&[(0, 40), (60, 100)]));
        assert_eq!(ws(&[(0, 100)]).subtract(&WindowSet::new()), ws(&[(0, 100)]));

        let a = ws(&[(0, 50), (70, 120)]);
        let b = ws(&[(30, 80), (110, 200)]);
        let expected = ws(&[(0, 30), (80, 110)]);
        let oracle: Vec<bool> = members(&a, 200)
            .iter()
            .zip(members(&b, 200))
            .map(|(x, y)| *x && !y)
            .collect();
        assert_eq!(members(&expected, 200), oracle);
        assert_eq!(a.subtract(&b), expected);
    }

    #[test]
    fn intersect_all_examples() {
        assert_eq!(WindowSet::intersect_all([&ws(&[(0, 100)])]).unwrap(), ws(&[(0, 100)]));
        assert!(WindowSet::intersect_all([&ws(&[(0, 50)]), &ws(&[(50, 80)])])
            .unwrap()
            .is_empty());
        assert_eq!(
            WindowSet::intersect_all([&ws(&[(0, 60), (80, 120)]), &ws(&[(30, 100)])]).unwrap(),
            ws(&[(30, 60), (80, 100)])
        );
        assert!(WindowSet::intersect_all(std::iter::empty()).is_none());
    }

    #[test]
    fn contains_examples() {
        assert!(ws(&[(0, 100)]).contains(&w(10, 20)));
        assert!(!ws(&[(0, 100)]).contains(&w(90, 110)));
        let coalesced = ws(&[(0, 40), (40, 80)]);
        assert_eq!(coalesced, ws(&[(0, 80)]));
        assert!(coalesced.contains(&w(30, 50)));
    }

    #[test]
    fn total_duration_examples() {
        assert_eq!(WindowSet::new().total_duration(), 0);
        assert_eq!(ws(&[(0, 3600)]).total_duration(), 3600);
        assert_eq!(ws(&[(0, 50), (70, 120)]).total_duration(), 100);
    }

    #[test]
    fn quantize_shrinks_inward() {
        let q = ws(&[(30, 250), (290, 310)]).quantize(60);
        assert_eq!(q, ws(&[(60, 240)]));
    }

    fn arb_set(horizon: Seconds) -> impl Strategy<Value = WindowSet> {
        prop::collection::vec((0..horizon, 1..horizon / 4), 0..8).prop_map(move |v| {
            v.into_iter()
                .filter_map(|(s, len)| TimeWindow::new(s, (s + len).min(horizon)).ok())
                .collect()
        })
    }

    proptest! {
        #[test]
        fn ops_match_membership_oracle(a in arb_set(400), b in arb_set(400), c in arb_set(400)) {
            let (ma, mb, mc) = (members(&a, 400), members(&b, 400), members(&c, 400));
            let sub = a.subtract(&b);
            let int = WindowSet::intersect_all([&a, &b, &c]).unwrap();
            prop_assert!(sub.is_canonical());
            prop_assert!(int.is_canonical());
            let msub = members(&sub, 400);
            let mint = members(&int, 400);
            for t in 0..400 {
                prop_assert_eq!(msub[t], ma[t] && !mb[t]);
                prop_assert_eq!(mint[t], ma[t] && mb[t] && mc[t]);
            }
            let pair = WindowSet::intersect_all([&a, &b]).unwrap();
            prop_assert_eq!(sub.total_duration() + pair.total_duration(), a.total_duration());
        }

        #[test]
        fn union_and_contains_agree_with_oracle(a in arb_set(300), b in arb_set(300), s in 0i64..299, len in 1i64..40) {
            let u = a.union(&b);
            prop_assert!(u.is_canonical());
            let (ma, mb, mu) = (members(&a, 300), members(&b, 300), members(&u, 300));
            for t in 0..300 {
                prop_assert_eq!(mu[t], ma[t] || mb[t]);
            }
            let q = TimeWindow::new(s, (s + len).min(300)).unwrap();
            let inside = (q.start()..q.end()).all(|t| ma[t as usize]);
            prop_assert_eq!(a.contains(&q), inside);
            let disjoint = (q.start()..q.end()).all(|t| !ma[t as usize]);
            prop_assert_eq!(a.is_disjoint_from(&q), disjoint);
        }
    }
}
