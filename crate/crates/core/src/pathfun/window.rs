//! Trailing storage of scheme grid points and per-interval suprema.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Read-only piece of a path: the grid points from a shift origin up to the
/// stepwise reading of `origin + T`, plus the running supremum of the first
/// coordinate when the owner tracks it.
#[derive(Debug, Clone, Copy)]
pub struct PathSpan<'a> {
    dim: usize,
    times: &'a [f64],
    values: &'a [f64],
    sup: Option<f64>,
}

impl<'a> PathSpan<'a> {
    pub fn new(dim: usize, times: &'a [f64], values: &'a [f64], sup: Option<f64>) -> Self {
        assert!(!times.is_empty(), "path span needs at least one point");
        assert_eq!(times.len() * dim, values.len(), "values must hold dim entries per time");
        Self {
            dim,
            times,
            values,
            sup,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn origin_time(&self) -> f64 {
        self.times[0]
    }

    pub fn times(&self) -> &'a [f64] {
        self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn point(&self, i: usize) -> &'a [f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn start(&self) -> &'a [f64] {
        self.point(0)
    }

    pub fn terminal(&self) -> &'a [f64] {
        self.point(self.times.len() - 1)
    }

    /// Stepwise reading at `origin + offset`: the last grid value at or
    /// before that time, clamped to the span.
    pub fn value_at(&self, offset: f64) -> &'a [f64] {
        let t = self.times[0] + offset;
        let i = self.times.partition_point(|&s| s <= t).max(1) - 1;
        self.point(i)
    }

    /// Supremum of the first coordinate over the covered grid intervals.
    pub fn running_max(&self) -> Option<f64> {
        self.sup
    }
}

/// Contiguous FIFO of fixed-width records that drops from the front in
/// amortized O(1).
#[derive(Debug, Clone, Default)]
struct Fifo {
    buf: Vec<f64>,
    head: usize,
}

impl Fifo {
    fn live(&self) -> &[f64] {
        &self.buf[self.head..]
    }

    fn push(&mut self, xs: &[f64]) {
        self.buf.extend_from_slice(xs);
    }

    fn drop_front(&mut self, n: usize) {
        self.head += n;
        debug_assert!(self.head <= self.buf.len());
        if self.head >= 4096 && self.head * 2 >= self.buf.len() {
            self.buf.drain(..self.head);
            self.head = 0;
        }
    }
}

/// Grid points `(Γ_l, x_l)` for `l ≥ first_index()`, and optionally the
/// interval suprema `V_l = sup_{[Γ_l, Γ_{l+1}]}` of the first coordinate.
///
/// The sliding maximum of the `V_l` from the oldest retained origin onward is
/// kept in a monotone deque, so repeated queries as the origin advances cost
/// amortized O(1).
#[derive(Debug, Clone)]
pub struct PathWindow {
    dim: usize,
    base: usize,
    times: Fifo,
    values: Fifo,
    sups: Option<SupTrack>,
}

#[derive(Debug, Clone, Default)]
struct SupTrack {
    vals: Fifo,
    // (interval index, V), values strictly decreasing from front to back
    maxq: VecDeque<(usize, f64)>,
}

impl PathWindow {
    pub fn new(dim: usize, track_sups: bool) -> Self {
        Self {
            dim,
            base: 0,
            times: Fifo::default(),
            values: Fifo::default(),
            sups: track_sups.then(SupTrack::default),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tracks_sups(&self) -> bool {
        self.sups.is_some()
    }

    /// Absolute grid index of the oldest retained point.
    pub fn first_index(&self) -> usize {
        self.base
    }

    pub fn len(&self) -> usize {
        self.times.live().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Absolute index of the newest point. Panics on an empty window.
    pub fn last_index(&self) -> usize {
        assert!(!self.is_empty(), "empty path window");
        self.base + self.len() - 1
    }

    pub fn time(&self, index: usize) -> f64 {
        self.times.live()[index - self.base]
    }

    pub fn value(&self, index: usize) -> &[f64] {
        let i = index - self.base;
        &self.values.live()[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.live().last().copied()
    }

    /// Appends grid point `last_index() + 1`.
    pub fn push_point(&mut self, time: f64, value: &[f64]) {
        assert_eq!(value.len(), self.dim);
        if let Some(prev) = self.last_time() {
            assert!(time > prev, "grid times must increase: {prev} then {time}");
        }
        self.times.push(&[time]);
        self.values.push(value);
    }

    /// Records `V_l` for the interval ending at the newest point.
    pub fn push_interval_sup(&mut self, v: f64) {
        let points = self.len();
        let base = self.base;
        let track = self.sups.as_mut().expect("window does not track interval suprema");
        let intervals = track.vals.live().len();
        assert_eq!(intervals + 2, points, "interval supremum pushed out of order");
        let index = base + intervals;
        track.vals.push(&[v]);
        while track.maxq.back().is_some_and(|&(_, b)| b <= v) {
            track.maxq.pop_back();
        }
        track.maxq.push_back((index, v));
    }

    /// Forget every point and interval with index `< index`.
    pub fn release_before(&mut self, index: usize) {
        if index <= self.base {
            return;
        }
        let n = (index - self.base).min(self.len());
        self.times.drop_front(n);
        self.values.drop_front(n * self.dim);
        if let Some(track) = self.sups.as_mut() {
            let m = n.min(track.vals.live().len());
            track.vals.drop_front(m);
            while track.maxq.front().is_some_and(|&(i, _)| i < index) {
                track.maxq.pop_front();
            }
        }
        self.base += n;
    }

    /// Maximum of `V_l` over `first..=last` (absolute interval indices).
    pub fn sup_over(&self, first: usize, last: usize) -> Option<f64> {
        let track = self.sups.as_ref()?;
        let intervals = track.vals.live().len();
        if first < self.base || last >= self.base + intervals || first > last {
            return None;
        }
        if first == self.base && last + 1 == self.base + intervals {
            return track.maxq.front().map(|&(_, v)| v);
        }
        Some(
            track.vals.live()[first - self.base..=last - self.base]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max),
        )
    }

    /// Span from grid point `origin` to grid point `terminal`, with the
    /// supremum taken over intervals `origin..=last_interval` when tracked.
    pub fn span(&self, origin: usize, terminal: usize, last_interval: usize) -> PathSpan<'_> {
        assert!(origin >= self.base && terminal <= self.last_index() && origin <= terminal);
        let lo = origin - self.base;
        let hi = terminal - self.base + 1;
        PathSpan::new(
            self.dim,
            &self.times.live()[lo..hi],
            &self.values.live()[lo * self.dim..hi * self.dim],
            self.sup_over(origin, last_interval),
        )
    }

    /// Span for a shift origin at time `u` and horizon `horizon`, following
    /// the whole-interval convention: terminal point `N(u + T)`, suprema over
    /// intervals up to `N(u + T)`, which requires `Γ_{N(u+T)+1}` to be
    /// retained.
    pub fn span_at_time(&self, u: f64, horizon: f64) -> Result<PathSpan<'_>> {
        let coverage = |retained_end: f64| Error::InsufficientCoverage {
            from: u,
            to: u + horizon,
            retained_end,
        };
        let times = self.times.live();
        let end = self.last_time().ok_or_else(|| coverage(f64::NAN))?;
        let i = times.partition_point(|&s| s < u);
        if i == times.len() || times[i] != u {
            return Err(coverage(end));
        }
        let origin = self.base + i;
        let t_end = u + horizon;
        let terminal = self.base + times.partition_point(|&s| s <= t_end) - 1;
        if terminal >= self.last_index() {
            return Err(coverage(end));
        }
        Ok(self.span(origin, terminal, terminal))
    }
}

/// A fully stored path on an arbitrary increasing grid.
#[derive(Debug, Clone)]
pub struct GridPath {
    pub dim: usize,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridPath {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, points: usize) -> Self {
        Self {
            dim,
            times: Vec::with_capacity(points),
            values: Vec::with_capacity(points * dim),
        }
    }

    pub fn push(&mut self, time: f64, value: &[f64]) {
        self.times.push(time);
        self.values.extend_from_slice(value);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Span over points `origin..=terminal`; the supremum reads the grid
    /// values of the first coordinate (linear interpolation between points).
    pub fn span(&self, origin: usize, terminal: usize, with_sup: bool) -> PathSpan<'_> {
        let sup = with_sup.then(|| {
            (origin..=terminal)
                .map(|i| self.values[i * self.dim])
                .fold(f64::NEG_INFINITY, f64::max)
        });
        PathSpan::new(
            self.dim,
            &self.times[origin..=terminal],
            &self.values[origin * self.dim..(terminal + 1) * self.dim],
            sup,
        )
    }
}
