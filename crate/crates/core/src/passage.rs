//! Passage times and geodesics inside a finite box.
//!
//! All shortest-path work goes through [`sweep`], a binary-heap label-setting
//! search from a source set. Ties between equal tentative distances are
//! broken towards the lexicographically smallest parent vertex, and heap ties
//! towards the smallest vertex, so every result is deterministic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{FppError, Result};
use crate::lattice::{Axis, Direction, DomainBox, EdgeId, Vertex};
use crate::line_geometry::LinearFunctional;
use crate::scalar::Scalar;
use crate::weight_field::WeightField;

const NO_PARENT: u32 = u32::MAX;

/// Edge weights of one box, materialised from a field (or a fixture).
#[derive(Clone, Debug)]
pub struct Environment<T> {
    domain: DomainBox,
    /// weight of `(v, v + e1)`, indexed by `v`; NaN past the right edge.
    east: Vec<T>,
    /// weight of `(v, v + e2)`, indexed by `v`; NaN past the top edge.
    north: Vec<T>,
    field: Option<WeightField>,
}

impl<T: Scalar> Environment<T> {
    pub fn new(field: &WeightField, domain: DomainBox) -> Self {
        let mut env = Self::from_fn(domain, |e| field.weight::<T>(e));
        env.field = Some(*field);
        env
    }

    /// Fixture constructor: weights given by an arbitrary function of the edge.
    pub fn from_fn(domain: DomainBox, mut w: impl FnMut(EdgeId) -> T) -> Self {
        let n = domain.len();
        let mut east = vec![T::nan(); n];
        let mut north = vec![T::nan(); n];
        for (i, v) in domain.vertices().enumerate() {
            if domain.contains(v + Axis::E1.unit()) {
                east[i] = w(EdgeId::new(v, Axis::E1));
            }
            if domain.contains(v + Axis::E2.unit()) {
                north[i] = w(EdgeId::new(v, Axis::E2));
            }
        }
        Environment {
            domain,
            east,
            north,
            field: None,
        }
    }

    #[inline]
    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn field(&self) -> Option<&WeightField> {
        self.field.as_ref()
    }

    /// Weight of the edge leaving `idx` in direction `dir`. The caller must
    /// know that the other endpoint is inside the box.
    #[inline]
    pub fn weight_dir(&self, idx: usize, dir: Direction) -> T {
        let side = self.domain.side();
        match dir {
            Direction::PlusE1 => self.east[idx],
            Direction::MinusE1 => self.east[idx - side],
            Direction::PlusE2 => self.north[idx],
            Direction::MinusE2 => self.north[idx - 1],
        }
    }

    pub fn weight(&self, e: EdgeId) -> Option<T> {
        let (u, v) = e.endpoints();
        if !self.domain.contains(v) {
            return None;
        }
        let i = self.domain.index(u)?;
        Some(match e.axis {
            Axis::E1 => self.east[i],
            Axis::E2 => self.north[i],
        })
    }

    pub fn weight_between(&self, u: Vertex, v: Vertex) -> Option<T> {
        EdgeId::between(u, v).and_then(|e| self.weight(e))
    }

    /// Sum of edge weights along `path`, accumulated in the listed order.
    pub fn path_time(&self, path: &[Vertex]) -> Result<T> {
        let mut t = T::zero();
        for w in path.windows(2) {
            let we = self.weight_between(w[0], w[1]).ok_or_else(|| {
                FppError::Structural(format!("{} -> {} is not an in-box edge", w[0], w[1]))
            })?;
            t = t + we;
        }
        Ok(t)
    }

    /// Path time summed from the lexicographically smaller endpoint, so the
    /// value does not depend on the direction the path is listed in.
    pub fn canonical_path_time(&self, path: &[Vertex]) -> Result<T> {
        match (path.first(), path.last()) {
            (Some(a), Some(b)) if b < a => {
                let rev: Vec<Vertex> = path.iter().rev().copied().collect();
                self.path_time(&rev)
            }
            _ => self.path_time(path),
        }
    }
}

/// A lattice path with its passage time.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicPath<T> {
    pub vertices: Vec<Vertex>,
    pub total_time: T,
}

impl<T: Scalar> GeodesicPath<T> {
    pub fn start(&self) -> Vertex {
        self.vertices[0]
    }

    pub fn end(&self) -> Vertex {
        *self.vertices.last().expect("paths are nonempty")
    }

    pub fn len_edges(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn touches_boundary(&self, domain: &DomainBox) -> bool {
        self.vertices.iter().any(|v| domain.on_boundary(*v))
    }

    /// Smallest ℓ∞ distance from the path to the boundary of `domain`.
    pub fn min_depth(&self, domain: &DomainBox) -> i32 {
        self.vertices
            .iter()
            .map(|v| domain.depth(*v))
            .min()
            .unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug)]
struct HeapItem<T> {
    dist: T,
    idx: u32,
}

impl<T: Scalar> PartialEq for HeapItem<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for HeapItem<T> {}

impl<T: Scalar> PartialOrd for HeapItem<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for HeapItem<T> {
    // max-heap: smallest distance, then smallest index, pops first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

/// Distance map and shortest-path forest from a source set.
#[derive(Clone, Debug)]
pub struct PassageResult<T> {
    domain: DomainBox,
    sources: Vec<Vertex>,
    dist: Vec<T>,
    parent: Vec<u32>,
    complete: bool,
}

impl<T: Scalar> PassageResult<T> {
    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn sources(&self) -> &[Vertex] {
        &self.sources
    }

    /// Whether every vertex of the box was settled.
    pub fn is_complete(&self) -> bool {
        self.complete
    }

    /// Raw distance array in box index order; `+inf` marks unsettled vertices.
    pub fn dist_slice(&self) -> &[T] {
        &self.dist
    }

    #[doc(hidden)]
    pub fn dist_slice_mut(&mut self) -> &mut [T] {
        &mut self.dist
    }

    #[inline]
    pub fn dist_idx(&self, idx: usize) -> T {
        self.dist[idx]
    }

    /// `τ(v, sources)`, or `None` outside the box or if `v` was not settled.
    pub fn dist(&self, v: Vertex) -> Option<T> {
        let i = self.domain.index(v)?;
        let d = self.dist[i];
        d.is_finite().then_some(d)
    }

    pub fn try_dist(&self, v: Vertex) -> Result<T> {
        self.dist(v).ok_or_else(|| {
            if self.domain.contains(v) {
                FppError::Internal(format!("{v} was not reached by the sweep"))
            } else {
                FppError::OutOfDomain(v)
            }
        })
    }

    pub fn parent(&self, v: Vertex) -> Option<Vertex> {
        let i = self.domain.index(v)?;
        let p = self.parent[i];
        (p != NO_PARENT).then(|| self.domain.vertex(p as usize))
    }

    #[inline]
    pub fn parent_idx(&self, idx: usize) -> Option<usize> {
        let p = self.parent[idx];
        (p != NO_PARENT).then_some(p as usize)
    }

    /// Vertices from `v` along parent links to the source set.
    pub fn path_to_source(&self, v: Vertex) -> Result<Vec<Vertex>> {
        let mut i = self.domain.try_index(v)?;
        if !self.dist[i].is_finite() {
            return Err(FppError::Internal(format!("{v} was not reached by the sweep")));
        }
        let mut out = vec![v];
        while let Some(p) = self.parent_idx(i) {
            out.push(self.domain.vertex(p));
            if out.len() > self.domain.len() {
                return Err(FppError::Structural("parent links contain a cycle".into()));
            }
            i = p;
        }
        Ok(out)
    }
}

/// Label-setting search from `sources`. If `stop_at` is nonempty the search
/// ends as soon as all of those vertices are settled, and every unsettled
/// vertex is reported at distance `+inf`.
pub fn sweep<T: Scalar>(
    env: &Environment<T>,
    sources: &[Vertex],
    stop_at: &[Vertex],
) -> Result<PassageResult<T>> {
    sweep_within(env, sources, stop_at, |_| true)
}

/// [`sweep`] restricted to the vertices (by box index) accepted by
/// `allowed`; sources are always admitted.
pub fn sweep_within<T: Scalar, F: Fn(usize) -> bool>(
    env: &Environment<T>,
    sources: &[Vertex],
    stop_at: &[Vertex],
    allowed: F,
) -> Result<PassageResult<T>> {
    let domain = *env.domain();
    if sources.is_empty() {
        return Err(FppError::Precondition("empty source set".into()));
    }
    let n = domain.len();
    let mut dist = vec![T::infinity(); n];
    let mut parent = vec![NO_PARENT; n];
    let mut settled = vec![false; n];
    let mut is_source = vec![false; n];
    let mut heap = BinaryHeap::with_capacity(4 * domain.side() + sources.len());

    for s in sources {
        let i = domain.try_index(*s)?;
        if !is_source[i] {
            is_source[i] = true;
            dist[i] = T::zero();
            heap.push(HeapItem {
                dist: T::zero(),
                idx: i as u32,
            });
        }
    }

    let mut pending: Vec<usize> = stop_at
        .iter()
        .map(|v| domain.try_index(*v))
        .collect::<Result<_>>()?;
    pending.sort_unstable();
    pending.dedup();
    let mut remaining = pending.len();
    let mut is_stop = vec![false; if remaining > 0 { n } else { 0 }];
    for &i in &pending {
        is_stop[i] = true;
    }

    let mut settled_count = 0usize;
    while let Some(HeapItem { dist: d, idx }) = heap.pop() {
        let u = idx as usize;
        if settled[u] || d > dist[u] {
            continue;
        }
        settled[u] = true;
        settled_count += 1;
        if remaining > 0 && is_stop[u] {
            remaining -= 1;
            if remaining == 0 {
                break;
            }
        }
        for (dir, v) in domain.neighbors(u) {
            if settled[v] || is_source[v] || !allowed(v) {
                continue;
            }
            let nd = d + env.weight_dir(u, dir);
            if nd < dist[v] {
                dist[v] = nd;
                parent[v] = u as u32;
                heap.push(HeapItem {
                    dist: nd,
                    idx: v as u32,
                });
            } else if nd == dist[v] && (u as u32) < parent[v] {
                parent[v] = u as u32;
            }
        }
    }

    let complete = settled_count == n;
    if !complete {
        for i in 0..n {
            if !settled[i] {
                dist[i] = T::infinity();
                parent[i] = NO_PARENT;
            }
        }
    }
    Ok(PassageResult {
        domain,
        sources: sources.to_vec(),
        dist,
        parent,
        complete,
    })
}

/// `τ(x, targets)` restricted to in-box paths, with the minimising path from
/// `x` to the target set. The value is the canonical path time.
pub fn tau_to_set<T: Scalar>(
    env: &Environment<T>,
    x: Vertex,
    targets: &[Vertex],
) -> Result<(T, GeodesicPath<T>)> {
    env.domain().try_index(x)?;
    if targets.is_empty() {
        return Err(FppError::Precondition("empty target set".into()));
    }
    if targets.contains(&x) {
        return Ok((
            T::zero(),
            GeodesicPath {
                vertices: vec![x],
                total_time: T::zero(),
            },
        ));
    }
    let res = sweep(env, targets, &[x])?;
    let vertices = res.path_to_source(x)?;
    let total_time = env.canonical_path_time(&vertices)?;
    Ok((
        total_time,
        GeodesicPath {
            vertices,
            total_time,
        },
    ))
}

/// Point-to-point passage time. The search runs from the lexicographically
/// smaller endpoint so `tau_point(x, y)` and `tau_point(y, x)` agree bit for bit.
pub fn tau_point<T: Scalar>(
    env: &Environment<T>,
    x: Vertex,
    y: Vertex,
) -> Result<(T, GeodesicPath<T>)> {
    env.domain().try_index(x)?;
    env.domain().try_index(y)?;
    if x == y {
        return Ok((
            T::zero(),
            GeodesicPath {
                vertices: vec![x],
                total_time: T::zero(),
            },
        ));
    }
    let (lo, hi) = if x < y { (x, y) } else { (y, x) };
    let res = sweep(env, &[lo], &[hi])?;
    let mut vertices = res.path_to_source(hi)?;
    let total_time = res.try_dist(hi)?;
    if vertices[0] != x {
        vertices.reverse();
    }
    Ok((
        total_time,
        GeodesicPath {
            vertices,
            total_time,
        },
    ))
}

/// Vertices at which a complete potential fails the Bellman equation
/// `d(u) = min_v d(v) + ω(u,v)` (or `d(s) = 0` on sources), up to
/// `rel_tol · max(|d(u)|, 1)`.
pub fn bellman_violations<T: Scalar>(env: &Environment<T>, pot: &PassageResult<T>, rel_tol: f64) -> Vec<Vertex> {
    let domain = env.domain();
    let mut is_source = vec![false; domain.len()];
    for s in pot.sources() {
        if let Some(i) = domain.index(*s) {
            is_source[i] = true;
        }
    }
    let tol = T::of(rel_tol);
    (0..domain.len())
        .filter(|&u| {
            let du = pot.dist_idx(u);
            let best = if is_source[u] {
                T::zero()
            } else {
                domain
                    .neighbors(u)
                    .map(|(dir, v)| pot.dist_idx(v) + env.weight_dir(u, dir))
                    .fold(T::infinity(), |a, b| a.min(b))
            };
            !((du - best).abs() <= tol * du.abs().max(T::one()))
        })
        .map(|u| domain.vertex(u))
        .collect()
}

/// Exact minimum over all self-avoiding in-box paths between `x` and `y`, by
/// exhaustive depth-first enumeration (with the usual cost bound). Only boxes
/// of half-width at most 3 are accepted.
pub fn brute_force_tau<T: Scalar>(env: &Environment<T>, x: Vertex, y: Vertex) -> Result<T> {
    let domain = *env.domain();
    if domain.half_width() > 3 {
        return Err(FppError::TooLarge(domain.half_width()));
    }
    let xi = domain.try_index(x)?;
    let yi = domain.try_index(y)?;
    if xi == yi {
        return Ok(T::zero());
    }
    // accumulate from the smaller endpoint, like tau_point
    let (from, to) = if x < y { (xi, yi) } else { (yi, xi) };

    struct Search<'a, T> {
        env: &'a Environment<T>,
        target: usize,
        best: T,
    }

    fn dfs<T: Scalar>(s: &mut Search<'_, T>, u: usize, cost: T, visited: u64) {
        if u == s.target {
            if cost < s.best {
                s.best = cost;
            }
            return;
        }
        let domain = *s.env.domain();
        for (dir, v) in domain.neighbors(u) {
            if visited & (1u64 << v) != 0 {
                continue;
            }
            let c = cost + s.env.weight_dir(u, dir);
            if c >= s.best {
                continue;
            }
            dfs(s, v, c, visited | (1u64 << v));
        }
    }

    let mut s = Search {
        env,
        target: to,
        best: T::infinity(),
    };
    dfs(&mut s, from, T::zero(), 1u64 << from);
    if s.best.is_finite() {
        Ok(s.best)
    } else {
        Err(FppError::Internal("no path between in-box vertices".into()))
    }
}

/// Value range of `coef * t` for `t ∈ [c - 1/2, c + 1/2)`, with closedness flags.
#[derive(Clone, Copy)]
struct HalfOpenRange {
    lo: f64,
    lo_closed: bool,
    hi: f64,
    hi_closed: bool,
}

impl HalfOpenRange {
    fn of(coef: f64, c: i32) -> Self {
        let l = c as f64 - 0.5;
        let r = c as f64 + 0.5;
        if coef > 0.0 {
            HalfOpenRange {
                lo: coef * l,
                lo_closed: true,
                hi: coef * r,
                hi_closed: false,
            }
        } else if coef < 0.0 {
            HalfOpenRange {
                lo: coef * r,
                lo_closed: false,
                hi: coef * l,
                hi_closed: true,
            }
        } else {
            HalfOpenRange {
                lo: 0.0,
                lo_closed: true,
                hi: 0.0,
                hi_closed: true,
            }
        }
    }

    fn plus(self, o: Self) -> Self {
        HalfOpenRange {
            lo: self.lo + o.lo,
            lo_closed: self.lo_closed && o.lo_closed,
            hi: self.hi + o.hi,
            hi_closed: self.hi_closed && o.hi_closed,
        }
    }

    fn contains(&self, a: f64) -> bool {
        (a > self.lo || (a == self.lo && self.lo_closed))
            && (a < self.hi || (a == self.hi && self.hi_closed))
    }
}

/// Whether the cell `y + [-1/2, 1/2)²` meets the line `{functional = alpha}`.
pub fn cell_meets_line(functional: &LinearFunctional, alpha: f64, y: Vertex) -> bool {
    HalfOpenRange::of(functional.a, y.x)
        .plus(HalfOpenRange::of(functional.b, y.y))
        .contains(alpha)
}

/// The in-box vertices whose unit cell meets the line `{functional = alpha}`,
/// in index order.
pub fn discretize_line(
    functional: &LinearFunctional,
    alpha: f64,
    domain: &DomainBox,
) -> Result<Vec<Vertex>> {
    let (a, b) = (functional.a, functional.b);
    if !(a.is_finite() && b.is_finite()) || (a == 0.0 && b == 0.0) {
        return Err(FppError::Precondition(format!(
            "degenerate functional ({a}, {b})"
        )));
    }
    let c = domain.center();
    let n = domain.half_width();
    let mut out = Vec::new();
    if a.abs() >= b.abs() {
        // solve for x in each row
        let slack = 0.5 * (b / a).abs() + 1.5;
        for y in (c.y - n)..=(c.y + n) {
            let x0 = (alpha - b * y as f64) / a;
            let lo = ((x0 - slack).floor() as i64).max((c.x - n) as i64) as i32;
            let hi = ((x0 + slack).ceil() as i64).min((c.x + n) as i64) as i32;
            for x in lo..=hi {
                let v = Vertex::new(x, y);
                if cell_meets_line(functional, alpha, v) {
                    out.push(v);
                }
            }
        }
    } else {
        let slack = 0.5 * (a / b).abs() + 1.5;
        for x in (c.x - n)..=(c.x + n) {
            let y0 = (alpha - a * x as f64) / b;
            let lo = ((y0 - slack).floor() as i64).max((c.y - n) as i64) as i32;
            let hi = ((y0 + slack).ceil() as i64).min((c.y + n) as i64) as i32;
            for y in lo..=hi {
                let v = Vertex::new(x, y);
                if cell_meets_line(functional, alpha, v) {
                    out.push(v);
                }
            }
        }
    }
    if out.is_empty() {
        return Err(FppError::EmptyTarget {
            functional: functional.to_string(),
            alpha,
        });
    }
    out.sort_unstable();
    Ok(out)
}
