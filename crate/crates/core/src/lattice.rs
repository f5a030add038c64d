//! Vertices, edges and finite square boxes of Z².

use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{FppError, Result};

/// A vertex of Z². Ordering is lexicographic in `(x, y)`, which is the
/// order used by every tie-break in the crate.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Vertex {
    pub x: i32,
    pub y: i32,
}

impl Vertex {
    pub const ORIGIN: Vertex = Vertex { x: 0, y: 0 };

    #[inline]
    pub const fn new(x: i32, y: i32) -> Self {
        Vertex { x, y }
    }

    #[inline]
    pub fn l1(self) -> i64 {
        (self.x as i64).abs() + (self.y as i64).abs()
    }

    #[inline]
    pub fn linf(self) -> i32 {
        self.x.abs().max(self.y.abs())
    }

    #[inline]
    pub fn l2(self) -> f64 {
        (self.x as f64).hypot(self.y as f64)
    }

    #[inline]
    pub fn dot(self, other: Vertex) -> i64 {
        self.x as i64 * other.x as i64 + self.y as i64 * other.y as i64
    }

    #[inline]
    pub fn step(self, dir: Direction) -> Vertex {
        self + dir.offset()
    }

    pub fn is_adjacent(self, other: Vertex) -> bool {
        (self - other).l1() == 1
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

impl Add for Vertex {
    type Output = Vertex;
    #[inline]
    fn add(self, o: Vertex) -> Vertex {
        Vertex::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vertex {
    type Output = Vertex;
    #[inline]
    fn sub(self, o: Vertex) -> Vertex {
        Vertex::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vertex {
    type Output = Vertex;
    #[inline]
    fn neg(self) -> Vertex {
        Vertex::new(-self.x, -self.y)
    }
}

/// Coordinate axis; `E1` is horizontal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Axis {
    E1,
    E2,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::E1, Axis::E2];

    #[inline]
    pub fn unit(self) -> Vertex {
        match self {
            Axis::E1 => Vertex::new(1, 0),
            Axis::E2 => Vertex::new(0, 1),
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Axis::E1 => 0,
            Axis::E2 => 1,
        }
    }
}

/// The four nearest-neighbour steps. `ALL` lists them so that the resulting
/// neighbours come out in lexicographic order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    MinusE1,
    MinusE2,
    PlusE2,
    PlusE1,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::MinusE1,
        Direction::MinusE2,
        Direction::PlusE2,
        Direction::PlusE1,
    ];

    #[inline]
    pub fn offset(self) -> Vertex {
        match self {
            Direction::MinusE1 => Vertex::new(-1, 0),
            Direction::MinusE2 => Vertex::new(0, -1),
            Direction::PlusE2 => Vertex::new(0, 1),
            Direction::PlusE1 => Vertex::new(1, 0),
        }
    }

    #[inline]
    pub fn bit(self) -> u8 {
        match self {
            Direction::MinusE1 => 1,
            Direction::MinusE2 => 2,
            Direction::PlusE2 => 4,
            Direction::PlusE1 => 8,
        }
    }

    pub fn from_offset(d: Vertex) -> Option<Direction> {
        Direction::ALL.into_iter().find(|dir| dir.offset() == d)
    }
}

/// Canonical name of an undirected nearest-neighbour edge: the edge from
/// `base` to `base + axis`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeId {
    pub base: Vertex,
    pub axis: Axis,
}

impl EdgeId {
    pub fn new(base: Vertex, axis: Axis) -> Self {
        EdgeId { base, axis }
    }

    /// The canonical id of the edge `{u, v}`, or `None` if they are not adjacent.
    pub fn between(u: Vertex, v: Vertex) -> Option<EdgeId> {
        let (lo, hi) = if u < v { (u, v) } else { (v, u) };
        match hi - lo {
            Vertex { x: 1, y: 0 } => Some(EdgeId::new(lo, Axis::E1)),
            Vertex { x: 0, y: 1 } => Some(EdgeId::new(lo, Axis::E2)),
            _ => None,
        }
    }

    pub fn endpoints(self) -> (Vertex, Vertex) {
        (self.base, self.base + self.axis.unit())
    }

    pub fn translate(self, v: Vertex) -> EdgeId {
        EdgeId::new(self.base + v, self.axis)
    }
}

/// The square `center + [-N, N]²` of Z². Vertices are indexed row-major in
/// `(x, y)` so index order agrees with the lexicographic vertex order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DomainBox {
    half_width: i32,
    center: Vertex,
}

impl DomainBox {
    pub fn new(half_width: i32) -> Result<Self> {
        Self::centered_at(Vertex::ORIGIN, half_width)
    }

    pub fn centered_at(center: Vertex, half_width: i32) -> Result<Self> {
        if half_width < 1 {
            return Err(FppError::Config(format!(
                "box half-width must be >= 1, got {half_width}"
            )));
        }
        if half_width > 20_000 {
            return Err(FppError::Config(format!(
                "box half-width {half_width} is unreasonably large"
            )));
        }
        Ok(DomainBox { half_width, center })
    }

    /// A box that may be degenerate (half-width 0), used for the `[-m, m]²`
    /// windows of cylinder events.
    pub fn window(half_width: i32) -> Self {
        DomainBox {
            half_width: half_width.max(0),
            center: Vertex::ORIGIN,
        }
    }

    #[inline]
    pub fn half_width(&self) -> i32 {
        self.half_width
    }

    #[inline]
    pub fn center(&self) -> Vertex {
        self.center
    }

    #[inline]
    pub fn side(&self) -> usize {
        (2 * self.half_width + 1) as usize
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.side() * self.side()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn translated(&self, v: Vertex) -> DomainBox {
        DomainBox {
            half_width: self.half_width,
            center: self.center + v,
        }
    }

    #[inline]
    pub fn contains(&self, v: Vertex) -> bool {
        let d = v - self.center;
        d.x.abs() <= self.half_width && d.y.abs() <= self.half_width
    }

    pub fn contains_box(&self, other: &DomainBox) -> bool {
        let d = other.center - self.center;
        d.x.abs() + other.half_width <= self.half_width
            && d.y.abs() + other.half_width <= self.half_width
    }

    #[inline]
    pub fn on_boundary(&self, v: Vertex) -> bool {
        let d = v - self.center;
        self.contains(v) && (d.x.abs() == self.half_width || d.y.abs() == self.half_width)
    }

    /// Distance (ℓ∞) from `v` to the boundary of the box; 0 on the boundary.
    pub fn depth(&self, v: Vertex) -> i32 {
        let d = v - self.center;
        self.half_width - d.x.abs().max(d.y.abs())
    }

    #[inline]
    pub fn index(&self, v: Vertex) -> Option<usize> {
        if self.contains(v) {
            Some(self.index_unchecked(v))
        } else {
            None
        }
    }

    #[inline]
    pub fn index_unchecked(&self, v: Vertex) -> usize {
        let d = v - self.center;
        let n = self.half_width;
        (d.x + n) as usize * self.side() + (d.y + n) as usize
    }

    pub fn try_index(&self, v: Vertex) -> Result<usize> {
        self.index(v).ok_or(FppError::OutOfDomain(v))
    }

    #[inline]
    pub fn vertex(&self, idx: usize) -> Vertex {
        let side = self.side();
        let n = self.half_width;
        Vertex::new(
            (idx / side) as i32 - n + self.center.x,
            (idx % side) as i32 - n + self.center.y,
        )
    }

    /// In-box neighbours of `idx` in lexicographic order.
    #[inline]
    pub fn neighbors(&self, idx: usize) -> impl Iterator<Item = (Direction, usize)> + '_ {
        let v = self.vertex(idx);
        Direction::ALL
            .into_iter()
            .filter_map(move |d| self.index(v.step(d)).map(|j| (d, j)))
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        (0..self.len()).map(move |i| self.vertex(i))
    }

    pub fn boundary_vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        self.vertices().filter(move |v| self.on_boundary(*v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_order_is_lexicographic() {
        let b = DomainBox::new(3).unwrap();
        let vs: Vec<Vertex> = b.vertices().collect();
        let mut sorted = vs.clone();
        sorted.sort();
        assert_eq!(vs, sorted);
        for (i, v) in vs.iter().enumerate() {
            assert_eq!(b.index(*v), Some(i));
        }
    }

    #[test]
    fn neighbors_are_sorted_and_in_box() {
        let b = DomainBox::centered_at(Vertex::new(5, -2), 2).unwrap();
        for i in 0..b.len() {
            let ns: Vec<Vertex> = b.neighbors(i).map(|(_, j)| b.vertex(j)).collect();
            let mut s = ns.clone();
            s.sort();
            assert_eq!(ns, s);
            assert!(ns.iter().all(|v| b.contains(*v) && v.is_adjacent(b.vertex(i))));
        }
        assert_eq!(b.neighbors(b.index(b.center()).unwrap()).count(), 4);
    }

    #[test]
    fn canonical_edge_ids() {
        let u = Vertex::new(2, 3);
        let v = Vertex::new(2, 4);
        assert_eq!(EdgeId::between(u, v), EdgeId::between(v, u));
        assert_eq!(EdgeId::between(u, v).unwrap().base, u);
        assert_eq!(EdgeId::between(u, Vertex::new(3, 4)), None);
        assert_eq!(EdgeId::between(u, u), None);
    }

    #[test]
    fn boundary_count() {
        let b = DomainBox::new(4).unwrap();
        assert_eq!(b.boundary_vertices().count(), 8 * 4);
        assert!(DomainBox::new(0).is_err());
    }
}
