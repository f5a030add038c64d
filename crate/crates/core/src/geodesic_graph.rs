//! The directed geodesic graph of a target set.
//!
//! An edge `⟨x, y⟩` is a candidate out-edge of `x` when `dist(y) + ω_{xy}`
//! equals `dist(x)` to relative tolerance [`EDGE_REL_TOL`]. Under a continuous
//! law every non-target vertex has exactly one candidate. Traversals
//! (`Γ_x`, clusters, events, encounter points) use the successor forest: the
//! parent links of the sweep, i.e. the lexicographically smallest exact
//! predecessor. On a tie-free configuration the two notions coincide.

use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FppError, Result};
use crate::lattice::{Direction, DomainBox, Vertex};
use crate::passage::{sweep, Environment, GeodesicPath, PassageResult};
use crate::scalar::Scalar;

pub const EDGE_REL_TOL: f64 = 1e-12;
pub const PATH_REL_TOL: f64 = 1e-9;

const NONE: u32 = u32::MAX;

#[derive(Clone, Debug)]
pub struct GeodesicGraph<T> {
    domain: DomainBox,
    targets: Vec<Vertex>,
    is_target: Vec<bool>,
    /// potential `τ(·, S)`; NaN for fixtures built from edge lists
    dist: Vec<T>,
    /// candidate out-edges as [`Direction::bit`] flags
    out_mask: Vec<u8>,
    successor: Vec<u32>,
    /// weight of the successor edge
    step: Vec<T>,
    children_start: Vec<u32>,
    children: Vec<u32>,
    ties: usize,
}

/// Graph of `τ(·, targets)` on the whole box of `env`.
pub fn build_graph<T: Scalar>(env: &Environment<T>, targets: &[Vertex]) -> Result<GeodesicGraph<T>> {
    let pot = sweep(env, targets, &[])?;
    build_graph_from(env, &pot)
}

/// Graph read off a given potential, taken as is: a potential that is not
/// the passage time to its sources gives a graph that fails
/// [`GeodesicGraph::structure_report`].
pub fn build_graph_from<T: Scalar>(env: &Environment<T>, pot: &PassageResult<T>) -> Result<GeodesicGraph<T>> {
    let domain = *env.domain();
    if *pot.domain() != domain || !pot.is_complete() {
        return Err(FppError::Precondition("potential must be a complete sweep over the same box".into()));
    }
    let targets = pot.sources();
    let n = domain.len();
    let mut is_target = vec![false; n];
    for t in targets {
        is_target[domain.try_index(*t)?] = true;
    }
    let tol = T::of(EDGE_REL_TOL);
    let mut out_mask = vec![0u8; n];
    let mut successor = vec![NONE; n];
    let mut step = vec![T::nan(); n];
    let mut ties = 0;
    for u in 0..n {
        if is_target[u] {
            continue;
        }
        let du = pot.dist_idx(u);
        let scale = du.abs().max(T::one());
        let mut mask = 0u8;
        for (dir, v) in domain.neighbors(u) {
            let w = env.weight_dir(u, dir);
            let dv = pot.dist_idx(v);
            if dv <= du && (dv + w - du).abs() <= tol * scale {
                mask |= dir.bit();
            }
        }
        if mask.count_ones() > 1 {
            ties += 1;
        }
        out_mask[u] = mask;
        if let Some(p) = pot.parent_idx(u) {
            successor[u] = p as u32;
            let dir = Direction::from_offset(domain.vertex(p) - domain.vertex(u))
                .ok_or_else(|| FppError::Internal("parent is not a neighbour".into()))?;
            step[u] = env.weight_dir(u, dir);
            out_mask[u] |= dir.bit();
        }
    }
    let dist = pot.dist_slice().to_vec();
    Ok(GeodesicGraph::assemble(
        domain,
        targets.to_vec(),
        is_target,
        dist,
        out_mask,
        successor,
        step,
        ties,
    ))
}

impl<T: Scalar> GeodesicGraph<T> {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        domain: DomainBox,
        targets: Vec<Vertex>,
        is_target: Vec<bool>,
        dist: Vec<T>,
        out_mask: Vec<u8>,
        successor: Vec<u32>,
        step: Vec<T>,
        ties: usize,
    ) -> Self {
        let n = domain.len();
        let mut counts = vec![0u32; n + 1];
        for &s in &successor {
            if s != NONE {
                counts[s as usize + 1] += 1;
            }
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut children = vec![0u32; counts[n] as usize];
        for (u, &s) in successor.iter().enumerate() {
            if s != NONE {
                children[fill[s as usize] as usize] = u as u32;
                fill[s as usize] += 1;
            }
        }
        GeodesicGraph {
            domain,
            targets,
            is_target,
            dist,
            out_mask,
            successor,
            step,
            children_start: counts,
            children,
            ties,
        }
    }

    /// Fixture graph from directed edges, each of unit time. A vertex may
    /// carry several out-edges; the smallest head becomes its successor.
    pub fn from_edges(domain: DomainBox, targets: &[Vertex], edges: &[(Vertex, Vertex)]) -> Result<Self> {
        let n = domain.len();
        let mut is_target = vec![false; n];
        for t in targets {
            is_target[domain.try_index(*t)?] = true;
        }
        let mut out_mask = vec![0u8; n];
        let mut successor = vec![NONE; n];
        let mut step = vec![T::nan(); n];
        for &(a, b) in edges {
            let dir = Direction::from_offset(b - a)
                .ok_or_else(|| FppError::Config(format!("{a} -> {b} is not a lattice edge")))?;
            let i = domain.try_index(a)?;
            let j = domain.try_index(b)?;
            out_mask[i] |= dir.bit();
            if successor[i] == NONE || (j as u32) < successor[i] {
                successor[i] = j as u32;
                step[i] = T::one();
            }
        }
        let ties = out_mask.iter().filter(|m| m.count_ones() > 1).count();
        Ok(Self::assemble(
            domain,
            targets.to_vec(),
            is_target,
            vec![T::nan(); n],
            out_mask,
            successor,
            step,
            ties,
        ))
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn targets(&self) -> &[Vertex] {
        &self.targets
    }

    pub fn is_target(&self, v: Vertex) -> bool {
        self.domain.index(v).is_some_and(|i| self.is_target[i])
    }

    pub fn dist(&self, v: Vertex) -> Option<T> {
        let d = self.dist[self.domain.index(v)?];
        d.is_finite().then_some(d)
    }

    /// Number of vertices with more than one candidate out-edge.
    pub fn tie_count(&self) -> usize {
        self.ties
    }

    pub fn successor(&self, v: Vertex) -> Option<Vertex> {
        let s = self.successor[self.domain.index(v)?];
        (s != NONE).then(|| self.domain.vertex(s as usize))
    }

    /// Candidate out-neighbours of `v`, in lexicographic order.
    pub fn out_neighbors(&self, v: Vertex) -> Vec<Vertex> {
        let Some(i) = self.domain.index(v) else { return Vec::new() };
        let m = self.out_mask[i];
        Direction::ALL
            .iter()
            .filter(|d| m & d.bit() != 0)
            .map(|d| v.step(*d))
            .collect()
    }

    pub fn out_degree(&self, v: Vertex) -> usize {
        self.domain
            .index(v)
            .map_or(0, |i| self.out_mask[i].count_ones() as usize)
    }

    /// Vertices whose successor is `v`.
    pub fn in_neighbors(&self, v: Vertex) -> Vec<Vertex> {
        let Some(i) = self.domain.index(v) else { return Vec::new() };
        self.children_idx(i).map(|c| self.domain.vertex(c)).collect()
    }

    fn children_idx(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let (a, b) = (self.children_start[i] as usize, self.children_start[i + 1] as usize);
        self.children[a..b].iter().map(|&c| c as usize)
    }

    /// Directed edges of the successor forest.
    pub fn edges(&self) -> impl Iterator<Item = (Vertex, Vertex)> + '_ {
        self.successor
            .iter()
            .enumerate()
            .filter(|(_, s)| **s != NONE)
            .map(|(u, s)| (self.domain.vertex(u), self.domain.vertex(*s as usize)))
    }

    fn forward_indices(&self, x: Vertex) -> Result<Vec<usize>> {
        let mut i = self.domain.try_index(x)?;
        let mut out = vec![i];
        while !self.is_target[i] {
            let s = self.successor[i];
            if s == NONE {
                break;
            }
            i = s as usize;
            out.push(i);
            if out.len() > self.domain.len() {
                return Err(FppError::Structural(format!("forward path from {x} revisits a vertex")));
            }
        }
        Ok(out)
    }

    /// `Γ_x` up to the first target vertex. The time is accumulated from the
    /// target end, which reproduces the potential `dist(x)` exactly.
    pub fn forward_path(&self, x: Vertex) -> Result<GeodesicPath<T>> {
        let idx = self.forward_indices(x)?;
        let mut t = T::zero();
        for &i in idx.iter().rev().skip(1) {
            t = t + self.step[i];
        }
        Ok(GeodesicPath {
            vertices: idx.into_iter().map(|i| self.domain.vertex(i)).collect(),
            total_time: t,
        })
    }

    /// First common vertex of `Γ_x` and `Γ_y`.
    pub fn coalescence(&self, x: Vertex, y: Vertex) -> Result<CoalescenceResult> {
        let px = self.forward_indices(x)?;
        let py = self.forward_indices(y)?;
        let exited = |p: &[usize]| !self.is_target[*p.last().unwrap()];
        let pos: HashMap<usize, usize> = px.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        for (ky, i) in py.iter().enumerate() {
            if let Some(&kx) = pos.get(i) {
                return Ok(CoalescenceResult {
                    merged: true,
                    merge_vertex: Some(self.domain.vertex(*i)),
                    steps_x: kx,
                    steps_y: ky,
                    exited_domain: exited(&px) || exited(&py),
                });
            }
        }
        Ok(CoalescenceResult {
            merged: false,
            merge_vertex: None,
            steps_x: px.len() - 1,
            steps_y: py.len() - 1,
            exited_domain: exited(&px) || exited(&py),
        })
    }

    /// `C_x`: every vertex whose forward path passes through `x`, found
    /// breadth-first. Stops once more than `cap` vertices are collected.
    pub fn backward_cluster(&self, x: Vertex, cap: usize) -> Result<BackwardCluster> {
        let start = self.domain.try_index(x)?;
        let mut out = vec![x];
        let mut queue = VecDeque::from([start]);
        let mut touches = self.domain.on_boundary(x);
        let mut capped = false;
        'bfs: while let Some(i) = queue.pop_front() {
            for c in self.children_idx(i) {
                let v = self.domain.vertex(c);
                touches |= self.domain.on_boundary(v);
                out.push(v);
                if out.len() > cap {
                    capped = true;
                    break 'bfs;
                }
                queue.push_back(c);
            }
        }
        Ok(BackwardCluster {
            vertices: out,
            capped,
            touches_boundary: touches,
        })
    }

    /// Least element of `C_x` in the dictionary order of `(ϖ′·y, ς·y)`;
    /// `None` when the cluster is capped or reaches the box edge.
    pub fn progenitor(&self, x: Vertex, dir: LatticeDirection, cap: usize) -> Result<Option<Vertex>> {
        let c = self.backward_cluster(x, cap)?;
        if c.truncated() {
            return Ok(None);
        }
        Ok(c.vertices.into_iter().min_by_key(|v| dir.key(*v)))
    }

    /// Evaluates the four conditions of the cylinder event `A_{m,n}`.
    pub fn check_amn(&self, m: i32, n: i32) -> Result<AmnReport> {
        if m < 0 || m > n || n > self.domain.half_width() {
            return Err(FppError::Precondition(format!(
                "need 0 <= m <= n <= {} (got m={m}, n={n})",
                self.domain.half_width()
            )));
        }
        let c = self.domain.center();
        let inner = DomainBox::window(m).translated(c);
        let outer = DomainBox::window(n).translated(c);

        let out_degree_ok = inner.vertices().all(|v| {
            let nb = self.out_neighbors(v);
            nb.len() == 1 && outer.contains(nb[0])
        });

        let no_circuit_ok = self.count_circuits(&inner) == 0;

        // Forward paths of a forest that meet pairwise share a common vertex.
        let k = inner.len();
        let mut hits = vec![0u32; self.domain.len()];
        let mut coalesce_ok = false;
        for v in inner.vertices() {
            let mut i = self.domain.index_unchecked(v);
            loop {
                hits[i] += 1;
                if hits[i] as usize == k {
                    coalesce_ok = true;
                }
                if self.is_target[i] || self.successor[i] == NONE {
                    break;
                }
                let s = self.successor[i] as usize;
                if !outer.contains(self.domain.vertex(s)) {
                    break;
                }
                i = s;
            }
        }

        let mut memo = vec![0u8; self.domain.len()];
        let no_boundary_backflow_ok = outer
            .boundary_vertices()
            .all(|z| !self.reaches(z, &inner, &mut memo));

        Ok(AmnReport {
            m,
            n,
            out_degree_ok,
            no_circuit_ok,
            coalesce_ok,
            no_boundary_backflow_ok,
        })
    }

    fn reaches(&self, z: Vertex, inner: &DomainBox, memo: &mut [u8]) -> bool {
        const YES: u8 = 1;
        const NO: u8 = 2;
        let mut trail = Vec::new();
        let mut i = self.domain.index_unchecked(z);
        let ans = loop {
            match memo[i] {
                YES => break true,
                NO => break false,
                _ => {}
            }
            trail.push(i);
            if inner.contains(self.domain.vertex(i)) {
                break true;
            }
            if self.is_target[i] || self.successor[i] == NONE || trail.len() > self.domain.len() {
                break false;
            }
            i = self.successor[i] as usize;
        };
        for t in trail {
            memo[t] = if ans { YES } else { NO };
        }
        ans
    }

    /// Undirected circuits formed by candidate edges with both ends in `region`.
    pub fn count_circuits(&self, region: &DomainBox) -> usize {
        let mut uf = UnionFind::new(region.len());
        let mut circuits = 0;
        for v in region.vertices() {
            let a = region.index_unchecked(v);
            for w in self.out_neighbors(v) {
                if let Some(b) = region.index(w) {
                    if !uf.union(a, b) {
                        circuits += 1;
                    }
                }
            }
        }
        circuits
    }

    /// Vertices of `window` whose removal splits the successor forest
    /// (restricted to the window) into at least three pieces that each
    /// contain a vertex of the window boundary.
    pub fn encounter_points(&self, window: &DomainBox) -> Result<Vec<Vertex>> {
        if !self.domain.contains_box(window) {
            return Err(FppError::Precondition("window must lie inside the domain".into()));
        }
        let n = window.len();
        let parent: Vec<u32> = window
            .vertices()
            .map(|v| {
                self.successor(v)
                    .filter(|s| !self.is_target(v) && window.contains(*s))
                    .map_or(NONE, |s| window.index_unchecked(s) as u32)
            })
            .collect();
        let mut pending = vec![0u32; n];
        for &p in &parent {
            if p != NONE {
                pending[p as usize] += 1;
            }
        }
        // boundary vertices below each vertex, accumulated leaves first
        let mut below: Vec<u32> = window
            .vertices()
            .map(|v| u32::from(window.on_boundary(v)))
            .collect();
        let mut order = Vec::with_capacity(n);
        let mut stack: Vec<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
        while let Some(i) = stack.pop() {
            order.push(i);
            let p = parent[i];
            if p != NONE {
                below[p as usize] += below[i];
                pending[p as usize] -= 1;
                if pending[p as usize] == 0 {
                    stack.push(p as usize);
                }
            }
        }
        if order.len() != n {
            return Err(FppError::Structural("successor links contain a cycle".into()));
        }
        let mut total = vec![0u32; n];
        for &i in order.iter().rev() {
            total[i] = if parent[i] == NONE { below[i] } else { total[parent[i] as usize] };
        }
        let mut arms = vec![0u32; n];
        for i in 0..n {
            let p = parent[i];
            if p != NONE && below[i] > 0 {
                arms[p as usize] += 1;
            }
        }
        Ok((0..n)
            .filter(|&i| arms[i] + u32::from(total[i] > below[i]) >= 3)
            .map(|i| window.vertex(i))
            .collect())
    }

    /// Structural checks: out-degree, undirected circuits, sampled directed
    /// paths against the potential and the Busemann coupling of merged pairs.
    pub fn structure_report(
        &self,
        env: &Environment<T>,
        samples: usize,
        seed: u64,
    ) -> Result<StructureReport> {
        let mut rep = StructureReport {
            ties: self.ties,
            ..Default::default()
        };
        for i in 0..self.domain.len() {
            if self.is_target[i] {
                continue;
            }
            rep.vertices_checked += 1;
            if self.out_mask[i].count_ones() != 1 {
                rep.out_degree_violations += 1;
            }
        }
        rep.circuits = self.count_circuits(&self.domain);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.domain.half_width();
        let c = self.domain.center();
        let pick = |rng: &mut ChaCha8Rng| Vertex::new(c.x + rng.gen_range(-n..=n), c.y + rng.gen_range(-n..=n));
        for _ in 0..samples {
            // a random walk through candidate edges
            let start = pick(&mut rng);
            let mut v = start;
            let mut path = vec![v];
            while !self.is_target(v) {
                let nb = self.out_neighbors(v);
                if nb.is_empty() {
                    break;
                }
                v = nb[rng.gen_range(0..nb.len())];
                path.push(v);
                if path.len() > self.domain.len() {
                    return Err(FppError::Structural("directed walk does not terminate".into()));
                }
            }
            let t = env.canonical_path_time(&path)?;
            let drop = self.dist(start).unwrap_or(T::nan()) - self.dist(v).unwrap_or(T::nan());
            let rel = ((t - drop).abs() / t.abs().max(T::one())).to_f64_lossy();
            rep.paths_sampled += 1;
            rep.max_path_rel_err = rep.max_path_rel_err.max(rel);
            if !(rel <= PATH_REL_TOL) {
                rep.geodesic_violations += 1;
            }

            let y = pick(&mut rng);
            let co = self.coalescence(start, y)?;
            if let Some(z) = co.merge_vertex {
                let along = |x: Vertex| -> Result<T> {
                    let p = self.forward_path(x)?;
                    let k = p.vertices.iter().position(|u| *u == z).unwrap_or(p.vertices.len() - 1);
                    env.path_time(&p.vertices[..=k])
                };
                let b = self.dist(start).unwrap_or(T::nan()) - self.dist(y).unwrap_or(T::nan());
                let g = along(start)? - along(y)?;
                let rel = ((b - g).abs() / self.dist(start).unwrap_or(T::one()).abs().max(T::one())).to_f64_lossy();
                rep.coupling_checked += 1;
                rep.max_coupling_rel_err = rep.max_coupling_rel_err.max(rel);
                if !(rel <= PATH_REL_TOL) {
                    rep.coupling_violations += 1;
                }
            }
        }
        Ok(rep)
    }
}

/// Directed edges inside `window` that belong to exactly one of the graphs.
pub fn graph_symmetric_difference<T: Scalar>(
    g1: &GeodesicGraph<T>,
    g2: &GeodesicGraph<T>,
    window: &DomainBox,
) -> Result<usize> {
    if g1.domain != g2.domain {
        return Err(FppError::Precondition("graphs must share a domain".into()));
    }
    let mut count = 0;
    for v in window.vertices() {
        let Some(i) = g1.domain.index(v) else { continue };
        let diff = g1.out_mask[i] ^ g2.out_mask[i];
        for d in Direction::ALL {
            if diff & d.bit() != 0 && window.contains(v.step(d)) {
                count += 1;
            }
        }
    }
    Ok(count)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoalescenceResult {
    pub merged: bool,
    pub merge_vertex: Option<Vertex>,
    pub steps_x: usize,
    pub steps_y: usize,
    /// a path stopped before reaching the target set
    pub exited_domain: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackwardCluster {
    pub vertices: Vec<Vertex>,
    pub capped: bool,
    pub touches_boundary: bool,
}

impl BackwardCluster {
    pub fn truncated(&self) -> bool {
        self.capped || self.touches_boundary
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmnReport {
    pub m: i32,
    pub n: i32,
    pub out_degree_ok: bool,
    pub no_circuit_ok: bool,
    pub coalesce_ok: bool,
    pub no_boundary_backflow_ok: bool,
}

impl AmnReport {
    pub fn holds(&self) -> bool {
        self.out_degree_ok && self.no_circuit_ok && self.coalesce_ok && self.no_boundary_backflow_ok
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub vertices_checked: usize,
    pub out_degree_violations: usize,
    pub circuits: usize,
    pub ties: usize,
    pub paths_sampled: usize,
    pub geodesic_violations: usize,
    pub max_path_rel_err: f64,
    pub coupling_checked: usize,
    pub coupling_violations: usize,
    pub max_coupling_rel_err: f64,
}

impl StructureReport {
    pub fn violations(&self) -> usize {
        self.out_degree_violations + self.circuits + self.geodesic_violations + self.coupling_violations
    }
}

/// One of the eight directions `jπ/4` as an integer vector with sup-norm 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeDirection(u8);

impl LatticeDirection {
    pub fn new(j: u8) -> Result<Self> {
        if j < 8 {
            Ok(LatticeDirection(j))
        } else {
            Err(FppError::Range(format!("lattice direction index {j} not in 0..8")))
        }
    }

    /// Nearest of the eight directions to the angle `theta`.
    pub fn nearest(theta: f64) -> Self {
        let j = (crate::line_geometry::wrap_angle(theta) / std::f64::consts::FRAC_PI_4).round() as i64;
        LatticeDirection(j.rem_euclid(8) as u8)
    }

    pub fn vector(self) -> Vertex {
        const V: [(i32, i32); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];
        let (x, y) = V[self.0 as usize];
        Vertex::new(x, y)
    }

    /// `ς`, the vector `ϖ′` turned a quarter counter-clockwise.
    pub fn transverse(self) -> Vertex {
        let v = self.vector();
        Vertex::new(-v.y, v.x)
    }

    fn key(self, y: Vertex) -> (i64, i64) {
        (self.vector().dot(y), self.transverse().dot(y))
    }
}

pub(crate) struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
        }
    }

    pub(crate) fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] as usize != i {
            let g = self.parent[self.parent[i] as usize];
            self.parent[i] = g;
            i = g as usize;
        }
        i
    }

    /// Returns false when `a` and `b` were already connected.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb as u32,
            std::cmp::Ordering::Greater => self.parent[rb] = ra as u32,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra as u32;
                self.rank[ra] += 1;
            }
        }
        true
    }
}
