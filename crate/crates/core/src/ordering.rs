//! Reduce d-dimensional two-sample comparison to one dimension.
//!
//! Points from both windows are ordered either through the dominance poset
//! (levels of its Hasse diagram) or through a minimum spanning tree (leaf
//! peeling). The resulting bins give every point a 1-D traversal position,
//! and each window's ECDF is taken over those positions.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::measures::Ecdf1D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    R,
    W,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub vector: Vec<f64>,
    pub origin: Origin,
    pub index: usize,
}

/// Label the points of both windows, `R` first.
pub fn label_windows(r: &[&[f64]], w: &[&[f64]]) -> Vec<LabeledPoint> {
    r.iter()
        .map(|v| (v, Origin::R))
        .chain(w.iter().map(|v| (v, Origin::W)))
        .enumerate()
        .map(|(index, (v, origin))| LabeledPoint {
            vector: v.to_vec(),
            origin,
            index,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dominance {
    Less,
    Greater,
    Equal,
    Parallel,
}

pub fn dominance(a: &[f64], b: &[f64]) -> Result<Dominance> {
    if a.len() != b.len() {
        return arg(format!("dimension mismatch: {} vs {}", a.len(), b.len()));
    }
    Ok(dominance_unchecked(a, b))
}

fn dominance_unchecked(a: &[f64], b: &[f64]) -> Dominance {
    let (mut le, mut ge) = (true, true);
    for (x, y) in a.iter().zip(b) {
        le &= x <= y;
        ge &= x >= y;
        if !le && !ge {
            return Dominance::Parallel;
        }
    }
    match (le, ge) {
        (true, true) => Dominance::Equal,
        (true, false) => Dominance::Less,
        (false, true) => Dominance::Greater,
        (false, false) => Dominance::Parallel,
    }
}

fn strictly_below(a: &[f64], b: &[f64]) -> bool {
    dominance_unchecked(a, b) == Dominance::Less
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn validate_points(points: &[LabeledPoint]) -> Result<usize> {
    if points.len() < 2 {
        return arg("ordering needs at least two points");
    }
    let d = points[0].vector.len();
    if d == 0 || points.iter().any(|p| p.vector.len() != d) {
        return arg("points must share a non-zero dimension");
    }
    if points.iter().any(|p| p.vector.iter().any(|v| !v.is_finite())) {
        return arg("point components must be finite");
    }
    Ok(d)
}

/// A distinct vector and the input points that carry it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosetNode {
    pub vector: Vec<f64>,
    /// Positions in `PosetDag::points`.
    pub members: Vec<usize>,
}

/// Hasse diagram of the dominance order. Nodes are sorted
/// lexicographically; node ids `nodes.len()` and `nodes.len() + 1` are the
/// synthetic source and sink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosetDag {
    pub points: Vec<LabeledPoint>,
    pub nodes: Vec<PosetNode>,
    pub source: Vec<f64>,
    pub sink: Vec<f64>,
    pub edges: Vec<(usize, usize)>,
    /// Longest-path level of each node, starting at 1.
    pub levels: Vec<usize>,
    /// Largest number of distinct vectors sharing a level.
    pub width: usize,
}

impl PosetDag {
    pub fn source_id(&self) -> usize {
        self.nodes.len()
    }

    pub fn sink_id(&self) -> usize {
        self.nodes.len() + 1
    }
}

pub fn build_poset(points: Vec<LabeledPoint>) -> Result<PosetDag> {
    let d = validate_points(&points)?;
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| lex_cmp(&points[a].vector, &points[b].vector).then(a.cmp(&b)));

    let mut nodes: Vec<PosetNode> = Vec::new();
    for i in order {
        match nodes.last_mut() {
            Some(last) if last.vector == points[i].vector => last.members.push(i),
            _ => nodes.push(PosetNode {
                vector: points[i].vector.clone(),
                members: vec![i],
            }),
        }
    }

    let k = nodes.len();
    let (source_id, sink_id) = (k, k + 1);
    let mut edges = Vec::new();
    let mut levels = vec![0usize; k];
    let mut has_successor = vec![false; k];
    for j in 0..k {
        let mut covers: Vec<usize> = Vec::new();
        for i in (0..j).rev() {
            if strictly_below(&nodes[i].vector, &nodes[j].vector)
                && !covers
                    .iter()
                    .any(|&c| strictly_below(&nodes[i].vector, &nodes[c].vector))
            {
                covers.push(i);
            }
        }
        levels[j] = 1 + covers.iter().map(|&c| levels[c]).max().unwrap_or(0);
        if covers.is_empty() {
            edges.push((source_id, j));
        }
        covers.sort_unstable();
        for c in covers {
            has_successor[c] = true;
            edges.push((c, j));
        }
    }
    edges.extend((0..k).filter(|&i| !has_successor[i]).map(|i| (i, sink_id)));

    let mut per_level = vec![0usize; levels.iter().copied().max().unwrap_or(0) + 1];
    levels.iter().for_each(|&l| per_level[l] += 1);
    let width = per_level.into_iter().max().unwrap_or(0);

    let margin = 1.0;
    let source = (0..d)
        .map(|c| nodes.iter().map(|n| n.vector[c]).fold(f64::INFINITY, f64::min) - margin)
        .collect();
    let sink = (0..d)
        .map(|c| nodes.iter().map(|n| n.vector[c]).fold(f64::NEG_INFINITY, f64::max) + margin)
        .collect();

    Ok(PosetDag {
        points,
        nodes,
        source,
        sink,
        edges,
        levels,
        width,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderMethod {
    Poset,
    Mst,
}

/// Ordered bins over the labeled points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoPartition {
    pub points: Vec<LabeledPoint>,
    /// Positions in `points`, bin by bin, lexicographic within a bin.
    pub bins: Vec<Vec<usize>>,
    pub method: OrderMethod,
    /// Largest number of distinct vectors in one bin.
    pub parallelism: usize,
}

impl TopoPartition {
    fn from_groups(points: Vec<LabeledPoint>, mut bins: Vec<Vec<usize>>, method: OrderMethod) -> Self {
        let mut parallelism = 0;
        for bin in &mut bins {
            bin.sort_by(|&a, &b| lex_cmp(&points[a].vector, &points[b].vector).then(a.cmp(&b)));
            let distinct = 1 + bin
                .windows(2)
                .filter(|w| points[w[0]].vector != points[w[1]].vector)
                .count();
            parallelism = parallelism.max(distinct);
        }
        Self {
            points,
            bins,
            method,
            parallelism,
        }
    }

    /// Bin index of every point.
    pub fn bin_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.points.len()];
        for (b, bin) in self.bins.iter().enumerate() {
            for &i in bin {
                out[i] = b;
            }
        }
        out
    }
}

pub fn topo_partition_poset(dag: &PosetDag) -> TopoPartition {
    let depth = dag.levels.iter().copied().max().unwrap_or(0);
    let mut bins = vec![Vec::new(); depth];
    for (node, &level) in dag.nodes.iter().zip(&dag.levels) {
        bins[level - 1].extend(node.members.iter().copied());
    }
    TopoPartition::from_groups(dag.points.clone(), bins, OrderMethod::Poset)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanningTree {
    pub points: Vec<LabeledPoint>,
    pub edges: Vec<(usize, usize, f64)>,
    pub total_weight: f64,
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            Ordering::Less => self.parent[ra] = rb,
            Ordering::Greater => self.parent[rb] = ra,
            Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Kruskal over the complete Euclidean graph; ties broken by `(i, j)`.
pub fn build_mst(points: Vec<LabeledPoint>) -> Result<SpanningTree> {
    validate_points(&points)?;
    let n = points.len();
    let mut candidates = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            candidates.push((euclidean(&points[i].vector, &points[j].vector), i, j));
        }
    }
    candidates.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut uf = UnionFind::new(n);
    let mut edges = Vec::with_capacity(n - 1);
    let mut total_weight = 0.0;
    for (dist, i, j) in candidates {
        if uf.union(i, j) {
            edges.push((i, j, dist));
            total_weight += dist;
            if edges.len() == n - 1 {
                break;
            }
        }
    }
    Ok(SpanningTree {
        points,
        edges,
        total_weight,
    })
}

/// Peel leaves layer by layer until one or two roots remain.
pub fn topo_partition_mst(tree: &SpanningTree) -> TopoPartition {
    let n = tree.points.len();
    let mut adj = vec![Vec::new(); n];
    for &(i, j, _) in &tree.edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut remaining: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut layer: Vec<usize> = (0..n).filter(|&i| remaining[i] <= 1).collect();
    let mut bins = Vec::new();
    while !layer.is_empty() {
        for &v in &layer {
            visited[v] = true;
        }
        for &v in &layer {
            for &u in &adj[v] {
                if !visited[u] {
                    remaining[u] -= 1;
                }
            }
        }
        let next: Vec<usize> = (0..n).filter(|&i| !visited[i] && remaining[i] <= 1).collect();
        bins.push(layer);
        layer = next;
    }
    // copies of one vector may be peeled at different depths; keep them
    // together in the earliest bin so they share a traversal position
    let mut bin_of = vec![0; n];
    for (b, bin) in bins.iter().enumerate() {
        for &i in bin {
            bin_of[i] = b;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lex_cmp(&tree.points[a].vector, &tree.points[b].vector));
    for group in order.chunk_by(|&a, &b| tree.points[a].vector == tree.points[b].vector) {
        let first = group.iter().map(|&i| bin_of[i]).min().unwrap_or(0);
        for &i in group {
            bin_of[i] = first;
        }
    }
    let mut merged = vec![Vec::new(); bins.len()];
    for (i, &b) in bin_of.iter().enumerate() {
        merged[b].push(i);
    }
    merged.retain(|bin| !bin.is_empty());
    TopoPartition::from_groups(tree.points.clone(), merged, OrderMethod::Mst)
}

/// ECDF of one origin over traversal positions. Consecutive equal vectors
/// share a position, and only positions holding that origin are kept.
pub fn ecdf_from_partition(partition: &TopoPartition, origin: Origin) -> Result<Ecdf1D> {
    let total = partition.points.iter().filter(|p| p.origin == origin).count();
    if total == 0 {
        return arg(format!("partition holds no points from {origin:?}"));
    }
    let mut support = Vec::new();
    let mut cum = Vec::new();
    let mut seen = 0usize;
    let mut position = 0usize;
    let mut prev: Option<&[f64]> = None;
    for &i in partition.bins.iter().flatten() {
        let p = &partition.points[i];
        if prev != Some(p.vector.as_slice()) {
            position += 1;
            prev = Some(&p.vector);
        }
        if p.origin != origin {
            continue;
        }
        seen += 1;
        let c = seen as f64 / total as f64;
        if support.last() == Some(&(position as f64)) {
            *cum.last_mut().unwrap() = c;
        } else {
            support.push(position as f64);
            cum.push(c);
        }
    }
    Ecdf1D::from_parts(support, cum, total)
}

/// Order both windows together and return `(F_R, F_W, partition)`.
/// Logs a warning when a bin holds more than a quarter of all points.
pub fn ordered_ecdfs(
    r: &[&[f64]],
    w: &[&[f64]],
    method: OrderMethod,
) -> Result<(Ecdf1D, Ecdf1D, TopoPartition)> {
    let points = label_windows(r, w);
    let partition = match method {
        OrderMethod::Poset => topo_partition_poset(&build_poset(points)?),
        OrderMethod::Mst => topo_partition_mst(&build_mst(points)?),
    };
    let total = r.len() + w.len();
    if partition.parallelism * 4 > total {
        log::warn!(
            "{method:?} ordering: {} parallel points out of {total}; the sample is small for this dimension",
            partition.parallelism
        );
    }
    Ok((
        ecdf_from_partition(&partition, Origin::R)?,
        ecdf_from_partition(&partition, Origin::W)?,
        partition,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{measure_eval, MeasureId, MeasureSpec};
    use proptest::prelude::*;

    fn pts(vs: &[&[f64]]) -> Vec<LabeledPoint> {
        vs.iter()
            .enumerate()
            .map(|(index, v)| LabeledPoint {
                vector: v.to_vec(),
                origin: if index % 2 == 0 { Origin::R } else { Origin::W },
                index,
            })
            .collect()
    }

    fn bin_vectors(p: &TopoPartition) -> Vec<Vec<Vec<f64>>> {
        p.bins
            .iter()
            .map(|b| b.iter().map(|&i| p.points[i].vector.clone()).collect())
            .collect()
    }

    #[test]
    fn dominance_cases() {
        assert_eq!(dominance(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), Dominance::Less);
        assert_eq!(dominance(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), Dominance::Parallel);
        assert_eq!(dominance(&[2.0, 2.0], &[2.0, 2.0]).unwrap(), Dominance::Equal);
        assert_eq!(dominance(&[3.0, 2.0], &[2.0, 2.0]).unwrap(), Dominance::Greater);
        assert!(dominance(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn one_dimensional_chain() {
        let dag = build_poset(pts(&[&[3.0], &[1.0], &[2.0]])).unwrap();
        let (s, t) = (dag.source_id(), dag.sink_id());
        assert_eq!(dag.edges, vec![(s, 0), (0, 1), (1, 2), (2, t)]);
        let part = topo_partition_poset(&dag);
        assert_eq!(bin_vectors(&part), vec![vec![vec![1.0]], vec![vec![2.0]], vec![vec![3.0]]]);
        assert_eq!(dag.source, vec![0.0]);
        assert_eq!(dag.sink, vec![4.0]);
    }

    #[test]
    fn diamond() {
        let dag = build_poset(pts(&[&[0.0, 0.0], &[1.0, 1.0], &[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        assert_eq!(dag.width, 2);
        // nodes in lexicographic order: (0,0) (0,1) (1,0) (1,1)
        let (s, t) = (dag.source_id(), dag.sink_id());
        let mut e = dag.edges.clone();
        e.sort_unstable();
        assert_eq!(e, vec![(0, 1), (0, 2), (1, 3), (2, 3), (3, t), (s, 0)]);
        let part = topo_partition_poset(&dag);
        assert_eq!(
            bin_vectors(&part),
            vec![
                vec![vec![0.0, 0.0]],
                vec![vec![0.0, 1.0], vec![1.0, 0.0]],
                vec![vec![1.0, 1.0]]
            ]
        );
    }

    #[test]
    fn all_parallel() {
        let dag = build_poset(pts(&[&[0.0, 9.0], &[1.0, 8.0], &[2.0, 7.0]])).unwrap();
        assert_eq!(dag.width, 3);
        assert!(dag
            .edges
            .iter()
            .all(|&(a, b)| a == dag.source_id() || b == dag.sink_id()));
        let part = topo_partition_poset(&dag);
        assert_eq!(part.bins.len(), 1);
        assert_eq!(part.parallelism, 3);
    }

    #[test]
    fn duplicates_collapse() {
        let dag = build_poset(pts(&[&[1.0, 1.0], &[0.0, 0.0], &[1.0, 1.0]])).unwrap();
        assert_eq!(dag.nodes.len(), 2);
        assert_eq!(dag.nodes[1].members, vec![0, 2]);
        let part = topo_partition_poset(&dag);
        assert_eq!(part.parallelism, 1);
    }

    #[test]
    fn mst_examples() {
        let t = build_mst(pts(&[&[0.0], &[1.0], &[10.0]])).unwrap();
        assert_eq!(t.edges, vec![(0, 1, 1.0), (1, 2, 9.0)]);
        assert_eq!(t.total_weight, 10.0);
        let t = build_mst(pts(&[&[0.0], &[5.0]])).unwrap();
        assert_eq!(t.edges.len(), 1);
        let sq = build_mst(pts(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]])).unwrap();
        assert_eq!(sq.total_weight, 3.0);
        assert!(build_mst(pts(&[&[0.0]])).is_err());
    }

    #[test]
    fn leaf_peeling() {
        let path = build_mst(pts(&[&[0.0], &[1.0], &[2.0], &[3.0], &[4.0]])).unwrap();
        let sizes: Vec<usize> = topo_partition_mst(&path).bins.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![2, 2, 1]);

        let star = build_mst(pts(&[&[0.0, 0.0], &[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0], &[0.0, -1.0]])).unwrap();
        let p = topo_partition_mst(&star);
        assert_eq!(bin_vectors(&p), vec![
            vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![vec![0.0, 0.0]],
        ]);

        let pair = build_mst(pts(&[&[0.0], &[1.0]])).unwrap();
        let p = topo_partition_mst(&pair);
        assert_eq!(p.bins, vec![vec![0, 1]]);
    }

    fn chain_partition(origins: &[Origin]) -> TopoPartition {
        let points: Vec<LabeledPoint> = origins
            .iter()
            .enumerate()
            .map(|(i, &origin)| LabeledPoint {
                vector: vec![i as f64],
                origin,
                index: i,
            })
            .collect();
        topo_partition_poset(&build_poset(points).unwrap())
    }

    fn ks_of(p: &TopoPartition) -> f64 {
        let fr = ecdf_from_partition(p, Origin::R).unwrap();
        let fw = ecdf_from_partition(p, Origin::W).unwrap();
        measure_eval(&MeasureSpec::new(MeasureId::KolmogorovSmirnov), &fr, &fw, 4)
            .unwrap()
            .raw
    }

    #[test]
    fn partition_ecdfs() {
        use Origin::{R, W};
        let alt = chain_partition(&[R, W, R, W]);
        assert_eq!(ecdf_from_partition(&alt, R).unwrap().cum(), &[0.5, 1.0]);
        assert_eq!(ks_of(&alt), 0.5);
        assert_eq!(ks_of(&chain_partition(&[R, R, W, W])), 1.0);
        assert!(ecdf_from_partition(&chain_partition(&[R, R]), W).is_err());
    }

    #[test]
    fn one_dimensional_pipeline_matches_direct() {
        let r = [0.3, -1.0, 2.0, 0.3, 5.0];
        let w = [1.0, 0.3, -2.0, 4.0];
        let rr: Vec<&[f64]> = r.iter().map(std::slice::from_ref).collect();
        let ww: Vec<&[f64]> = w.iter().map(std::slice::from_ref).collect();
        let (fr, fw, _) = ordered_ecdfs(&rr, &ww, OrderMethod::Poset).unwrap();
        let direct_r = Ecdf1D::from_samples(&r).unwrap();
        let direct_w = Ecdf1D::from_samples(&w).unwrap();
        for id in MeasureId::calibratable() {
            let spec = MeasureSpec::new(id);
            assert_eq!(
                measure_eval(&spec, &fr, &fw, 9).unwrap(),
                measure_eval(&spec, &direct_r, &direct_w, 9).unwrap()
            );
        }
    }

    fn small_points() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..4).prop_flat_map(|d| {
            prop::collection::vec(prop::collection::vec((0i32..4).prop_map(f64::from), d), 2..9)
        })
    }

    proptest! {
        #[test]
        fn poset_respects_dominance(vs in small_points()) {
            let refs: Vec<&[f64]> = vs.iter().map(Vec::as_slice).collect();
            let part = topo_partition_poset(&build_poset(pts(&refs)).unwrap());
            let bin = part.bin_of();
            for i in 0..vs.len() {
                for j in 0..vs.len() {
                    if strictly_below(&vs[i], &vs[j]) {
                        prop_assert!(bin[i] < bin[j]);
                    }
                    if vs[i] == vs[j] {
                        prop_assert_eq!(bin[i], bin[j]);
                    }
                }
            }
            let mut all: Vec<usize> = part.bins.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..vs.len()).collect::<Vec<_>>());
        }

        #[test]
        fn orderings_ignore_labels(vs in small_points()) {
            let refs: Vec<&[f64]> = vs.iter().map(Vec::as_slice).collect();
            let a = pts(&refs);
            let b: Vec<LabeledPoint> = a.iter().cloned().map(|mut p| {
                p.origin = if p.origin == Origin::R { Origin::W } else { Origin::R };
                p
            }).collect();
            let pa = topo_partition_poset(&build_poset(a.clone()).unwrap());
            let pb = topo_partition_poset(&build_poset(b.clone()).unwrap());
            prop_assert_eq!(pa.bins, pb.bins);
            let ma = topo_partition_mst(&build_mst(a).unwrap());
            let mb = topo_partition_mst(&build_mst(b).unwrap());
            prop_assert_eq!(ma.bins, mb.bins);
        }

        #[test]
        fn mst_is_a_spanning_tree(vs in small_points()) {
            let refs: Vec<&[f64]> = vs.iter().map(Vec::as_slice).collect();
            let t = build_mst(pts(&refs)).unwrap();
            prop_assert_eq!(t.edges.len(), vs.len() - 1);
            let mut uf = UnionFind::new(vs.len());
            for &(i, j, _) in &t.edges {
                prop_assert!(uf.union(i, j));
            }
            let p = topo_partition_mst(&t);
            let bin = p.bin_of();
            for i in 0..vs.len() {
                for j in 0..vs.len() {
                    if vs[i] == vs[j] {
                        prop_assert_eq!(bin[i], bin[j]);
                    }
                }
            }
            prop_assert_eq!(p.bins.iter().map(Vec::len).sum::<usize>(), vs.len());
        }
    }
}
