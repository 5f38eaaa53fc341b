//! Brute-force oracles shared by the integration tests.

#![allow(dead_code)]

use rand::Rng;
use windiff::measures::{Ecdf1D, MeasureId, MeasureSpec, Norm, Scale};
use windiff::ordering::{
    build_mst, build_poset, label_windows, topo_partition_poset, LabeledPoint,
};

/// Random labeled point set with small integer coordinates, so ties and
/// dominance relations are frequent.
pub fn random_points<R: Rng>(rng: &mut R, max_len: usize, max_dim: usize, range: i32) -> Vec<LabeledPoint> {
    let n = rng.gen_range(2..=max_len);
    let d = rng.gen_range(1..=max_dim);
    let vectors: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(0..=range) as f64).collect())
        .collect();
    let split = rng.gen_range(1..n);
    let r: Vec<&[f64]> = vectors[..split].iter().map(Vec::as_slice).collect();
    let w: Vec<&[f64]> = vectors[split..].iter().map(Vec::as_slice).collect();
    label_windows(&r, &w)
}

fn below(a: &[f64], b: &[f64]) -> bool {
    a != b && a.iter().zip(b).all(|(x, y)| x <= y)
}

/// Compare the poset construction against the dominance matrix. Returns a
/// description of the first disagreement.
pub fn check_poset(points: &[LabeledPoint]) -> Result<(), String> {
    let dag = build_poset(points.to_vec()).map_err(|e| e.to_string())?;

    let mut distinct: Vec<Vec<f64>> = points.iter().map(|p| p.vector.clone()).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    let k = distinct.len();
    if dag.nodes.len() != k {
        return Err(format!("{} nodes, expected {k}", dag.nodes.len()));
    }
    let node_of = |v: &[f64]| dag.nodes.iter().position(|n| n.vector == v).unwrap();

    let dom: Vec<Vec<bool>> = (0..k)
        .map(|i| (0..k).map(|j| below(&distinct[i], &distinct[j])).collect())
        .collect();

    // longest chain ending at each vector, by repeated relaxation
    let mut level = vec![1usize; k];
    for _ in 0..k {
        for j in 0..k {
            for i in 0..k {
                if dom[i][j] {
                    level[j] = level[j].max(level[i] + 1);
                }
            }
        }
    }

    let mut covers = Vec::new();
    for i in 0..k {
        for j in 0..k {
            if dom[i][j] && !(0..k).any(|m| dom[i][m] && dom[m][j]) {
                covers.push((node_of(&distinct[i]), node_of(&distinct[j])));
            }
        }
    }
    covers.sort_unstable();
    let mut inner: Vec<(usize, usize)> = dag
        .edges
        .iter()
        .copied()
        .filter(|&(a, b)| a < k && b < k)
        .collect();
    inner.sort_unstable();
    if inner != covers {
        return Err(format!("cover edges {inner:?}, expected {covers:?}"));
    }

    for (v, &l) in distinct.iter().zip(&level) {
        let got = dag.levels[node_of(v)];
        if got != l {
            return Err(format!("vector {v:?} at level {got}, expected {l}"));
        }
    }

    let minimal = (0..k).filter(|&j| !(0..k).any(|i| dom[i][j])).count();
    let maximal = (0..k).filter(|&i| !(0..k).any(|j| dom[i][j])).count();
    let from_source = dag.edges.iter().filter(|e| e.0 == dag.source_id()).count();
    let to_sink = dag.edges.iter().filter(|e| e.1 == dag.sink_id()).count();
    if (from_source, to_sink) != (minimal, maximal) {
        return Err(format!(
            "source/sink degrees {from_source}/{to_sink}, expected {minimal}/{maximal}"
        ));
    }

    let partition = topo_partition_poset(&dag);
    let bins = partition.bin_of();
    for (i, p) in points.iter().enumerate() {
        let want = level[distinct.iter().position(|v| *v == p.vector).unwrap()] - 1;
        if bins[i] != want {
            return Err(format!("point {i} in bin {}, expected {want}", bins[i]));
        }
    }
    Ok(())
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &(a, b) in edges {
            let v = if a == u {
                b
            } else if b == u {
                a
            } else {
                continue;
            };
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Ascending edge weights of a minimum spanning tree, found by trying every
/// subset of `n - 1` edges. All minimum trees share this multiset.
pub fn enumerated_mst_weights(vectors: &[Vec<f64>]) -> Vec<f64> {
    let n = vectors.len();
    let all: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << all.len()) {
        if mask.count_ones() as usize != n - 1 {
            continue;
        }
        let chosen: Vec<(usize, usize)> = all
            .iter()
            .enumerate()
            .filter(|(b, _)| mask & (1 << b) != 0)
            .map(|(_, &e)| e)
            .collect();
        if !connected(n, &chosen) {
            continue;
        }
        let mut weights: Vec<f64> = chosen
            .iter()
            .map(|&(i, j)| distance(&vectors[i], &vectors[j]))
            .collect();
        weights.sort_by(f64::total_cmp);
        let total = weights.iter().fold(0.0, |acc, w| acc + w);
        if best.as_ref().map_or(true, |(t, _)| total < *t) {
            best = Some((total, weights));
        }
    }
    best.map(|(_, w)| w).unwrap_or_default()
}

pub fn check_mst(points: &[LabeledPoint]) -> Result<(), String> {
    let vectors: Vec<Vec<f64>> = points.iter().map(|p| p.vector.clone()).collect();
    let tree = build_mst(points.to_vec()).map_err(|e| e.to_string())?;
    let mut got: Vec<f64> = tree.edges.iter().map(|e| e.2).collect();
    got.sort_by(f64::total_cmp);
    let want = enumerated_mst_weights(&vectors);
    let total = want.iter().fold(0.0, |acc, w| acc + w);
    if got != want || tree.total_weight != total {
        return Err(format!(
            "tree weights {got:?} (total {}), enumeration {want:?} (total {total})",
            tree.total_weight
        ));
    }
    Ok(())
}

/// Measures aggregated by a plain signed sum of their terms.
pub fn sum_measures() -> Vec<MeasureId> {
    [
        MeasureId::Bhattacharyya,
        MeasureId::Camberra,
        MeasureId::ChiSquare,
        MeasureId::Hellinger,
        MeasureId::JinK,
        MeasureId::JinL,
        MeasureId::JensenShannon,
        MeasureId::Kli,
        MeasureId::Klj,
        MeasureId::Kr,
        MeasureId::Ks,
        MeasureId::Ks2,
    ]
    .into_iter()
    .filter(|&id| MeasureSpec::new(id).norm == Norm::Sum)
    .collect()
}

fn cdf_at(samples: &[f64], x: f64) -> f64 {
    samples.iter().filter(|&&s| s <= x).count() as f64 / samples.len() as f64
}

fn xlog(x: f64, num: f64, den: f64) -> Option<f64> {
    if x == 0.0 {
        Some(0.0)
    } else if num <= 0.0 || den <= 0.0 {
        None
    } else {
        Some(x * (num.log2() - den.log2()))
    }
}

fn oracle_term(id: MeasureId, param: Option<f64>, x: f64, y: f64) -> Option<f64> {
    let kl = |a: f64, b: f64| (a != 0.0 && b != 0.0).then(|| a * (a.log2() - b.log2()));
    let jin = |x: f64, y: f64| Some(xlog(x, 2.0 * x, x + y)? + xlog(y, 2.0 * y, x + y)?);
    let chernoff = |a: f64| {
        let e = 1.0 - a;
        ((y != 0.0 || e >= 0.0) && (x != 0.0 || a >= 0.0)).then(|| x.powf(a) * y.powf(e))
    };
    match id {
        MeasureId::Bhattacharyya => Some((x * y).sqrt()),
        MeasureId::Camberra => (x + y != 0.0).then(|| (x - y).abs() / (x + y)),
        MeasureId::ChiSquare => (x != 0.0).then(|| (x - y) * (x - y) / x),
        MeasureId::Hellinger => Some((x.sqrt() - y.sqrt()) * (x.sqrt() - y.sqrt())),
        MeasureId::JinK => xlog(x, 2.0 * x, x + y),
        MeasureId::JinL | MeasureId::JensenShannon => jin(x, y),
        MeasureId::Kli => kl(x, y),
        MeasureId::Klj => (x != 0.0 && y != 0.0).then(|| (x - y) * (x.log2() - y.log2())),
        MeasureId::Kr | MeasureId::Ks | MeasureId::Ks2 => match param.unwrap() {
            a if a == 1.0 => kl(x, y),
            a if a == 0.0 => kl(y, x),
            a => chernoff(a),
        },
        other => panic!("{other} is not a sum measure"),
    }
}

/// Unnormalized value of a sum measure from a direct loop over the pooled
/// sample values.
pub fn direct_sum_measure(id: MeasureId, r: &[f64], w: &[f64]) -> Option<f64> {
    let spec = MeasureSpec::new(id);
    let mut pooled: Vec<f64> = r.iter().chain(w).copied().collect();
    pooled.sort_by(f64::total_cmp);
    pooled.dedup();
    let mut acc = 0.0;
    let mut used = false;
    for &s in &pooled {
        if let Some(t) = oracle_term(id, spec.param, cdf_at(r, s), cdf_at(w, s)) {
            acc += t;
            used = true;
        }
    }
    if !used {
        return None;
    }
    let v = match spec.gamma {
        Scale::Identity => acc,
        Scale::Half => 0.5 * acc,
        Scale::Square => acc * acc,
        Scale::LogOver(den) => (acc > 0.0).then(|| acc.log2() / den)?,
        Scale::ShiftOver(den) => (acc - 1.0) / den,
    };
    v.is_finite().then_some(v)
}

/// Whether the library agrees exactly with `direct_sum_measure`.
pub fn check_sum_measure(id: MeasureId, r: &[f64], w: &[f64]) -> Result<(), String> {
    let got = windiff::measures::measure_eval(
        &MeasureSpec::new(id),
        &Ecdf1D::from_samples(r).unwrap(),
        &Ecdf1D::from_samples(w).unwrap(),
        r.len() + w.len(),
    )
    .ok()
    .map(|o| o.raw);
    let want = direct_sum_measure(id, r, w);
    if got != want {
        return Err(format!("{id}: library {got:?}, direct loop {want:?}"));
    }
    Ok(())
}

/// Whether the 1-D poset route gives the same outcome as the direct ECDFs
/// for every calibratable measure.
pub fn check_one_dimensional(r: &[f64], w: &[f64]) -> Result<(), String> {
    use windiff::ordering::{ordered_ecdfs, OrderMethod};
    let rr: Vec<&[f64]> = r.iter().map(std::slice::from_ref).collect();
    let ww: Vec<&[f64]> = w.iter().map(std::slice::from_ref).collect();
    let (fr, fw, _) = ordered_ecdfs(&rr, &ww, OrderMethod::Poset).map_err(|e| e.to_string())?;
    let (dr, dw) = (Ecdf1D::from_samples(r).unwrap(), Ecdf1D::from_samples(w).unwrap());
    let n = r.len() + w.len();
    for id in MeasureId::calibratable() {
        let spec = MeasureSpec::new(id);
        let via_poset = windiff::measures::measure_eval(&spec, &fr, &fw, n).map(|o| o.raw).ok();
        let direct = windiff::measures::measure_eval(&spec, &dr, &dw, n).map(|o| o.raw).ok();
        if via_poset != direct {
            return Err(format!("{id}: poset route {via_poset:?}, direct {direct:?}"));
        }
    }
    Ok(())
}

/// Random 1-D samples on a coarse grid, so ties occur.
pub fn random_samples<R: Rng>(rng: &mut R, max_len: usize) -> Vec<f64> {
    let n = rng.gen_range(1..=max_len);
    (0..n).map(|_| rng.gen_range(-20..=20) as f64 / 4.0).collect()
}
