//! Set partitioning by the CGD·MPD product and the 4-state trellis.
//!
//! Small codeword sets are split explicitly: every binary split maximises the
//! minimum intra-subset metric, which amounts to finding the largest metric
//! threshold whose "too close" graph is still bipartite.
//!
//! Sum/difference families are too large for that (4⁸ codewords over QPSK),
//! so they are partitioned through their `(x_p, x̃_{p+h})` pair alphabets. Each
//! pair alphabet gets an explicit level-1 label `ℓ_p`, and codeword subsets
//! are cosets of a binary linear map applied to `(ℓ_1, …, ℓ_P)`. The checks of
//! that map are chosen greedily, one per level, by exact evaluation.
//!
//! Exact evaluation uses the fact that symbol pairs split into groups whose
//! contributions to `DᴴD` add without cross terms, so every codeword-pair
//! metric is a function of one distance matrix per group.

use std::cmp::Ordering;
use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use num_complex::Complex;

use crate::code_metrics::{self, pair_metrics};
use crate::codebook::{CodeFamily, CodeKind};
use crate::constellation::{optimal_rotation, Constellation};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::scalar::{czero, Real};

/// Families up to this size are partitioned codeword by codeword.
pub const EXPLICIT_LIMIT: usize = 1024;

/// CGD values at or below this are treated as zero (rank deficient).
pub const CGD_TOLERANCE: f64 = 1e-9;

/// Default bound on error-event length for [`min_path_metrics`].
pub const DEFAULT_MAX_EVENT_LEN: usize = 8;

const TREE_HEADER: &str = "qostf-partition v1";
const TRELLIS_HEADER: &str = "qostf-trellis v1";

/// The two expanded QPSK families: `(φ₁..φ₄) = (0, 0, π/4, π/4)` and
/// `(π/4, π/4, 0, 0)`, with `φ_p` applied to both `x_p` and `x̃_{p+4}`.
///
/// Any base rotation is added on top of the pattern.
pub fn expand_constellation<T: Real>(base: &Constellation<T>) -> Result<(CodeFamily<T>, CodeFamily<T>)> {
    if base.order() != 4 {
        return Err(Error::InvalidOrder(base.order()));
    }
    let phi = optimal_rotation::<T>(4)?;
    let shift = |f: CodeFamily<T>| {
        let angles: Vec<T> = f.alphabets().iter().map(|a| a.rotation() + base.rotation()).collect();
        f.with_rotations(&angles)
    };
    Ok((shift(CodeFamily::family_a(phi)), shift(CodeFamily::family_b(phi))))
}

/// One level of a partition tree.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionLevel<T> {
    /// Subset label of every codeword. A subset with label `s` at level `k`
    /// splits into labels `2s` and `2s + 1` at level `k + 1`.
    pub labels: Vec<u32>,
    /// Minimum intra-subset CGD·MPD (`+∞` when every subset is a singleton).
    pub min_metric: T,
}

/// Pair-alphabet lifting rule of a large family.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairLift {
    /// Symbol positions of each pair.
    pub pairs: Vec<[usize; 2]>,
    /// Alphabet order shared by all positions.
    pub order: usize,
    /// `ℓ_p` for pair point `v = k_first·M + k_second`.
    pub pair_labels: Vec<Vec<u8>>,
    /// Parity checks on the `ℓ` vector (bit `p` is pair `p`), one per level.
    pub checks: Vec<u8>,
}

impl PairLift {
    /// Packed `ℓ` vector of a codeword given its digits.
    pub fn ell_mask(&self, digits: &[usize]) -> u8 {
        self.pairs.iter().enumerate().fold(0u8, |acc, (p, pr)| {
            let v = digits[pr[0]] * self.order + digits[pr[1]];
            acc | (self.pair_labels[p][v] << p)
        })
    }

    /// Subset label at `level` of a codeword with `ℓ` vector `mask`.
    pub fn label(&self, level: usize, mask: u8) -> u32 {
        subset_label(&self.checks[..level], mask)
    }

    /// Contribution of pair `p` taking pair point `v` to the level label.
    /// Labels are the XOR of the contributions of all pairs.
    pub fn label_contribution(&self, level: usize, pair: usize, v: usize) -> u32 {
        self.label(level, self.pair_labels[pair][v] << pair)
    }
}

fn subset_label(checks: &[u8], mask: u8) -> u32 {
    checks
        .iter()
        .fold(0u32, |acc, h| (acc << 1) | ((h & mask).count_ones() & 1))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartitionTree<T> {
    family: Option<CodeFamily<T>>,
    size: usize,
    /// Level 0 is the unsplit set.
    levels: Vec<PartitionLevel<T>>,
    lift: Option<PairLift>,
}

impl<T: Real> PartitionTree<T> {
    /// Number of binary splits below the root.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn family(&self) -> Option<&CodeFamily<T>> {
        self.family.as_ref()
    }

    pub fn lift(&self) -> Option<&PairLift> {
        self.lift.as_ref()
    }

    pub fn level(&self, level: usize) -> &PartitionLevel<T> {
        &self.levels[level]
    }

    pub fn levels(&self) -> &[PartitionLevel<T>] {
        &self.levels
    }

    pub fn min_metric(&self, level: usize) -> T {
        self.levels[level].min_metric
    }

    pub fn label(&self, level: usize, id: usize) -> u32 {
        self.levels[level].labels[id]
    }

    /// Members of every label slot `0..2^level`, each sorted; slots of
    /// subsets that never formed are empty.
    pub fn subsets(&self, level: usize) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); 1 << level];
        for (id, &l) in self.levels[level].labels.iter().enumerate() {
            out[l as usize].push(id as u32);
        }
        out
    }

    /// Versioned text form: header, family, per-level metrics, and either the
    /// lifting rule or the explicit labels.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{TREE_HEADER}").unwrap();
        writeln!(s, "size {}", self.size).unwrap();
        if let Some(f) = &self.family {
            writeln!(s, "kind {}", f.kind().name()).unwrap();
            let orders: Vec<String> = f.alphabets().iter().map(|a| a.order().to_string()).collect();
            writeln!(s, "orders {}", orders.join(" ")).unwrap();
            let angles: Vec<String> = f.alphabets().iter().map(|a| format!("{:?}", a.rotation().as_f64())).collect();
            writeln!(s, "angles {}", angles.join(" ")).unwrap();
        }
        let metrics: Vec<String> = self.levels.iter().map(|l| format!("{:?}", l.min_metric.as_f64())).collect();
        writeln!(s, "metrics {}", metrics.join(" ")).unwrap();
        match &self.lift {
            Some(lift) => {
                let pairs: Vec<String> = lift.pairs.iter().map(|p| format!("{},{}", p[0], p[1])).collect();
                writeln!(s, "pairs {} order {}", pairs.join(" "), lift.order).unwrap();
                for (p, labels) in lift.pair_labels.iter().enumerate() {
                    let bits: String = labels.iter().map(|b| char::from(b'0' + b)).collect();
                    writeln!(s, "pair_labels {p} {bits}").unwrap();
                }
                let checks: Vec<String> = lift.checks.iter().map(|c| c.to_string()).collect();
                writeln!(s, "checks {}", checks.join(" ")).unwrap();
            }
            None => {
                for (k, level) in self.levels.iter().enumerate().skip(1) {
                    let labels: Vec<String> = level.labels.iter().map(|l| l.to_string()).collect();
                    writeln!(s, "labels {k} {}", labels.join(" ")).unwrap();
                }
            }
        }
        writeln!(s, "end partition").unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let (tree, _) = parse_tree(&lines, 0)?;
        Ok(tree)
    }
}

/// Upper-triangular storage of a symmetric pairwise metric.
struct MetricMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> MetricMatrix<T> {
    fn new(codewords: &[CMatrix<T>]) -> Result<Self> {
        let n = codewords.len();
        let mut data = vec![T::infinity(); n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let m = pair_metrics(&codewords[i], &codewords[j])?.product();
                data[i * n + j] = m;
                data[j * n + i] = m;
            }
        }
        Ok(Self { n, data })
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    fn intra_min(&self, members: &[usize]) -> T {
        let mut best = T::infinity();
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                best = best.min(self.get(i, j));
            }
        }
        best
    }
}

/// Two-colouring of the graph joining members closer than `threshold`
/// (all pairs when `None`). Components are visited from their lowest member
/// and oriented so that the two parts stay as balanced as possible.
fn two_colour<T: Real>(members: &[usize], m: &MetricMatrix<T>, threshold: Option<T>) -> Option<Vec<u8>> {
    let k = members.len();
    let close = |a: usize, b: usize| threshold.is_none_or(|t| m.get(members[a], members[b]) < t);
    let mut colour = vec![u8::MAX; k];
    let mut counts = [0usize; 2];
    let mut queue = VecDeque::new();
    for root in 0..k {
        if colour[root] != u8::MAX {
            continue;
        }
        let mut component = vec![root];
        colour[root] = 0;
        queue.push_back(root);
        while let Some(a) = queue.pop_front() {
            for b in 0..k {
                if b == a || !close(a, b) {
                    continue;
                }
                if colour[b] == u8::MAX {
                    colour[b] = 1 - colour[a];
                    component.push(b);
                    queue.push_back(b);
                } else if colour[b] == colour[a] {
                    return None;
                }
            }
        }
        let zeros = component.iter().filter(|&&v| colour[v] == 0).count();
        let ones = component.len() - zeros;
        let as_is = (counts[0] + zeros).abs_diff(counts[1] + ones);
        let flipped = (counts[0] + ones).abs_diff(counts[1] + zeros);
        if flipped < as_is {
            for &v in &component {
                colour[v] = 1 - colour[v];
            }
            counts[0] += ones;
            counts[1] += zeros;
        } else {
            counts[0] += zeros;
            counts[1] += ones;
        }
    }
    Some(colour)
}

/// Binary split maximising the minimum intra-part metric.
fn split<T: Real>(members: &[usize], m: &MetricMatrix<T>) -> (Vec<usize>, Vec<usize>) {
    if members.len() < 2 {
        return (members.to_vec(), Vec::new());
    }
    let colour = match two_colour(members, m, None) {
        Some(c) => c,
        None => {
            let mut values: Vec<T> = Vec::new();
            for (a, &i) in members.iter().enumerate() {
                for &j in &members[a + 1..] {
                    values.push(m.get(i, j));
                }
            }
            values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
            values.dedup();
            // threshold values[0] has no edges; all edges are infeasible
            let (mut lo, mut hi) = (0usize, values.len());
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if two_colour(members, m, Some(values[mid])).is_some() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            two_colour(members, m, Some(values[lo])).expect("threshold feasible")
        }
    };
    let mut parts = (Vec::new(), Vec::new());
    for (&id, &c) in members.iter().zip(&colour) {
        if c == 0 {
            parts.0.push(id);
        } else {
            parts.1.push(id);
        }
    }
    parts
}

fn explicit_levels<T: Real>(codewords: &[CMatrix<T>], levels: usize) -> Result<Vec<PartitionLevel<T>>> {
    let n = codewords.len();
    let m = MetricMatrix::new(codewords)?;
    let all: Vec<usize> = (0..n).collect();
    let mut out = vec![PartitionLevel {
        labels: vec![0; n],
        min_metric: m.intra_min(&all),
    }];
    let mut current: Vec<(u32, Vec<usize>)> = vec![(0, all)];
    for _ in 0..levels {
        let mut labels = vec![0u32; n];
        let mut next = Vec::new();
        let mut min_metric = T::infinity();
        for (label, members) in &current {
            let (a, b) = split(members, &m);
            for (child, part) in [(2 * label, a), (2 * label + 1, b)] {
                if part.is_empty() {
                    continue;
                }
                min_metric = min_metric.min(m.intra_min(&part));
                for &id in &part {
                    labels[id] = child;
                }
                next.push((child, part));
            }
        }
        check_monotone(out.last().unwrap().min_metric, min_metric)?;
        out.push(PartitionLevel { labels, min_metric });
        current = next;
    }
    Ok(out)
}

fn check_monotone<T: Real>(parent: T, child: T) -> Result<()> {
    if child < parent {
        return Err(Error::Design(format!(
            "partition refinement decreased the minimum metric from {parent} to {child}"
        )));
    }
    Ok(())
}

/// Greedy binary partition of an arbitrary codeword list; identifiers are
/// list positions.
pub fn partition_codewords<T: Real>(codewords: &[CMatrix<T>], levels: usize) -> Result<PartitionTree<T>> {
    if codewords.is_empty() {
        return Err(Error::Design("cannot partition an empty codeword set".into()));
    }
    Ok(PartitionTree {
        family: None,
        size: codewords.len(),
        levels: explicit_levels(codewords, levels)?,
        lift: None,
    })
}

/// Greedy binary partition of a family into `levels` levels.
///
/// Families of at most [`EXPLICIT_LIMIT`] codewords are split codeword by
/// codeword; larger ones go through [`partition_lifted`].
pub fn partition<T: Real>(family: &CodeFamily<T>, levels: usize) -> Result<PartitionTree<T>> {
    if family.len() <= EXPLICIT_LIMIT {
        let codewords: Vec<CMatrix<T>> = (0..family.len()).map(|i| family.codeword(i).matrix).collect();
        let mut tree = partition_codewords(&codewords, levels)?;
        tree.family = Some(family.clone());
        Ok(tree)
    } else {
        partition_lifted(family, levels)
    }
}

fn pair_structure<T: Real>(family: &CodeFamily<T>) -> Result<(Vec<[usize; 2]>, usize)> {
    let pairs: Vec<[usize; 2]> = family
        .kind()
        .symbol_pairs()
        .into_iter()
        .map(|p| <[usize; 2]>::try_from(p.as_slice()))
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Design(format!("{:?} has no symbol-pair structure", family.kind())))?;
    let order = family.alphabet(0).order();
    if family.alphabets().iter().any(|a| a.order() != order) || !order.is_power_of_two() {
        return Err(Error::Design("pair lifting needs one power-of-two alphabet order".into()));
    }
    if pairs.len() > 8 {
        return Err(Error::Design("too many symbol pairs".into()));
    }
    Ok((pairs, order))
}

/// Pair-alphabet partition lifted to the whole family.
pub fn partition_lifted<T: Real>(family: &CodeFamily<T>, levels: usize) -> Result<PartitionTree<T>> {
    let (pairs, order) = pair_structure(family)?;
    let np = pairs.len();
    if levels > np {
        return Err(Error::Design(format!(
            "a lifted partition over {np} pairs supports at most {np} levels"
        )));
    }
    let kind = family.kind();
    let mut pair_labels = Vec::with_capacity(np);
    for pr in &pairs {
        let codewords: Vec<CMatrix<T>> = (0..order * order)
            .map(|v| {
                let mut d = vec![0; kind.symbols()];
                d[pr[0]] = v / order;
                d[pr[1]] = v % order;
                family.codeword(family.index_of_digits(&d)).matrix
            })
            .collect();
        let m = MetricMatrix::new(&codewords)?;
        let all: Vec<usize> = (0..codewords.len()).collect();
        let (a, b) = split(&all, &m);
        if a.len() != b.len() {
            return Err(Error::Design(format!(
                "pair alphabet {pr:?} split unevenly ({} / {})",
                a.len(),
                b.len()
            )));
        }
        let mut labels = vec![0u8; codewords.len()];
        for &v in &b {
            labels[v] = 1;
        }
        pair_labels.push(labels);
    }
    let mut lift = PairLift {
        pairs,
        order,
        pair_labels,
        checks: Vec::new(),
    };

    // minimum metric per ℓ-difference pattern
    let table = ClassTable::build(family, &lift, family, &lift)?;
    let mut by_delta = vec![T::infinity(); 1 << np];
    for (lx, ly, stats) in table.iter() {
        let d = (lx ^ ly) as usize;
        by_delta[d] = by_delta[d].min(stats.product);
    }
    let class_min = |checks: &[u8]| {
        (0..1usize << np)
            .filter(|&d| checks.iter().all(|h| (h & d as u8).count_ones().is_multiple_of(2)))
            .fold(T::infinity(), |acc, d| acc.min(by_delta[d]))
    };

    let mut metrics = vec![class_min(&[])];
    for _ in 0..levels {
        let span = span_of(&lift.checks);
        let mut best: Option<(u8, T)> = None;
        for h in 1..(1u16 << np) {
            let h = h as u8;
            if span.contains(&h) {
                continue;
            }
            let mut trial = lift.checks.clone();
            trial.push(h);
            let v = class_min(&trial);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((h, v));
            }
        }
        let (h, v) = best.expect("an independent check exists below the pair count");
        check_monotone(*metrics.last().unwrap(), v)?;
        lift.checks.push(h);
        metrics.push(v);
    }

    Ok(PartitionTree {
        family: Some(family.clone()),
        size: family.len(),
        levels: lifted_levels(family, &lift, &metrics),
        lift: Some(lift),
    })
}

fn lifted_levels<T: Real>(family: &CodeFamily<T>, lift: &PairLift, metrics: &[T]) -> Vec<PartitionLevel<T>> {
    let masks: Vec<u8> = (0..family.len()).map(|id| lift.ell_mask(&family.digits(id))).collect();
    metrics
        .iter()
        .enumerate()
        .map(|(k, &min_metric)| PartitionLevel {
            labels: masks.iter().map(|&m| lift.label(k, m)).collect(),
            min_metric,
        })
        .collect()
}

fn span_of(checks: &[u8]) -> Vec<u8> {
    let mut span = vec![0u8];
    for &h in checks {
        let more: Vec<u8> = span.iter().map(|s| s ^ h).collect();
        span.extend(more);
    }
    span
}

/// Minimum metrics over a set of codeword pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubsetDistance<T> {
    pub product: T,
    pub cgd: T,
    /// Smallest `‖D‖²_F`.
    pub energy: T,
    pub rank: usize,
}

impl<T: Real> SubsetDistance<T> {
    fn empty() -> Self {
        Self {
            product: T::infinity(),
            cgd: T::infinity(),
            energy: T::infinity(),
            rank: usize::MAX,
        }
    }

    fn is_empty(&self) -> bool {
        self.rank == usize::MAX
    }

    fn merge(&mut self, other: &Self) {
        self.product = self.product.min(other.product);
        self.cgd = self.cgd.min(other.cgd);
        self.energy = self.energy.min(other.energy);
        self.rank = self.rank.min(other.rank);
    }

    fn observe(&mut self, gram: &CMatrix<T>, energy: T) {
        let cgd = gram.det().re.max(T::zero());
        let rank = if cgd > T::lit(CGD_TOLERANCE) {
            gram.rows()
        } else {
            code_metrics::rank(gram)
        };
        self.merge(&Self {
            product: cgd * (T::one() + energy),
            cgd,
            energy,
            rank,
        });
    }
}

/// Pairs of symbol pairs whose contributions to `DᴴD` interact.
fn coupled_groups<T: Real>(kind: CodeKind, pairs: &[[usize; 2]]) -> Vec<Vec<usize>> {
    let probe = |p: usize, a: (f64, f64), b: (f64, f64)| {
        let mut z = vec![czero::<T>(); kind.symbols()];
        z[pairs[p][0]] = Complex::new(T::lit(a.0), T::lit(a.1));
        z[pairs[p][1]] = Complex::new(T::lit(b.0), T::lit(b.1));
        z
    };
    let gram = |z: &[Complex<T>]| kind.build(z).matrix.gram();
    let n = pairs.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            i = parent[i];
        }
        i
    }
    for p in 0..n {
        for q in (p + 1)..n {
            let zp = probe(p, (0.31, -0.72), (0.58, 0.11));
            let zq = probe(q, (-0.43, 0.27), (0.19, 0.94));
            let both: Vec<Complex<T>> = zp.iter().zip(&zq).map(|(a, b)| a + b).collect();
            let cross = gram(&both)
                .try_sub(&gram(&zp))
                .and_then(|m| m.try_sub(&gram(&zq)))
                .expect("same template shape");
            if cross.max_abs() > T::lit(1e-9) {
                let (a, b) = (root(&mut parent, p), root(&mut parent, q));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut index = HashMap::new();
    for p in 0..n {
        let r = root(&mut parent, p);
        let g = *index.entry(r).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(p);
    }
    groups
}

#[derive(Clone)]
struct GroupEntry<T> {
    gram: CMatrix<T>,
    energy: T,
    lx: u8,
    ly: u8,
    zero: bool,
}

fn quantize<T: Real>(v: T) -> i64 {
    (v.as_f64() * 1e6).round() as i64
}

fn entry_key<T: Real>(e: &GroupEntry<T>) -> Vec<i64> {
    let mut key = vec![i64::from(e.lx), i64::from(e.ly), quantize(e.energy)];
    for z in e.gram.as_slice() {
        key.push(quantize(z.re));
        key.push(quantize(z.im));
    }
    key
}

fn dedupe<T: Real>(entries: Vec<GroupEntry<T>>) -> Vec<GroupEntry<T>> {
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for e in entries {
        if seen.insert(entry_key(&e), ()).is_none() {
            out.push(e);
        }
    }
    out
}

/// Exact minimum metrics between codewords of two families (possibly the
/// same one), bucketed by the `ℓ` vectors of both codewords.
struct ClassTable<T> {
    pairs: usize,
    stats: Vec<SubsetDistance<T>>,
}

impl<T: Real> ClassTable<T> {
    fn build(fx: &CodeFamily<T>, lift_x: &PairLift, fy: &CodeFamily<T>, lift_y: &PairLift) -> Result<Self> {
        let kind = fx.kind();
        if fy.kind() != kind || lift_x.pairs != lift_y.pairs || lift_x.order != lift_y.order {
            return Err(Error::Design("class tables need families of one template".into()));
        }
        let pairs = &lift_x.pairs;
        let m = lift_x.order;
        let groups = coupled_groups::<T>(kind, pairs);
        let mut per_group: Vec<Vec<GroupEntry<T>>> = Vec::new();
        for g in &groups {
            let points = (m * m).pow(g.len() as u32);
            let mut entries = Vec::new();
            let decode = |mut idx: usize| {
                let mut pts = vec![0usize; g.len()];
                for slot in pts.iter_mut().rev() {
                    *slot = idx % (m * m);
                    idx /= m * m;
                }
                pts
            };
            for ix in 0..points {
                let px = decode(ix);
                for iy in 0..points {
                    let py = decode(iy);
                    let mut delta = vec![czero::<T>(); kind.symbols()];
                    let (mut lx, mut ly) = (0u8, 0u8);
                    for (slot, &p) in g.iter().enumerate() {
                        let [a, b] = pairs[p];
                        let (vx, vy) = (px[slot], py[slot]);
                        delta[a] = fx.alphabet(a).point(vx / m) - fy.alphabet(a).point(vy / m);
                        delta[b] = fx.alphabet(b).point(vx % m) - fy.alphabet(b).point(vy % m);
                        lx |= lift_x.pair_labels[p][vx] << p;
                        ly |= lift_y.pair_labels[p][vy] << p;
                    }
                    let d = kind.build(&delta).matrix;
                    let energy = d.frobenius_sq();
                    entries.push(GroupEntry {
                        gram: d.gram(),
                        energy,
                        lx,
                        ly,
                        zero: energy <= T::lit(1e-24),
                    });
                }
            }
            per_group.push(dedupe(entries));
        }

        let np = pairs.len();
        let mut stats = vec![SubsetDistance::empty(); 1 << (2 * np)];
        let mut acc = per_group.remove(0);
        for next in per_group {
            let mut combined = Vec::with_capacity(acc.len() * next.len());
            for a in &acc {
                for b in &next {
                    combined.push(GroupEntry {
                        gram: a.gram.try_add(&b.gram)?,
                        energy: a.energy + b.energy,
                        lx: a.lx | b.lx,
                        ly: a.ly | b.ly,
                        zero: a.zero && b.zero,
                    });
                }
            }
            acc = dedupe(combined);
        }
        for e in acc.iter().filter(|e| !e.zero) {
            let slot = ((e.lx as usize) << np) | e.ly as usize;
            stats[slot].observe(&e.gram, e.energy);
        }
        Ok(Self { pairs: np, stats })
    }

    fn iter(&self) -> impl Iterator<Item = (u8, u8, &SubsetDistance<T>)> {
        let np = self.pairs;
        self.stats
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.is_empty())
            .map(move |(i, s)| ((i >> np) as u8, (i & ((1 << np) - 1)) as u8, s))
    }
}

/// Minimum metrics between every subset of `x` and every subset of `y` at
/// `level`, indexed `[i][j]`. Pairs of identical codewords are excluded, so
/// the diagonal of a tree against itself holds intra-subset minima.
pub fn subset_distances<T: Real>(
    x: &PartitionTree<T>,
    y: &PartitionTree<T>,
    level: usize,
) -> Result<Vec<Vec<SubsetDistance<T>>>> {
    let n = 1usize << level;
    let mut out = vec![vec![SubsetDistance::empty(); n]; n];
    let (fx, fy) = match (x.family(), y.family()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Design("subset distances need trees built from families".into())),
    };
    if level > x.depth() || level > y.depth() {
        return Err(Error::Design(format!("trees do not reach level {level}")));
    }
    match (x.lift(), y.lift()) {
        (Some(lx), Some(ly)) => {
            let table = ClassTable::build(fx, lx, fy, ly)?;
            for (mx, my, s) in table.iter() {
                out[lx.label(level, mx) as usize][ly.label(level, my) as usize].merge(s);
            }
        }
        _ => {
            if x.size() * y.size() > 1 << 22 {
                return Err(Error::Design("explicit subset distances limited to 2^22 pairs".into()));
            }
            let cx: Vec<CMatrix<T>> = (0..fx.len()).map(|i| fx.codeword(i).matrix).collect();
            let cy: Vec<CMatrix<T>> = (0..fy.len()).map(|i| fy.codeword(i).matrix).collect();
            for (i, a) in cx.iter().enumerate() {
                for (j, b) in cy.iter().enumerate() {
                    let d = a.try_sub(b)?;
                    let energy = d.frobenius_sq();
                    if energy <= T::lit(1e-24) {
                        continue;
                    }
                    out[x.label(level, i) as usize][y.label(level, j) as usize].observe(&d.gram(), energy);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubsetRef {
    pub family: usize,
    pub subset: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Branch {
    pub next: usize,
    pub subset: SubsetRef,
}

/// Result of one encoder step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Step {
    pub input: usize,
    pub next: usize,
    pub subset: SubsetRef,
    /// Codeword identifier within the subset's family.
    pub codeword: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trellis<T> {
    trees: Vec<PartitionTree<T>>,
    level: usize,
    /// `[family][subset]` sorted members.
    members: Vec<Vec<Vec<u32>>>,
    /// `[state][input]`.
    branches: Vec<Vec<Branch>>,
    input_bits: usize,
    subset_bits: usize,
    distances: HashMap<(SubsetRef, SubsetRef), SubsetDistance<T>>,
}

impl<T: Real> Trellis<T> {
    /// Assembles and validates a trellis.
    ///
    /// Checks: uniform power-of-two out-degree, valid next states and
    /// subsets, equal power-of-two subset sizes, distinct subsets per state
    /// (decodable), and nonzero CGD between every pair of branches leaving a
    /// common state.
    pub fn from_parts(trees: Vec<PartitionTree<T>>, level: usize, branches: Vec<Vec<Branch>>) -> Result<Self> {
        let states = branches.len();
        let degree = branches.first().map_or(0, Vec::len);
        if states == 0 || degree == 0 || !degree.is_power_of_two() {
            return Err(Error::Design("trellis needs states with a power-of-two out-degree".into()));
        }
        if branches.iter().any(|b| b.len() != degree) {
            return Err(Error::Design("every state needs the same number of branches".into()));
        }
        let members: Vec<Vec<Vec<u32>>> = trees
            .iter()
            .map(|t| {
                if t.depth() < level {
                    Err(Error::Design(format!("partition tree has depth {} < {level}", t.depth())))
                } else {
                    Ok(t.subsets(level))
                }
            })
            .collect::<Result<_>>()?;
        let mut size = None;
        for (s, row) in branches.iter().enumerate() {
            for (u, br) in row.iter().enumerate() {
                if br.next >= states {
                    return Err(Error::Design(format!("branch ({s}, {u}) leads to missing state {}", br.next)));
                }
                let subset = members
                    .get(br.subset.family)
                    .and_then(|f| f.get(br.subset.subset as usize))
                    .filter(|m| !m.is_empty())
                    .ok_or_else(|| Error::Design(format!("branch ({s}, {u}) uses a missing subset")))?;
                if *size.get_or_insert(subset.len()) != subset.len() {
                    return Err(Error::Design("parallel subsets differ in size".into()));
                }
                if row[..u].iter().any(|b| b.subset == br.subset) {
                    return Err(Error::Design(format!("state {s} reuses subset {:?}", br.subset)));
                }
            }
        }
        let size = size.unwrap();
        if !size.is_power_of_two() {
            return Err(Error::Design(format!("subset size {size} is not a power of two")));
        }

        let mut distances = HashMap::new();
        for fx in 0..trees.len() {
            for fy in fx..trees.len() {
                let table = subset_distances(&trees[fx], &trees[fy], level)?;
                for (i, row) in table.iter().enumerate() {
                    for (j, d) in row.iter().enumerate() {
                        let a = SubsetRef { family: fx, subset: i as u32 };
                        let b = SubsetRef { family: fy, subset: j as u32 };
                        distances.insert((a, b), *d);
                        distances.insert((b, a), *d);
                    }
                }
            }
        }
        let trellis = Self {
            trees,
            level,
            members,
            branches,
            input_bits: degree.trailing_zeros() as usize,
            subset_bits: size.trailing_zeros() as usize,
            distances,
        };
        trellis.validate()?;
        Ok(trellis)
    }

    fn validate(&self) -> Result<()> {
        let tol = T::lit(CGD_TOLERANCE);
        for (s, row) in self.branches.iter().enumerate() {
            for u in 0..row.len() {
                for v in (u + 1)..row.len() {
                    let d = self.distance(row[u].subset, row[v].subset);
                    if !(d.cgd > tol) {
                        return Err(Error::Design(format!(
                            "branches {u} and {v} leaving state {s} contain a zero-CGD codeword pair"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.branches.len()
    }

    pub fn branches_per_state(&self) -> usize {
        self.branches[0].len()
    }

    pub fn branch(&self, state: usize, input: usize) -> Branch {
        self.branches[state][input]
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn trees(&self) -> &[PartitionTree<T>] {
        &self.trees
    }

    pub fn family(&self, index: usize) -> &CodeFamily<T> {
        self.trees[index].family().expect("trellis trees carry families")
    }

    pub fn num_families(&self) -> usize {
        self.trees.len()
    }

    pub fn members(&self, subset: SubsetRef) -> &[u32] {
        &self.members[subset.family][subset.subset as usize]
    }

    /// Subset label of codeword `id` of family `family` at the working level.
    pub fn subset_of(&self, family: usize, id: usize) -> u32 {
        self.trees[family].label(self.level, id)
    }

    pub fn input_bits(&self) -> usize {
        self.input_bits
    }

    pub fn subset_bits(&self) -> usize {
        self.subset_bits
    }

    pub fn bits_per_step(&self) -> usize {
        self.input_bits + self.subset_bits
    }

    /// Minimum metrics between two subsets; identical subsets give the
    /// intra-subset minimum.
    pub fn distance(&self, a: SubsetRef, b: SubsetRef) -> SubsetDistance<T> {
        self.distances[&(a, b)]
    }

    /// Branch selection from the leading `input_bits` bits (MSB first), then
    /// the codeword within the subset from the remaining `subset_bits`.
    pub fn encode_step(&self, state: usize, bits: &[u8]) -> Result<Step> {
        if bits.len() != self.bits_per_step() {
            return Err(Error::BitGroupLength {
                expected: self.bits_per_step(),
                got: bits.len(),
            });
        }
        let value = |b: &[u8]| b.iter().fold(0usize, |acc, &x| (acc << 1) | usize::from(x & 1));
        let input = value(&bits[..self.input_bits]);
        let within = value(&bits[self.input_bits..]);
        let br = self.branches[state][input];
        Ok(Step {
            input,
            next: br.next,
            subset: br.subset,
            codeword: self.members(br.subset)[within],
        })
    }

    /// Inverse of [`Trellis::encode_step`].
    pub fn step_bits(&self, state: usize, input: usize, codeword: u32) -> Result<Vec<u8>> {
        let br = self.branches[state][input];
        let within = self
            .members(br.subset)
            .binary_search(&codeword)
            .map_err(|_| Error::Design(format!("codeword {codeword} is not on branch ({state}, {input})")))?;
        let mut bits = Vec::with_capacity(self.bits_per_step());
        bits.extend((0..self.input_bits).rev().map(|i| ((input >> i) & 1) as u8));
        bits.extend((0..self.subset_bits).rev().map(|i| ((within >> i) & 1) as u8));
        Ok(bits)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{TRELLIS_HEADER}").unwrap();
        writeln!(s, "states {} inputs {} level {}", self.num_states(), self.branches_per_state(), self.level).unwrap();
        for (f, tree) in self.trees.iter().enumerate() {
            writeln!(s, "tree {f}").unwrap();
            s.push_str(&tree.to_text());
        }
        for (st, row) in self.branches.iter().enumerate() {
            for (u, br) in row.iter().enumerate() {
                writeln!(
                    s,
                    "branch {st} {u} -> {} family {} subset {}",
                    br.next, br.subset.family, br.subset.subset
                )
                .unwrap();
            }
        }
        writeln!(s, "end trellis").unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let perr = |line: usize, msg: &str| Error::Parse { line: line + 1, msg: msg.to_string() };
        if lines.first().map(|l| l.trim()) != Some(TRELLIS_HEADER) {
            return Err(perr(0, "missing trellis header"));
        }
        let head: Vec<&str> = lines.get(1).ok_or_else(|| perr(1, "missing shape line"))?.split_whitespace().collect();
        let (states, inputs, level) = match head.as_slice() {
            ["states", s, "inputs", i, "level", l] => (
                parse_num::<usize>(s, 1)?,
                parse_num::<usize>(i, 1)?,
                parse_num::<usize>(l, 1)?,
            ),
            _ => return Err(perr(1, "expected `states S inputs I level L`")),
        };
        let mut trees = Vec::new();
        let mut branches = vec![vec![None; inputs]; states];
        let mut i = 2;
        while i < lines.len() {
            let tok: Vec<&str> = lines[i].split_whitespace().collect();
            match tok.as_slice() {
                [] => i += 1,
                ["tree", f] => {
                    if parse_num::<usize>(f, i)? != trees.len() {
                        return Err(perr(i, "trees must be listed in order"));
                    }
                    let (tree, next) = parse_tree(&lines, i + 1)?;
                    trees.push(tree);
                    i = next;
                }
                ["branch", s, u, "->", n, "family", f, "subset", sub] => {
                    let (s, u) = (parse_num::<usize>(s, i)?, parse_num::<usize>(u, i)?);
                    let slot = branches
                        .get_mut(s)
                        .and_then(|r| r.get_mut(u))
                        .ok_or_else(|| perr(i, "branch index out of range"))?;
                    *slot = Some(Branch {
                        next: parse_num(n, i)?,
                        subset: SubsetRef {
                            family: parse_num(f, i)?,
                            subset: parse_num(sub, i)?,
                        },
                    });
                    i += 1;
                }
                ["end", "trellis"] => {
                    let branches = branches
                        .into_iter()
                        .map(|r| r.into_iter().collect::<Option<Vec<_>>>())
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| perr(i, "incomplete branch table"))?;
                    return Self::from_parts(trees, level, branches);
                }
                _ => return Err(perr(i, "unrecognised trellis line")),
            }
        }
        Err(perr(lines.len(), "missing `end trellis`"))
    }
}

fn parse_num<N: std::str::FromStr>(tok: &str, line: usize) -> Result<N> {
    tok.parse().map_err(|_| Error::Parse {
        line: line + 1,
        msg: format!("bad number `{tok}`"),
    })
}

/// Parses one tree starting at `start`; returns it and the line after its
/// `end partition`.
fn parse_tree<T: Real>(lines: &[&str], start: usize) -> Result<(PartitionTree<T>, usize)> {
    let perr = |line: usize, msg: String| Error::Parse { line: line + 1, msg };
    if lines.get(start).map(|l| l.trim()) != Some(TREE_HEADER) {
        return Err(perr(start, "missing partition header".into()));
    }
    let mut size = None;
    let mut kind = None;
    let mut orders: Vec<usize> = Vec::new();
    let mut angles: Vec<f64> = Vec::new();
    let mut metrics: Vec<f64> = Vec::new();
    let mut pairs: Vec<[usize; 2]> = Vec::new();
    let mut order = 0;
    let mut pair_labels: Vec<Vec<u8>> = Vec::new();
    let mut checks: Option<Vec<u8>> = None;
    let mut labels: Vec<Vec<u32>> = Vec::new();
    let mut i = start + 1;
    loop {
        let line = lines.get(i).ok_or_else(|| perr(i, "missing `end partition`".into()))?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            [] => {}
            ["size", n] => size = Some(parse_num::<usize>(n, i)?),
            ["kind", k] => {
                kind = Some(CodeKind::from_name(k).ok_or_else(|| perr(i, format!("unknown kind `{k}`")))?)
            }
            ["orders", rest @ ..] => orders = rest.iter().map(|t| parse_num(t, i)).collect::<Result<_>>()?,
            ["angles", rest @ ..] => angles = rest.iter().map(|t| parse_num(t, i)).collect::<Result<_>>()?,
            ["metrics", rest @ ..] => metrics = rest.iter().map(|t| parse_num(t, i)).collect::<Result<_>>()?,
            ["pairs", rest @ ..] => {
                let (list, tail) = rest.split_at(rest.len().saturating_sub(2));
                match tail {
                    ["order", m] => order = parse_num(m, i)?,
                    _ => return Err(perr(i, "expected `order M` after pairs".into())),
                }
                for t in list {
                    let (a, b) = t.split_once(',').ok_or_else(|| perr(i, format!("bad pair `{t}`")))?;
                    pairs.push([parse_num(a, i)?, parse_num(b, i)?]);
                }
            }
            ["pair_labels", p, bits] => {
                if parse_num::<usize>(p, i)? != pair_labels.len() {
                    return Err(perr(i, "pair labels out of order".into()));
                }
                let row = bits
                    .bytes()
                    .map(|b| match b {
                        b'0' => Ok(0),
                        b'1' => Ok(1),
                        _ => Err(perr(i, "pair labels must be 0/1".into())),
                    })
                    .collect::<Result<_>>()?;
                pair_labels.push(row);
            }
            ["checks", rest @ ..] => checks = Some(rest.iter().map(|t| parse_num(t, i)).collect::<Result<_>>()?),
            ["labels", k, rest @ ..] => {
                if parse_num::<usize>(k, i)? != labels.len() + 1 {
                    return Err(perr(i, "label levels out of order".into()));
                }
                labels.push(rest.iter().map(|t| parse_num(t, i)).collect::<Result<_>>()?);
            }
            ["end", "partition"] => break,
            _ => return Err(perr(i, format!("unrecognised partition line `{line}`"))),
        }
        i += 1;
    }
    let size = size.ok_or_else(|| perr(i, "missing size".into()))?;
    let family = match kind {
        Some(kind) => {
            if orders.len() != angles.len() {
                return Err(perr(i, "orders and angles differ in length".into()));
            }
            let alphabets = orders
                .iter()
                .zip(&angles)
                .map(|(&m, &a)| Constellation::mpsk(m, T::lit(a)))
                .collect::<Result<_>>()?;
            Some(CodeFamily::new(kind, alphabets)?)
        }
        None => None,
    };
    if family.as_ref().is_some_and(|f| f.len() != size) {
        return Err(perr(i, "size does not match the family".into()));
    }
    let metrics: Vec<T> = metrics.into_iter().map(T::lit).collect();
    if metrics.is_empty() {
        return Err(perr(i, "missing metrics".into()));
    }
    let (levels, lift) = match checks {
        Some(checks) => {
            let family = family.as_ref().ok_or_else(|| perr(i, "lifted tree needs a family".into()))?;
            if checks.len() + 1 != metrics.len() || pair_labels.len() != pairs.len() {
                return Err(perr(i, "inconsistent lifting rule".into()));
            }
            let lift = PairLift {
                pairs,
                order,
                pair_labels,
                checks,
            };
            (lifted_levels(family, &lift, &metrics), Some(lift))
        }
        None => {
            if labels.len() + 1 != metrics.len() || labels.iter().any(|l| l.len() != size) {
                return Err(perr(i, "inconsistent explicit labels".into()));
            }
            let mut levels = vec![PartitionLevel {
                labels: vec![0; size],
                min_metric: metrics[0],
            }];
            for (l, m) in labels.into_iter().zip(&metrics[1..]) {
                levels.push(PartitionLevel { labels: l, min_metric: *m });
            }
            (levels, None)
        }
    };
    Ok((
        PartitionTree {
            family,
            size,
            levels,
            lift,
        },
        i + 1,
    ))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Separation of two branches merging into one state: `(rank, product,
/// energy)`, with a shared subset scoring zero since both branches could
/// then emit the same codeword.
fn merge_score<T: Real>(trellis: &Trellis<T>, a: SubsetRef, b: SubsetRef) -> (usize, T, T) {
    if a == b {
        return (0, T::zero(), T::zero());
    }
    let d = trellis.distance(a, b);
    (d.rank, d.product, d.energy)
}

fn score_lt<T: Real>(a: &(usize, T, T), b: &(usize, T, T)) -> bool {
    a.partial_cmp(b) == Some(Ordering::Less)
}

/// 4-state trellis over two families: states 0 and 1 draw from the subsets
/// of `tree_a`, states 2 and 3 from `tree_b`, and input `u` leads to state
/// `u`. Each state's branches are a permutation of its family's four
/// level-2 subsets, chosen to maximise the worst separation between
/// branches merging into a common state (lexicographically rank, CGD·MPD,
/// energy; first permutation in lexicographic order on ties).
pub fn build_trellis<T: Real>(tree_a: &PartitionTree<T>, tree_b: &PartitionTree<T>) -> Result<Trellis<T>> {
    const LEVEL: usize = 2;
    const STATES: usize = 4;
    for t in [tree_a, tree_b] {
        if t.depth() < LEVEL || t.subsets(LEVEL).iter().any(|s| s.is_empty()) {
            return Err(Error::Design("both trees need four non-empty level-2 subsets".into()));
        }
    }
    let placeholder = |family: usize| -> Vec<Branch> {
        (0..STATES)
            .map(|u| Branch {
                next: u,
                subset: SubsetRef { family, subset: u as u32 },
            })
            .collect()
    };
    // identity assignment first, to obtain the distance table
    let trees = vec![tree_a.clone(), tree_b.clone()];
    let base = Trellis::from_parts(
        trees.clone(),
        LEVEL,
        vec![placeholder(0), placeholder(0), placeholder(1), placeholder(1)],
    )?;
    let perms = permutations(STATES);
    let family_of = |s: usize| usize::from(s >= 2);
    let flat = |r: SubsetRef| r.family * STATES + r.subset as usize;
    let mut scores = [(0, T::zero(), T::zero()); (2 * STATES) * (2 * STATES)];
    for fa in 0..2 {
        for fb in 0..2 {
            for i in 0..STATES as u32 {
                for j in 0..STATES as u32 {
                    let (a, b) = (SubsetRef { family: fa, subset: i }, SubsetRef { family: fb, subset: j });
                    scores[flat(a) * 2 * STATES + flat(b)] = merge_score(&base, a, b);
                }
            }
        }
    }
    let mut best: Option<((usize, T, T), [usize; 4])> = None;
    for p0 in 0..perms.len() {
        for p1 in 0..perms.len() {
            for p2 in 0..perms.len() {
                for p3 in 0..perms.len() {
                    let choice = [p0, p1, p2, p3];
                    let refs = |s: usize, u: usize| SubsetRef {
                        family: family_of(s),
                        subset: perms[choice[s]][u] as u32,
                    };
                    let mut worst = (usize::MAX, T::infinity(), T::infinity());
                    for u in 0..STATES {
                        for s in 0..STATES {
                            for t in (s + 1)..STATES {
                                let sc = &scores[flat(refs(s, u)) * 2 * STATES + flat(refs(t, u))];
                                if score_lt(sc, &worst) {
                                    worst = *sc;
                                }
                            }
                        }
                    }
                    if best.as_ref().is_none_or(|(b, _)| score_lt(b, &worst)) {
                        best = Some((worst, choice));
                    }
                }
            }
        }
    }
    let (_, choice) = best.expect("permutations exist");
    let branches = (0..STATES)
        .map(|s| {
            (0..STATES)
                .map(|u| Branch {
                    next: u,
                    subset: SubsetRef {
                        family: family_of(s),
                        subset: perms[choice[s]][u] as u32,
                    },
                })
                .collect()
        })
        .collect();
    let trellis = Trellis { branches, ..base };
    trellis.validate()?;
    Ok(trellis)
}

/// Search result of [`min_path_metrics`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathMetrics<T> {
    /// Minimum number of differing steps over events whose branch sequences
    /// diverge and remerge within the search length; `None` if no such
    /// event fits.
    pub min_delta_h: Option<usize>,
    /// Lower bound on CGD·MPD over those events:
    /// `(Σ_z cgd_z^{1/n})ⁿ · Π_z (1 + e_z)` with per-step subset minima
    /// (determinant Minkowski inequality for the CGD factor).
    pub min_event_metric: T,
    /// Exact minimum CGD·MPD between parallel codewords on one branch;
    /// `+∞` without parallel transitions.
    pub parallel_metric: T,
}

impl<T: Real> PathMetrics<T> {
    /// Smallest metric over all error events, parallel ones included.
    pub fn min_metric(&self) -> T {
        self.min_event_metric.min(self.parallel_metric)
    }
}

/// Exhaustive search over branch-diverging error events up to `max_len`
/// steps, from every starting state.
pub fn min_path_metrics<T: Real>(trellis: &Trellis<T>, max_len: usize) -> PathMetrics<T> {
    let states = trellis.num_states();
    let degree = trellis.branches_per_state();
    let n = trellis.family(0).kind().tx_antennas();
    let inv_n = T::one() / T::from_usize(n).unwrap();

    let mut parallel = T::infinity();
    if trellis.subset_bits() > 0 {
        for row in &trellis.branches {
            for br in row {
                parallel = parallel.min(trellis.distance(br.subset, br.subset).product);
            }
        }
    }

    // Pareto fronts of (Σ cgd^{1/n}, Π (1 + e), δ) per unmerged state pair
    type Front<T> = Vec<(T, T, usize)>;
    let step_cost = |a: SubsetRef, b: SubsetRef| -> Option<(T, T)> {
        (a != b).then(|| {
            let d = trellis.distance(a, b);
            (d.cgd.powf(inv_n), T::one() + d.energy)
        })
    };
    let mut min_delta: Option<usize> = None;
    let mut min_metric = T::infinity();
    let mut fronts: HashMap<(usize, usize), Front<T>> = HashMap::new();
    let mut record = |s1: usize, s2: usize, value: (T, T, usize), fronts: &mut HashMap<(usize, usize), Front<T>>| {
        if s1 == s2 {
            min_delta = Some(min_delta.map_or(value.2, |d: usize| d.min(value.2)));
            min_metric = min_metric.min(value.0.powi(n as i32) * value.1);
            return;
        }
        let key = (s1.min(s2), s1.max(s2));
        let front = fronts.entry(key).or_default();
        let dominated = front
            .iter()
            .any(|f| f.0 <= value.0 && f.1 <= value.1 && f.2 <= value.2);
        if !dominated {
            front.retain(|f| !(value.0 <= f.0 && value.1 <= f.1 && value.2 <= f.2));
            front.push(value);
        }
    };
    for s in 0..states {
        for u in 0..degree {
            for v in (u + 1)..degree {
                let (a, b) = (trellis.branches[s][u], trellis.branches[s][v]);
                let (c, e, d) = match step_cost(a.subset, b.subset) {
                    Some((c, e)) => (c, e, 1),
                    None => (T::zero(), T::one(), 0),
                };
                record(a.next, b.next, (c, e, d), &mut fronts);
            }
        }
    }
    for _ in 1..max_len {
        let current = std::mem::take(&mut fronts);
        for ((s1, s2), front) in current {
            for u in 0..degree {
                for v in 0..degree {
                    let (a, b) = (trellis.branches[s1][u], trellis.branches[s2][v]);
                    let cost = step_cost(a.subset, b.subset);
                    for &(c, e, d) in &front {
                        let value = match cost {
                            Some((dc, de)) => (c + dc, e * de, d + 1),
                            None => (c, e, d),
                        };
                        record(a.next, b.next, value, &mut fronts);
                    }
                }
            }
        }
    }
    PathMetrics {
        min_delta_h: min_delta,
        min_event_metric: min_metric,
        parallel_metric: parallel,
    }
}
