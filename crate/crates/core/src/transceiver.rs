//! Frame encoder and maximum-likelihood decoders.
//!
//! Every codeword row is either plain or conjugated in the symbols, so after
//! conjugating the received samples of conjugated rows a block reads
//! `ỹ = W z + ñ`, stacked over subcarrier rows and receive antennas. Summing
//! the squared residual over receive antennas is the MRC combination.
//!
//! The symbols split into groups that are orthogonal under a channel that is
//! flat over an inner block. With a frequency-selective channel the groups
//! interact slightly, so the block decoder stays exact by branch and bound:
//! for a candidate of one group, the residual after projecting out the span
//! of the other group is a lower bound on every completed metric.

use num_complex::Complex;

use crate::channel::{FrequencyResponse, Received};
use crate::codebook::{CodeFamily, CodeKind, Dispersion, StfCodeword, StfGrid};
use crate::constellation::{optimal_rotation, Constellation};
use crate::error::{Error, Result};
use crate::partitioner::{build_trellis, expand_constellation, partition, PartitionTree, Trellis};
use crate::scalar::{czero, Real};

/// Transmission scheme of a frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Two-antenna sum/difference Alamouti block code.
    Qostfbc2Tx,
    /// Four-antenna 8×4 block code, one codeword per 16 bits.
    Qostfbc4Tx,
    /// Four-antenna 4-state trellis code with parallel transitions.
    Qostftc4State,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Qostfbc2Tx, Scheme::Qostfbc4Tx, Scheme::Qostftc4State];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Qostfbc2Tx => "qostfbc-2tx",
            Scheme::Qostfbc4Tx => "qostfbc-4tx",
            Scheme::Qostftc4State => "qostftc-4state",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn kind(self) -> CodeKind {
        match self {
            Scheme::Qostfbc2Tx => CodeKind::AlamoutiSd,
            Scheme::Qostfbc4Tx | Scheme::Qostftc4State => CodeKind::Qostftc8,
        }
    }

    pub fn tx_antennas(self) -> usize {
        self.kind().tx_antennas()
    }

    pub fn is_trellis(self) -> bool {
        self == Scheme::Qostftc4State
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameConfig {
    pub scheme: Scheme,
    /// Subcarriers `N`.
    pub subcarriers: usize,
    /// OFDM symbols per frame `T` (the quasi-static span).
    pub ofdm_symbols: usize,
    /// Receive antennas `M_r`.
    pub rx: usize,
}

impl FrameConfig {
    pub fn new(scheme: Scheme, rx: usize) -> Result<Self> {
        Self::with_size(scheme, rx, 64, 4)
    }

    pub fn with_size(scheme: Scheme, rx: usize, subcarriers: usize, ofdm_symbols: usize) -> Result<Self> {
        let cfg = Self {
            scheme,
            subcarriers,
            ofdm_symbols,
            rx,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let rows = self.rows();
        if self.subcarriers == 0 || !self.subcarriers.is_multiple_of(rows) {
            return Err(Error::Config(format!(
                "{} needs a positive multiple of {rows} subcarriers, got {}",
                self.scheme, self.subcarriers
            )));
        }
        if self.ofdm_symbols == 0 {
            return Err(Error::Config("a frame needs at least one OFDM symbol".into()));
        }
        if self.rx == 0 {
            return Err(Error::Config("at least one receive antenna is required".into()));
        }
        Ok(())
    }

    pub fn tx(&self) -> usize {
        self.scheme.tx_antennas()
    }

    /// Subcarriers per codeword.
    pub fn rows(&self) -> usize {
        self.scheme.kind().rows()
    }

    pub fn blocks_per_symbol(&self) -> usize {
        self.subcarriers / self.rows()
    }

    /// Codewords per frame (`Z` trellis steps in trellis mode).
    pub fn steps(&self) -> usize {
        self.ofdm_symbols * self.blocks_per_symbol()
    }

    /// OFDM symbol and block index of step `z`.
    pub fn placement(&self, z: usize) -> (usize, usize) {
        (z / self.blocks_per_symbol(), z % self.blocks_per_symbol())
    }
}

/// Codeword chosen at one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CodewordRef {
    pub family: usize,
    pub id: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedFrame<T> {
    pub grid: StfGrid<T>,
    pub codewords: Vec<CodewordRef>,
    pub final_state: usize,
}

/// One survivor step of the decoded path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepTrace<T> {
    pub state: usize,
    pub input: usize,
    pub codeword: CodewordRef,
    pub branch_metric: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodedFrame<T> {
    pub bits: Vec<u8>,
    pub path_metric: T,
    pub steps: Vec<StepTrace<T>>,
}

/// `Σ_q Σ_{n ∈ block} |Y_q(n) − Σ_p C[n,p] H_{p,q}(n)|²` for the transmitted
/// (power-normalised) form of `candidate`, over receive antennas `rx`.
pub fn block_metric<T: Real>(
    received: &Received<T>,
    cfr: &FrequencyResponse<T>,
    candidate: &StfCodeword<T>,
    t: usize,
    block: usize,
    rx: std::ops::Range<usize>,
) -> T {
    let c = candidate.transmit_matrix();
    let rows = c.rows();
    let mut acc = T::zero();
    for q in rx {
        for r in 0..rows {
            let n = block * rows + r;
            let s = (0..c.cols()).fold(czero(), |s, p| s + c[(r, p)] * cfr.get(p, q, n));
            acc = acc + (received.get(q, t, n) - s).norm_sqr();
        }
    }
    acc
}

/// Nonzero dispersion terms of one codeword row, scaled for transmission.
#[derive(Clone, Debug)]
struct RowModel<T> {
    conj: bool,
    /// `(antenna p, symbol k, coefficient)`.
    terms: Vec<(usize, usize, Complex<T>)>,
}

#[derive(Clone, Debug)]
struct Candidate<T> {
    /// `(position, phase index)` for each position of the group.
    digits: Vec<(usize, usize)>,
    label: u32,
    _marker: std::marker::PhantomData<T>,
}

/// Best codeword of one label class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassBest<T> {
    pub metric: T,
    pub id: u32,
}

/// Exact ML decoder of single codewords of one family, optionally reporting
/// the best codeword of every subset class of a partition level.
#[derive(Clone, Debug)]
pub struct BlockDecoder<T> {
    family: CodeFamily<T>,
    rows: Option<Vec<RowModel<T>>>,
    groups: Vec<Vec<usize>>,
    candidates: Vec<Vec<Candidate<T>>>,
    classes: usize,
    /// Class of every codeword; only kept when the exhaustive path is used.
    labels: Option<Vec<u32>>,
    /// `(position, phase index)` pinned for every decoded codeword.
    fixed: Vec<(usize, usize)>,
}

fn pure_rows<T: Real>(disp: &Dispersion<T>, scale: T) -> Option<Vec<RowModel<T>>> {
    let tiny = T::lit(1e-12);
    (0..disp.rows)
        .map(|r| {
            let conj = disp.row_conjugated(r)?;
            let mut terms = Vec::new();
            for p in 0..disp.cols {
                for k in 0..disp.symbols {
                    let c = if conj { disp.antilinear(r, p, k) } else { disp.linear(r, p, k) };
                    if c.norm() > tiny {
                        terms.push((p, k, c * scale));
                    }
                }
            }
            Some(RowModel { conj, terms })
        })
        .collect()
}

/// Symbol groups decoupled by the template under a channel that is constant
/// over each inner block: connected components of the sparsity pattern of
/// `WᴴW`, stacked over two receive antennas with fixed generic gains.
fn symbol_groups<T: Real>(kind: CodeKind, rows: &[RowModel<T>]) -> Vec<Vec<usize>> {
    let k = kind.symbols();
    let inner = kind.inner_block_rows();
    let gain = |p: usize, q: usize, b: usize| {
        let x = 0.37 + 0.61 * p as f64 + 1.13 * q as f64 + 2.29 * b as f64;
        Complex::new(T::lit(x.sin()), T::lit((1.7 * x).cos()))
    };
    let mut w = Vec::new();
    for q in 0..2 {
        for (r, row) in rows.iter().enumerate() {
            let mut line = vec![czero::<T>(); k];
            for &(p, s, c) in &row.terms {
                line[s] = line[s] + c * gain(p, q, r / inner);
            }
            if row.conj {
                line.iter_mut().for_each(|z| *z = z.conj());
            }
            w.push(line);
        }
    }
    let mut parent: Vec<usize> = (0..k).collect();
    fn root(parent: &[usize], mut i: usize) -> usize {
        while parent[i] != i {
            i = parent[i];
        }
        i
    }
    for a in 0..k {
        for b in (a + 1)..k {
            let g = w.iter().fold(czero::<T>(), |acc, line| acc + line[a].conj() * line[b]);
            if g.norm() > T::lit(1e-9) {
                let (ra, rb) = (root(&parent, a), root(&parent, b));
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut roots = Vec::new();
    for s in 0..k {
        let r = root(&parent, s);
        match roots.iter().position(|&x| x == r) {
            Some(g) => groups[g].push(s),
            None => {
                roots.push(r);
                groups.push(vec![s]);
            }
        }
    }
    groups
}

impl<T: Real> BlockDecoder<T> {
    /// Decoder over all codewords of `family` as a single class.
    pub fn new(family: &CodeFamily<T>) -> Self {
        Self::build(family, None)
    }

    /// Decoder reporting the best codeword of each subset of `tree` at
    /// `level`.
    pub fn with_classes(tree: &PartitionTree<T>, level: usize) -> Result<Self> {
        let family = tree
            .family()
            .ok_or_else(|| Error::Design("class decoding needs a tree built from a family".into()))?;
        if level > tree.depth() {
            return Err(Error::Design(format!("tree has no level {level}")));
        }
        Ok(Self::build(family, Some((tree, level))))
    }

    fn build(family: &CodeFamily<T>, classes: Option<(&PartitionTree<T>, usize)>) -> Self {
        let kind = family.kind();
        let rows = pure_rows(&kind.dispersion::<T>(), kind.power_scale::<T>());
        let groups = rows.as_ref().map(|r| symbol_groups(kind, r)).unwrap_or_default();
        let n_classes = classes.map_or(1, |(_, level)| 1usize << level);

        // per-pair label contributions, usable only if every pair stays in one group
        let lift = classes.and_then(|(tree, level)| tree.lift().map(|l| (l, level)));
        let separable = match (classes, lift) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(_), Some((l, _))) => l
                .pairs
                .iter()
                .all(|pr| groups.iter().any(|g| g.contains(&pr[0]) && g.contains(&pr[1]))),
        };
        let fast = rows.is_some() && groups.len() == 2 && separable;
        if !fast {
            log::warn!(
                "{kind:?}: pairwise decomposition unavailable ({} groups, separable labels: {separable}); \
                 falling back to exhaustive search",
                groups.len()
            );
        }

        let mut candidates = Vec::new();
        if fast {
            for g in &groups {
                let count: usize = g.iter().map(|&k| family.alphabet(k).order()).product();
                let mut list = Vec::with_capacity(count);
                for mut idx in 0..count {
                    let mut digits = vec![(0usize, 0usize); g.len()];
                    for (slot, &k) in g.iter().enumerate().rev() {
                        let m = family.alphabet(k).order();
                        digits[slot] = (k, idx % m);
                        idx /= m;
                    }
                    let label = match lift {
                        Some((l, level)) => l
                            .pairs
                            .iter()
                            .enumerate()
                            .filter(|(_, pr)| g.contains(&pr[0]))
                            .fold(0u32, |acc, (p, pr)| {
                                let d = |pos: usize| digits.iter().find(|(k, _)| *k == pos).unwrap().1;
                                acc ^ l.label_contribution(level, p, d(pr[0]) * l.order + d(pr[1]))
                            }),
                        None => 0,
                    };
                    list.push(Candidate {
                        digits,
                        label,
                        _marker: std::marker::PhantomData,
                    });
                }
                candidates.push(list);
            }
        }
        let labels = match (fast, classes) {
            (false, Some((tree, level))) => Some(tree.level(level).labels.clone()),
            _ => None,
        };
        Self {
            family: family.clone(),
            rows,
            groups: if fast { groups } else { Vec::new() },
            candidates,
            classes: n_classes,
            labels,
            fixed: Vec::new(),
        }
    }

    /// Single-class decoder over the codewords of `family` whose digit at
    /// each listed position equals the given phase index.
    pub fn restricted(family: &CodeFamily<T>, fixed: &[(usize, usize)]) -> Result<Self> {
        for &(k, d) in fixed {
            if k >= family.kind().symbols() || d >= family.alphabet(k).order() {
                return Err(Error::Config(format!("cannot pin position {k} to phase {d}")));
            }
        }
        let mut dec = Self::build(family, None);
        for list in &mut dec.candidates {
            list.retain(|c| c.digits.iter().all(|&(k, d)| fixed.iter().all(|&(fk, fd)| fk != k || fd == d)));
        }
        dec.fixed = fixed.to_vec();
        Ok(dec)
    }

    /// Number of codewords the decoder searches.
    pub fn candidate_count(&self) -> usize {
        (0..self.family.len()).filter(|&id| self.allowed(id)).count()
    }

    fn allowed(&self, id: usize) -> bool {
        self.fixed.is_empty() || {
            let digits = self.family.digits(id);
            self.fixed.iter().all(|&(k, d)| digits[k] == d)
        }
    }

    pub fn family(&self) -> &CodeFamily<T> {
        &self.family
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Whether the pairwise branch-and-bound path is in use.
    pub fn is_pairwise(&self) -> bool {
        !self.groups.is_empty()
    }

    /// Symbol groups of the pairwise decomposition (empty when exhaustive).
    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Exact ML codeword and its metric.
    pub fn decode(
        &self,
        received: &Received<T>,
        cfr: &FrequencyResponse<T>,
        t: usize,
        block: usize,
    ) -> ClassBest<T> {
        let per_class = self.decode_classes(received, cfr, t, block);
        per_class
            .into_iter()
            .fold(None::<ClassBest<T>>, |best, c| match best {
                Some(b) if b.metric <= c.metric => Some(b),
                _ => Some(c),
            })
            .expect("at least one class")
    }

    /// Exact ML codeword of every class.
    pub fn decode_classes(
        &self,
        received: &Received<T>,
        cfr: &FrequencyResponse<T>,
        t: usize,
        block: usize,
    ) -> Vec<ClassBest<T>> {
        match &self.rows {
            Some(rows) if self.is_pairwise() => {
                let (y, w) = linear_model(rows, self.family.kind().symbols(), received, cfr, t, block);
                self.branch_and_bound(&y, &w)
            }
            _ => self.exhaustive_classes(received, cfr, t, block),
        }
    }

    /// Reference decoder: direct metric of every codeword.
    pub fn exhaustive_classes(
        &self,
        received: &Received<T>,
        cfr: &FrequencyResponse<T>,
        t: usize,
        block: usize,
    ) -> Vec<ClassBest<T>> {
        let mut best = vec![
            ClassBest {
                metric: T::infinity(),
                id: u32::MAX,
            };
            self.classes
        ];
        for id in (0..self.family.len()).filter(|&id| self.allowed(id)) {
            let label = self.class_of(id);
            let m = block_metric(received, cfr, &self.family.codeword(id), t, block, 0..received.rx());
            if m < best[label].metric {
                best[label] = ClassBest { metric: m, id: id as u32 };
            }
        }
        best
    }

    fn class_of(&self, id: usize) -> usize {
        if self.classes == 1 {
            return 0;
        }
        if let Some(labels) = &self.labels {
            return labels[id] as usize;
        }
        let digits = self.family.digits(id);
        self.candidates.iter().fold(0u32, |acc, list| {
            let c = list
                .iter()
                .find(|c| c.digits.iter().all(|&(k, d)| digits[k] == d))
                .expect("every digit tuple is a candidate");
            acc ^ c.label
        }) as usize
    }

    /// `W_g z` for every combination of the symbol positions `slots`, flat,
    /// last position varying fastest.
    fn combos(&self, slots: &[usize], w: &[Vec<Complex<T>>], len: usize) -> Vec<Complex<T>> {
        let count: usize = slots.iter().map(|&k| self.family.alphabet(k).order()).product();
        let mut out = vec![czero::<T>(); count * len];
        for c in 0..count {
            let mut idx = c;
            let dst = &mut out[c * len..(c + 1) * len];
            for &k in slots.iter().rev() {
                let alpha = self.family.alphabet(k);
                let pt = alpha.points()[idx % alpha.order()];
                idx /= alpha.order();
                for (d, col) in dst.iter_mut().zip(&w[k]) {
                    *d = *d + col * pt;
                }
            }
        }
        out
    }

    fn branch_and_bound(&self, y: &[Complex<T>], w: &[Vec<Complex<T>>]) -> Vec<ClassBest<T>> {
        let len = y.len();
        let norm = |v: &mut dyn Iterator<Item = Complex<T>>| v.fold(T::zero(), |s, z| s + z.norm_sqr());
        // each group's contribution W_g z splits into two half sums; the bound
        // of a candidate is its residual outside the span of the other group
        let mut halves = Vec::with_capacity(2);
        let mut bounds: Vec<Vec<T>> = Vec::with_capacity(2);
        for g in 0..2 {
            let basis = orthonormal_basis(self.groups[1 - g].iter().map(|&k| w[k].as_slice()), len);
            let project = |v: &mut [Complex<T>]| {
                for q in &basis {
                    let ip = q.iter().zip(v.iter()).fold(czero::<T>(), |s, (qi, vi)| s + qi.conj() * vi);
                    for (vi, qi) in v.iter_mut().zip(q) {
                        *vi = *vi - ip * qi;
                    }
                }
            };
            let slots = &self.groups[g];
            let (first, second) = slots.split_at(slots.len() / 2);
            let s1 = self.combos(first, w, len);
            let s2 = self.combos(second, w, len);
            let mut p1 = s1.clone();
            p1.chunks_mut(len).for_each(&project);
            let mut p2 = s2.clone();
            p2.chunks_mut(len).for_each(&project);
            let mut yp = y.to_vec();
            project(&mut yp);
            let n2 = s2.len() / len;
            let lbs = (0..self.candidates[g].len())
                .map(|i| {
                    let (a, b) = (&p1[(i / n2) * len..][..len], &p2[(i % n2) * len..][..len]);
                    norm(&mut (0..len).map(|r| yp[r] - a[r] - b[r])).max(T::zero())
                })
                .collect();
            bounds.push(lbs);
            halves.push((s1, s2, n2));
        }
        let contribution = |g: usize, i: usize, r: usize| {
            let (s1, s2, n2) = &halves[g];
            s1[(i / n2) * len + r] + s2[(i % n2) * len + r]
        };
        let metric = |i: usize, j: usize| norm(&mut (0..len).map(|r| y[r] - contribution(0, i, r) - contribution(1, j, r)));
        let label = |g: usize, i: usize| self.candidates[g][i].label;
        let argmin = |v: &[T], keep: &dyn Fn(usize) -> bool| {
            (0..v.len())
                .filter(|&i| keep(i))
                .fold(None::<usize>, |b, i| match b {
                    Some(x) if v[x] <= v[i] => Some(x),
                    _ => Some(i),
                })
        };

        // seed every class from the best bound of the first group
        let mut best = vec![(T::infinity(), usize::MAX, usize::MAX); self.classes];
        let i0 = argmin(&bounds[0], &|_| true).expect("nonempty group");
        for (c, slot) in best.iter_mut().enumerate() {
            let want = label(0, i0) ^ c as u32;
            if let Some(j) = argmin(&bounds[1], &|j| label(1, j) == want) {
                *slot = (metric(i0, j), i0, j);
            }
        }
        let mut ceiling = best.iter().fold(T::zero(), |c, b| c.max(b.0));
        let sorted = |lbs: &[T], ceiling: T| {
            let mut idx: Vec<usize> = (0..lbs.len()).filter(|&i| lbs[i] < ceiling).collect();
            idx.sort_by(|&a, &b| lbs[a].partial_cmp(&lbs[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
            idx
        };
        let (order_a, order_b) = (sorted(&bounds[0], ceiling), sorted(&bounds[1], ceiling));

        let mut residual = vec![czero::<T>(); len];
        for &i in &order_a {
            let lb_a = bounds[0][i];
            if lb_a >= ceiling {
                break;
            }
            for (r, v) in residual.iter_mut().enumerate() {
                *v = y[r] - contribution(0, i, r);
            }
            let label_a = label(0, i);
            for &j in &order_b {
                let lb_b = bounds[1][j];
                if lb_b >= ceiling {
                    break;
                }
                let class = (label_a ^ label(1, j)) as usize;
                if lb_a.max(lb_b) >= best[class].0 {
                    continue;
                }
                let m = norm(&mut (0..len).map(|r| residual[r] - contribution(1, j, r)));
                if m < best[class].0 {
                    best[class] = (m, i, j);
                    ceiling = best.iter().fold(T::zero(), |c, b| c.max(b.0));
                }
            }
        }
        best.into_iter()
            .map(|(metric, i, j)| {
                let mut digits = vec![0usize; self.family.kind().symbols()];
                for &(k, d) in self.candidates[0][i].digits.iter().chain(&self.candidates[1][j].digits) {
                    digits[k] = d;
                }
                ClassBest {
                    metric,
                    id: self.family.index_of_digits(&digits) as u32,
                }
            })
            .collect()
    }
}

/// `(ỹ, W)` of one block: `W[k]` is the column of symbol `k`, rows ordered
/// receive antenna major, then codeword row.
fn linear_model<T: Real>(
    rows: &[RowModel<T>],
    symbols: usize,
    received: &Received<T>,
    cfr: &FrequencyResponse<T>,
    t: usize,
    block: usize,
) -> (Vec<Complex<T>>, Vec<Vec<Complex<T>>>) {
    let n_rows = rows.len();
    let len = n_rows * received.rx();
    let mut y = Vec::with_capacity(len);
    let mut w = vec![vec![czero::<T>(); len]; symbols];
    for q in 0..received.rx() {
        for (r, row) in rows.iter().enumerate() {
            let n = block * n_rows + r;
            let i = q * n_rows + r;
            let v = received.get(q, t, n);
            y.push(if row.conj { v.conj() } else { v });
            for &(p, k, c) in &row.terms {
                let h = cfr.get(p, q, n);
                let term = c * h;
                w[k][i] = w[k][i] + if row.conj { term.conj() } else { term };
            }
        }
    }
    (y, w)
}

/// Modified Gram–Schmidt; columns that are numerically dependent are
/// dropped.
fn orthonormal_basis<'a, T: Real>(cols: impl Iterator<Item = &'a [Complex<T>]>, len: usize) -> Vec<Vec<Complex<T>>> {
    let mut basis: Vec<Vec<Complex<T>>> = Vec::new();
    let mut scale = T::zero();
    for col in cols {
        let mut v = col.to_vec();
        let norm0 = v.iter().fold(T::zero(), |s, z| s + z.norm_sqr()).sqrt();
        scale = scale.max(norm0);
        for q in &basis {
            let ip = q.iter().zip(&v).fold(czero::<T>(), |s, (qi, vi)| s + qi.conj() * vi);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi = *vi - ip * qi;
            }
        }
        let norm = v.iter().fold(T::zero(), |s, z| s + z.norm_sqr()).sqrt();
        if norm > scale * T::lit(1e-10) && norm > T::zero() {
            v.iter_mut().for_each(|z| *z = *z / norm);
            debug_assert_eq!(v.len(), len);
            basis.push(v);
        }
    }
    basis
}

/// Encoder and decoder for one frame configuration.
#[derive(Clone, Debug)]
pub struct Transceiver<T> {
    cfg: FrameConfig,
    families: Vec<CodeFamily<T>>,
    trellis: Option<Trellis<T>>,
    decoders: Vec<BlockDecoder<T>>,
}

impl<T: Real> Transceiver<T> {
    /// Builds the code of `cfg.scheme`: the rotated family for block
    /// schemes, or the expanded families, partition trees and trellis for
    /// the trellis scheme.
    pub fn new(cfg: FrameConfig) -> Result<Self> {
        cfg.validate()?;
        match cfg.scheme {
            Scheme::Qostfbc2Tx => {
                let phi = optimal_rotation::<T>(4)?;
                Ok(Self::block(cfg, CodeFamily::baseline_2tx(phi)))
            }
            Scheme::Qostfbc4Tx => {
                let (a, _) = expand_constellation(&Constellation::<T>::qpsk(T::zero()))?;
                Ok(Self::block(cfg, a))
            }
            Scheme::Qostftc4State => {
                let (a, b) = expand_constellation(&Constellation::<T>::qpsk(T::zero()))?;
                let trellis = build_trellis(&partition(&a, 2)?, &partition(&b, 2)?)?;
                Self::with_trellis(cfg, trellis)
            }
        }
    }

    fn block(cfg: FrameConfig, family: CodeFamily<T>) -> Self {
        Self {
            cfg,
            decoders: vec![BlockDecoder::new(&family)],
            families: vec![family],
            trellis: None,
        }
    }

    /// Trellis scheme with a given (for example deserialised) trellis.
    pub fn with_trellis(cfg: FrameConfig, trellis: Trellis<T>) -> Result<Self> {
        cfg.validate()?;
        if !cfg.scheme.is_trellis() {
            return Err(Error::Config(format!("{} is not a trellis scheme", cfg.scheme)));
        }
        if trellis.family(0).kind() != cfg.scheme.kind() {
            return Err(Error::Config("trellis code does not match the scheme".into()));
        }
        let decoders = trellis
            .trees()
            .iter()
            .map(|t| BlockDecoder::with_classes(t, trellis.level()))
            .collect::<Result<_>>()?;
        let families = (0..trellis.num_families()).map(|f| trellis.family(f).clone()).collect();
        Ok(Self {
            cfg,
            families,
            trellis: Some(trellis),
            decoders,
        })
    }

    /// Same code with a different frame configuration of the same scheme.
    pub fn reconfigured(&self, cfg: FrameConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.scheme != self.cfg.scheme {
            return Err(Error::Config("reconfiguration cannot change the scheme".into()));
        }
        Ok(Self { cfg, ..self.clone() })
    }

    pub fn config(&self) -> &FrameConfig {
        &self.cfg
    }

    pub fn trellis(&self) -> Option<&Trellis<T>> {
        self.trellis.as_ref()
    }

    pub fn families(&self) -> &[CodeFamily<T>] {
        &self.families
    }

    pub fn decoders(&self) -> &[BlockDecoder<T>] {
        &self.decoders
    }

    pub fn bits_per_step(&self) -> usize {
        match &self.trellis {
            Some(t) => t.bits_per_step(),
            None => self.families[0].bits_per_codeword(),
        }
    }

    pub fn bits_per_frame(&self) -> usize {
        self.cfg.steps() * self.bits_per_step()
    }

    /// Maps `bits` onto the frame grid. Trellis mode starts in state 0 and is
    /// not terminated.
    pub fn encode_frame(&self, bits: &[u8]) -> Result<EncodedFrame<T>> {
        let expected = self.bits_per_frame();
        if bits.len() != expected {
            return Err(Error::FrameBits {
                expected,
                got: bits.len(),
            });
        }
        let cfg = &self.cfg;
        let mut grid = StfGrid::zeros(cfg.subcarriers, cfg.tx(), cfg.ofdm_symbols);
        let mut codewords = Vec::with_capacity(cfg.steps());
        let mut state = 0;
        for (z, chunk) in bits.chunks(self.bits_per_step()).enumerate() {
            let cw = match &self.trellis {
                Some(tr) => {
                    let step = tr.encode_step(state, chunk)?;
                    state = step.next;
                    CodewordRef {
                        family: step.subset.family,
                        id: step.codeword,
                    }
                }
                None => CodewordRef {
                    family: 0,
                    id: self.families[0].index_of_bits(chunk)? as u32,
                },
            };
            let (t, m) = cfg.placement(z);
            grid.place(t, m, &self.families[cw.family].codeword(cw.id as usize).transmit_matrix())?;
            codewords.push(cw);
        }
        Ok(EncodedFrame {
            grid,
            codewords,
            final_state: state,
        })
    }

    fn check_received(&self, received: &Received<T>, cfr: &FrequencyResponse<T>) -> Result<()> {
        let cfg = &self.cfg;
        if received.subcarriers() != cfg.subcarriers
            || received.ofdm_symbols() != cfg.ofdm_symbols
            || received.rx() != cfr.rx()
            || cfr.tx() != cfg.tx()
            || cfr.subcarriers() != cfg.subcarriers
        {
            return Err(Error::Config("received frame or channel does not match the configuration".into()));
        }
        Ok(())
    }

    /// ML decoding of a whole frame: per-block ML for block schemes, Viterbi
    /// for the trellis scheme.
    pub fn decode_frame(&self, received: &Received<T>, cfr: &FrequencyResponse<T>) -> Result<DecodedFrame<T>> {
        match &self.trellis {
            Some(_) => self.viterbi_decode(received, cfr),
            None => {
                self.check_received(received, cfr)?;
                let fam = &self.families[0];
                let mut bits = Vec::with_capacity(self.bits_per_frame());
                let mut steps = Vec::with_capacity(self.cfg.steps());
                let mut total = T::zero();
                for z in 0..self.cfg.steps() {
                    let (t, m) = self.cfg.placement(z);
                    let best = self.decoders[0].decode(received, cfr, t, m);
                    bits.extend(fam.bits_of(best.id as usize));
                    total = total + best.metric;
                    steps.push(StepTrace {
                        state: 0,
                        input: 0,
                        codeword: CodewordRef { family: 0, id: best.id },
                        branch_metric: best.metric,
                    });
                }
                Ok(DecodedFrame {
                    bits,
                    path_metric: total,
                    steps,
                })
            }
        }
    }

    /// Exact ML codeword of one block over the first family.
    pub fn pairwise_decode_block(
        &self,
        received: &Received<T>,
        cfr: &FrequencyResponse<T>,
        t: usize,
        block: usize,
    ) -> (StfCodeword<T>, T) {
        let best = self.decoders[0].decode(received, cfr, t, block);
        (self.families[0].codeword(best.id as usize), best.metric)
    }

    /// Viterbi search from state 0 with the best end state. Branch metrics
    /// are the exact per-subset minima of the block metric.
    pub fn viterbi_decode(&self, received: &Received<T>, cfr: &FrequencyResponse<T>) -> Result<DecodedFrame<T>> {
        self.viterbi_with(received, cfr, false)
    }

    /// Viterbi with branch metrics from the exhaustive block decoder; the
    /// reference the fast path is checked against.
    pub fn viterbi_decode_exhaustive(
        &self,
        received: &Received<T>,
        cfr: &FrequencyResponse<T>,
    ) -> Result<DecodedFrame<T>> {
        self.viterbi_with(received, cfr, true)
    }

    fn viterbi_with(&self, received: &Received<T>, cfr: &FrequencyResponse<T>, exhaustive: bool) -> Result<DecodedFrame<T>> {
        let tr = self
            .trellis
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{} has no trellis", self.cfg.scheme)))?;
        self.check_received(received, cfr)?;
        let states = tr.num_states();
        let degree = tr.branches_per_state();
        let steps = self.cfg.steps();
        let mut metric = vec![T::infinity(); states];
        metric[0] = T::zero();
        // survivor[z][state] = (previous state, input, codeword, branch metric)
        let mut survivors: Vec<Vec<(usize, usize, CodewordRef, T)>> = Vec::with_capacity(steps);
        for z in 0..steps {
            let (t, m) = self.cfg.placement(z);
            let best: Vec<Vec<ClassBest<T>>> = self
                .decoders
                .iter()
                .map(|d| {
                    if exhaustive {
                        d.exhaustive_classes(received, cfr, t, m)
                    } else {
                        d.decode_classes(received, cfr, t, m)
                    }
                })
                .collect();
            let mut next = vec![T::infinity(); states];
            let mut surv = vec![(usize::MAX, 0, CodewordRef { family: 0, id: 0 }, T::zero()); states];
            for s in 0..states {
                if !metric[s].is_finite() {
                    continue;
                }
                for u in 0..degree {
                    let br = tr.branch(s, u);
                    let cb = best[br.subset.family][br.subset.subset as usize];
                    let cand = metric[s] + cb.metric;
                    if cand < next[br.next] {
                        next[br.next] = cand;
                        surv[br.next] = (
                            s,
                            u,
                            CodewordRef {
                                family: br.subset.family,
                                id: cb.id,
                            },
                            cb.metric,
                        );
                    }
                }
            }
            metric = next;
            survivors.push(surv);
        }
        let (mut state, path_metric) = metric
            .iter()
            .enumerate()
            .fold((0, T::infinity()), |acc, (s, &m)| if m < acc.1 { (s, m) } else { acc });
        let mut trace = Vec::with_capacity(steps);
        for z in (0..steps).rev() {
            let (prev, input, cw, bm) = survivors[z][state];
            trace.push(StepTrace {
                state: prev,
                input,
                codeword: cw,
                branch_metric: bm,
            });
            state = prev;
        }
        trace.reverse();
        let mut bits = Vec::with_capacity(self.bits_per_frame());
        for st in &trace {
            bits.extend(tr.step_bits(st.state, st.input, st.codeword.id)?);
        }
        Ok(DecodedFrame {
            bits,
            path_metric,
            steps: trace,
        })
    }
}
