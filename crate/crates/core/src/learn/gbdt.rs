//! Multiclass gradient boosted trees over quantile-binned features.

use serde::{Deserialize, Serialize};

use super::{check_labels, early_stopping_split, multi_logloss, softmax_in_place, LearnError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtParams {
    pub max_depth: usize,
    pub n_trees: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub min_child_weight: f64,
    pub max_bins: usize,
    /// Fraction of training rows held out to pick the number of rounds.
    pub validation_fraction: f64,
    /// Rounds without validation improvement before stopping. 0 disables.
    pub early_stopping_rounds: usize,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            max_depth: 6,
            n_trees: 200,
            learning_rate: 0.1,
            l2: 1.0,
            min_child_weight: 1.0,
            max_bins: 32,
            validation_fraction: 0.1,
            early_stopping_rounds: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f32, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f32]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

/// Trained ensemble: `rounds[r][k]` is the tree for class `k` in round `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbdt {
    pub n_features: usize,
    pub n_classes: usize,
    rounds: Vec<Vec<Tree>>,
}

/// Column-major bin indices with per-feature thresholds. A value `x` falls in
/// bin `b` when `thresholds[b-1] < x <= thresholds[b]`.
struct Binned {
    n_rows: usize,
    bins: Vec<u8>,
    thresholds: Vec<Vec<f32>>,
}

impl Binned {
    fn new(x: &[Vec<f32>], rows: &[usize], n_features: usize, max_bins: usize) -> Self {
        let n_rows = rows.len();
        let mut bins = vec![0u8; n_rows * n_features];
        let mut thresholds = Vec::with_capacity(n_features);
        let mut col: Vec<f32> = Vec::with_capacity(n_rows);
        for f in 0..n_features {
            col.clear();
            col.extend(rows.iter().map(|&r| x[r][f]));
            let mut sorted = col.clone();
            sorted.sort_by(|a, b| a.total_cmp(b));
            let mut uniq = sorted.clone();
            uniq.dedup();
            let thr: Vec<f32> = if uniq.len() <= max_bins {
                uniq.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect()
            } else {
                let mut t: Vec<f32> = (1..max_bins).map(|i| sorted[i * n_rows / max_bins]).collect();
                t.dedup();
                if t.last() == sorted.last() {
                    t.pop();
                }
                t
            };
            for (i, v) in col.iter().enumerate() {
                bins[f * n_rows + i] = thr.partition_point(|t| t < v) as u8;
            }
            thresholds.push(thr);
        }
        Binned { n_rows, bins, thresholds }
    }

    fn column(&self, f: usize) -> &[u8] {
        &self.bins[f * self.n_rows..(f + 1) * self.n_rows]
    }
}

#[derive(Clone, Copy, Default)]
struct Bin {
    g: f64,
    h: f64,
}

struct Histogram {
    offsets: Vec<usize>,
    cells: Vec<Bin>,
}

impl Histogram {
    fn zeros(binned: &Binned) -> Self {
        let mut offsets = Vec::with_capacity(binned.thresholds.len() + 1);
        let mut total = 0;
        for t in &binned.thresholds {
            offsets.push(total);
            total += t.len() + 1;
        }
        offsets.push(total);
        Histogram { offsets, cells: vec![Bin::default(); total] }
    }

    fn build(binned: &Binned, rows: &[u32], g: &[f64], h: &[f64]) -> Self {
        let mut hist = Self::zeros(binned);
        for f in 0..binned.thresholds.len() {
            let col = binned.column(f);
            let cells = &mut hist.cells[hist.offsets[f]..hist.offsets[f + 1]];
            if cells.len() == 1 {
                continue;
            }
            for &r in rows {
                let r = r as usize;
                let c = &mut cells[col[r] as usize];
                c.g += g[r];
                c.h += h[r];
            }
        }
        hist
    }

    fn subtract(&self, other: &Histogram) -> Histogram {
        let cells = self
            .cells
            .iter()
            .zip(&other.cells)
            .map(|(a, b)| Bin { g: a.g - b.g, h: a.h - b.h })
            .collect();
        Histogram { offsets: self.offsets.clone(), cells }
    }
}

struct BestSplit {
    feature: usize,
    bin: usize,
    gain: f64,
}

struct Builder<'a> {
    binned: &'a Binned,
    g: &'a [f64],
    h: &'a [f64],
    params: &'a GbdtParams,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        -self.params.learning_rate * g / (h + self.params.l2)
    }

    fn best_split(&self, hist: &Histogram, g_tot: f64, h_tot: f64) -> Option<BestSplit> {
        let lambda = self.params.l2;
        let parent = g_tot * g_tot / (h_tot + lambda);
        let mut best: Option<BestSplit> = None;
        for f in 0..self.binned.thresholds.len() {
            let cells = &hist.cells[hist.offsets[f]..hist.offsets[f + 1]];
            let (mut gl, mut hl) = (0.0, 0.0);
            for (b, c) in cells[..cells.len() - 1].iter().enumerate() {
                gl += c.g;
                hl += c.h;
                let (gr, hr) = (g_tot - gl, h_tot - hl);
                if hl < self.params.min_child_weight || hr < self.params.min_child_weight {
                    continue;
                }
                let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
                if gain > 1e-12 && best.as_ref().is_none_or(|s| gain > s.gain) {
                    best = Some(BestSplit { feature: f, bin: b, gain });
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<u32>, hist: Histogram, depth: usize) -> usize {
        let (g_tot, h_tot) =
            rows.iter().fold((0.0, 0.0), |(g, h), &r| (g + self.g[r as usize], h + self.h[r as usize]));
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: self.leaf_value(g_tot, h_tot) });
        if depth >= self.params.max_depth {
            return id;
        }
        let Some(split) = self.best_split(&hist, g_tot, h_tot) else {
            return id;
        };
        let col = self.binned.column(split.feature);
        let (left, right): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&r| (col[r as usize] as usize) <= split.bin);
        let small_is_left = left.len() <= right.len();
        let small_hist = Histogram::build(self.binned, if small_is_left { &left } else { &right }, self.g, self.h);
        let large_hist = hist.subtract(&small_hist);
        let (lh, rh) = if small_is_left { (small_hist, large_hist) } else { (large_hist, small_hist) };
        drop(hist);
        let threshold = self.binned.thresholds[split.feature][split.bin];
        let l = self.grow(left, lh, depth + 1);
        let r = self.grow(right, rh, depth + 1);
        self.nodes[id] = Node::Split { feature: split.feature, threshold, left: l, right: r };
        id
    }
}

impl Gbdt {
    /// Fits one tree per class per round on the softmax gradient, keeping the
    /// round count with the lowest held-out log-loss.
    pub fn fit(
        x: &[Vec<f32>],
        y: &[usize],
        n_classes: usize,
        params: &GbdtParams,
        seed: u64,
    ) -> Result<Gbdt, LearnError> {
        check_labels(y, n_classes)?;
        let n_features = x.first().map_or(0, Vec::len);
        if let Some(bad) = x.iter().find(|r| r.len() != n_features) {
            return Err(LearnError::Width { expected: n_features, got: bad.len() });
        }
        let early = params.early_stopping_rounds > 0;
        let (fit_rows, val_rows) = if early {
            early_stopping_split(x.len(), params.validation_fraction, seed)
        } else {
            ((0..x.len()).collect(), Vec::new())
        };
        let binned = Binned::new(x, &fit_rows, n_features, params.max_bins.clamp(2, 256));
        let fy: Vec<usize> = fit_rows.iter().map(|&r| y[r]).collect();
        let vy: Vec<usize> = val_rows.iter().map(|&r| y[r]).collect();
        let n = fit_rows.len();
        let mut margin = vec![vec![0.0f64; n_classes]; n];
        let mut val_margin = vec![vec![0.0f64; n_classes]; val_rows.len()];
        let mut g = vec![vec![0.0f64; n]; n_classes];
        let mut h = vec![vec![0.0f64; n]; n_classes];
        let all_rows: Vec<u32> = (0..n as u32).collect();
        let mut rounds: Vec<Vec<Tree>> = Vec::new();
        let mut best = (f64::INFINITY, 0usize);

        for round in 0..params.n_trees {
            for i in 0..n {
                let mut p = margin[i].clone();
                softmax_in_place(&mut p);
                for k in 0..n_classes {
                    let target = if fy[i] == k { 1.0 } else { 0.0 };
                    g[k][i] = p[k] - target;
                    h[k][i] = (p[k] * (1.0 - p[k])).max(1e-16);
                }
            }
            let mut trees = Vec::with_capacity(n_classes);
            for k in 0..n_classes {
                let mut b = Builder { binned: &binned, g: &g[k], h: &h[k], params, nodes: Vec::new() };
                let hist = Histogram::build(&binned, &all_rows, &g[k], &h[k]);
                b.grow(all_rows.clone(), hist, 0);
                let tree = Tree { nodes: b.nodes };
                for (i, &r) in fit_rows.iter().enumerate() {
                    margin[i][k] += tree.predict(&x[r]);
                }
                for (i, &r) in val_rows.iter().enumerate() {
                    val_margin[i][k] += tree.predict(&x[r]);
                }
                trees.push(tree);
            }
            rounds.push(trees);
            if early {
                let proba: Vec<Vec<f64>> = val_margin
                    .iter()
                    .map(|m| {
                        let mut p = m.clone();
                        softmax_in_place(&mut p);
                        p
                    })
                    .collect();
                let loss = multi_logloss(&proba, &vy);
                if loss < best.0 - 1e-12 {
                    best = (loss, round + 1);
                } else if round + 1 - best.1 >= params.early_stopping_rounds {
                    break;
                }
            }
        }
        if early {
            rounds.truncate(best.1.max(1));
        }
        Ok(Gbdt { n_features, n_classes, rounds })
    }

    pub fn n_rounds(&self) -> usize {
        self.rounds.len()
    }

    pub fn predict_proba(&self, x: &[f32]) -> Result<Vec<f64>, LearnError> {
        if x.len() != self.n_features {
            return Err(LearnError::Width { expected: self.n_features, got: x.len() });
        }
        let mut z = vec![0.0; self.n_classes];
        for trees in &self.rounds {
            for (k, t) in trees.iter().enumerate() {
                z[k] += t.predict(x);
            }
        }
        softmax_in_place(&mut z);
        Ok(z)
    }

    pub fn predict(&self, x: &[f32]) -> Result<usize, LearnError> {
        Ok(super::argmax(&self.predict_proba(x)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn learns_xor_of_binary_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<Vec<f32>> = (0..400)
            .map(|_| (0..5).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect())
            .collect();
        let y: Vec<usize> = x.iter().map(|r| ((r[0] as usize) ^ (r[1] as usize)) + 2 * (r[2] as usize)).collect();
        let m = Gbdt::fit(&x, &y, 4, &GbdtParams::default(), 3).unwrap();
        let acc = x.iter().zip(&y).filter(|(r, &c)| m.predict(r).unwrap() == c).count();
        assert_eq!(acc, 400);
    }

    #[test]
    fn deterministic_and_serializable() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<Vec<f32>> = (0..200).map(|_| (0..8).map(|_| rng.random::<f32>()).collect()).collect();
        let y: Vec<usize> = x.iter().map(|r| usize::from(r[3] > 0.5)).collect();
        let p = GbdtParams { n_trees: 30, ..Default::default() };
        let a = Gbdt::fit(&x, &y, 2, &p, 9).unwrap();
        let b = Gbdt::fit(&x, &y, 2, &p, 9).unwrap();
        assert_eq!(a, b);
        let back: Gbdt = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(back, a);
        assert!(a.predict(&[0.0; 3]).is_err());
    }

    #[test]
    fn thresholds_agree_with_bins() {
        let x: Vec<Vec<f32>> = (0..100).map(|i| vec![(i % 37) as f32 * 0.5]).collect();
        let rows: Vec<usize> = (0..100).collect();
        let b = Binned::new(&x, &rows, 1, 8);
        for (i, r) in x.iter().enumerate() {
            let bin = b.column(0)[i] as usize;
            for (t, thr) in b.thresholds[0].iter().enumerate() {
                assert_eq!(bin <= t, r[0] <= *thr);
            }
        }
    }
}
