//! Maximum spanning arborescence decoding and arborescence partition
//! functions over dense arc log-score matrices.
//!
//! Node `0` is the artificial root; tokens are `1..=n`. Every tree handled
//! here is single-rooted: exactly one token attaches to the root.

use nalgebra::DMatrix;
use thiserror::Error;

/// Score of a forbidden arc. Finite so that sums and differences of scores
/// never produce NaN, yet low enough that no feasible tree prefers it.
pub const NEG_INF: f64 = f64::MIN / 4.0;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("no single-root arborescence has finite score")]
    Infeasible,
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("matrix-tree determinant is not positive (det sign {sign}, condition estimate {condition:e})")]
    Numerical { sign: f64, condition: f64 },
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

fn forbidden(score: f64) -> bool {
    score <= NEG_INF
}

/// Arc log-scores `score(h, d)` for heads `h ∈ 0..=n` and dependents `d ∈ 1..=n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ArcScores {
    n: usize,
    // (n + 1) rows by n columns; column d - 1 holds dependent d.
    scores: Vec<f64>,
}

impl ArcScores {
    /// All arcs scored zero, self-loops forbidden.
    pub fn new(n: usize) -> Self {
        Self::from_fn(n, |_, _| 0.0)
    }

    /// Builds scores from `f(h, d)`; self-loops are always forbidden and
    /// non-finite or very negative values are clamped to [`NEG_INF`].
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(n >= 1, "arc scores need at least one token");
        let mut scores = vec![NEG_INF; (n + 1) * n];
        for h in 0..=n {
            for d in 1..=n {
                if h != d {
                    scores[h * n + d - 1] = clamp(f(h, d));
                }
            }
        }
        ArcScores { n, scores }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, head: usize, dep: usize) -> f64 {
        self.scores[head * self.n + dep - 1]
    }

    pub fn set(&mut self, head: usize, dep: usize, score: f64) {
        if head != dep {
            self.scores[head * self.n + dep - 1] = clamp(score);
        }
    }

    /// Total score of a head assignment.
    pub fn tree_score(&self, heads: &[usize]) -> f64 {
        heads.iter().enumerate().map(|(i, &h)| self.get(h, i + 1)).sum()
    }

    fn dense(&self) -> Vec<Vec<f64>> {
        let m = self.n + 1;
        let mut w = vec![vec![NEG_INF; m]; m];
        for (h, row) in w.iter_mut().enumerate() {
            for (d, cell) in row.iter_mut().enumerate().skip(1) {
                *cell = self.get(h, d);
            }
        }
        w
    }
}

fn clamp(score: f64) -> f64 {
    if score.is_nan() {
        panic!("NaN arc score");
    }
    if score < NEG_INF {
        NEG_INF
    } else {
        score
    }
}

/// Head assignment for tokens `1..=n`; `heads[d - 1]` is the head of `d`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Arborescence {
    pub heads: Vec<usize>,
}

impl Arborescence {
    pub fn new(heads: Vec<usize>) -> Result<Self> {
        check_arborescence(&heads)?;
        Ok(Arborescence { heads })
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn score(&self, scores: &ArcScores) -> f64 {
        scores.tree_score(&self.heads)
    }
}

/// Checks that `heads` is a single-root arborescence over `1..=heads.len()`.
pub fn check_arborescence(heads: &[usize]) -> Result<()> {
    let n = heads.len();
    if n == 0 {
        return Err(GraphError::InvalidTree("empty head sequence".into()));
    }
    let mut roots = 0;
    for (i, &h) in heads.iter().enumerate() {
        if h > n {
            return Err(GraphError::InvalidTree(format!("head {h} of token {} out of range", i + 1)));
        }
        if h == i + 1 {
            return Err(GraphError::InvalidTree(format!("token {h} heads itself")));
        }
        if h == 0 {
            roots += 1;
        }
    }
    if roots != 1 {
        return Err(GraphError::InvalidTree(format!("{roots} tokens attach to the root")));
    }
    // 0 = unvisited, 1 = on current path, 2 = reaches root
    let mut state = vec![0u8; n + 1];
    state[0] = 2;
    for start in 1..=n {
        let mut path = Vec::new();
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            path.push(v);
            v = heads[v - 1];
        }
        if state[v] == 1 {
            return Err(GraphError::InvalidTree(format!("cycle through token {v}")));
        }
        for p in path {
            state[p] = 2;
        }
    }
    Ok(())
}

/// Maximum-score single-root arborescence.
///
/// When the unconstrained optimum attaches several tokens to the root, the
/// problem is re-solved once per candidate root arc with all other root arcs
/// forbidden and the best of those trees is kept. Equal totals go to the
/// lexicographically smallest head sequence.
pub fn chu_liu_edmonds(scores: &ArcScores) -> Result<Arborescence> {
    let n = scores.len();
    if (1..=n).all(|d| forbidden(scores.get(0, d))) {
        return Err(GraphError::Infeasible);
    }
    let w = scores.dense();
    let heads = unconstrained_mst(&w);
    let tree = &heads[1..];
    if tree.iter().filter(|&&h| h == 0).count() == 1 && feasible(scores, tree) {
        return Ok(Arborescence { heads: tree.to_vec() });
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    for root_child in 1..=n {
        if forbidden(scores.get(0, root_child)) {
            continue;
        }
        let mut wd = w.clone();
        for (d, cell) in wd[0].iter_mut().enumerate().skip(1) {
            if d != root_child {
                *cell = NEG_INF;
            }
        }
        let heads = unconstrained_mst(&wd);
        let tree = heads[1..].to_vec();
        if !feasible(scores, &tree) {
            continue;
        }
        let total = scores.tree_score(&tree);
        let better = match &best {
            None => true,
            Some((s, h)) => total > *s || (total == *s && tree < *h),
        };
        if better {
            best = Some((total, tree));
        }
    }
    best.map(|(_, heads)| Arborescence { heads }).ok_or(GraphError::Infeasible)
}

fn feasible(scores: &ArcScores, heads: &[usize]) -> bool {
    heads.iter().enumerate().all(|(i, &h)| !forbidden(scores.get(h, i + 1)))
}

/// Chu-Liu/Edmonds over a dense `(m × m)` weight matrix rooted at node 0.
/// Returns `heads[v]` for every node; `heads[0]` is meaningless.
fn unconstrained_mst(w: &[Vec<f64>]) -> Vec<usize> {
    let m = w.len();
    let mut heads = vec![0usize; m];
    for d in 1..m {
        let mut best = usize::MAX;
        let mut best_score = f64::NEG_INFINITY;
        for (h, row) in w.iter().enumerate() {
            if h != d && row[d] > best_score {
                best = h;
                best_score = row[d];
            }
        }
        heads[d] = best;
    }

    let Some(cycle) = find_cycle(&heads) else {
        return heads;
    };
    let mut in_cycle = vec![false; m];
    for &v in &cycle {
        in_cycle[v] = true;
    }

    // Contracted graph: surviving nodes keep their relative order, the cycle
    // becomes the last node.
    let outside: Vec<usize> = (0..m).filter(|&v| !in_cycle[v]).collect();
    let k = outside.len();
    let c = k;
    let mut w2 = vec![vec![NEG_INF; k + 1]; k + 1];
    let mut enter_at = vec![usize::MAX; k];
    let mut leave_from = vec![usize::MAX; k];

    for (i, &u) in outside.iter().enumerate() {
        for (j, &v) in outside.iter().enumerate() {
            if i != j && j != 0 {
                w2[i][j] = w[u][v];
            }
        }
        let mut best = f64::NEG_INFINITY;
        for &v in &cycle {
            let gain = if forbidden(w[u][v]) {
                NEG_INF
            } else {
                w[u][v] - w[heads[v]][v]
            };
            if gain > best {
                best = gain;
                enter_at[i] = v;
            }
        }
        w2[i][c] = best.max(NEG_INF);
        if i != 0 {
            let mut best = f64::NEG_INFINITY;
            for &x in &cycle {
                if w[x][u] > best {
                    best = w[x][u];
                    leave_from[i] = x;
                }
            }
            w2[c][i] = best;
        }
    }

    let inner = unconstrained_mst(&w2);
    for (j, &v) in outside.iter().enumerate().skip(1) {
        heads[v] = if inner[j] == c {
            leave_from[j]
        } else {
            outside[inner[j]]
        };
    }
    let from = inner[c];
    heads[enter_at[from]] = outside[from];
    heads
}

/// First cycle found by following head pointers from nodes in ascending order.
fn find_cycle(heads: &[usize]) -> Option<Vec<usize>> {
    let m = heads.len();
    let mut mark = vec![usize::MAX; m];
    let mut done = vec![false; m];
    done[0] = true;
    for start in 1..m {
        let mut v = start;
        while !done[v] && mark[v] != start {
            mark[v] = start;
            v = heads[v];
        }
        if !done[v] && mark[v] == start {
            let mut cycle = vec![v];
            let mut u = heads[v];
            while u != v {
                cycle.push(u);
                u = heads[u];
            }
            cycle.sort_unstable();
            return Some(cycle);
        }
        let mut v = start;
        while !done[v] {
            done[v] = true;
            v = heads[v];
        }
    }
    None
}

/// `Σ_d log P(heads[d] | d)` where `head_probs[d - 1][h]` is the probability
/// of head `h` for dependent `d`. A zero-probability arc yields `-∞`.
pub fn tree_log_prob(head_probs: &[Vec<f64>], tree: &Arborescence) -> f64 {
    tree.heads
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let p = head_probs[i][h];
            if p <= 0.0 {
                f64::NEG_INFINITY
            } else {
                p.ln()
            }
        })
        .sum()
}

/// Log of the sum over all single-root arborescences of `exp(total score)`,
/// computed as the log-determinant of the root-row-replaced Laplacian.
///
/// Each dependent's incoming scores are shifted by their maximum before
/// exponentiation; every tree has exactly one incoming arc per dependent, so
/// the shifts add back as a constant.
pub fn log_partition(scores: &ArcScores) -> Result<f64> {
    let n = scores.len();
    let mut shift = vec![0.0; n + 1];
    for d in 1..=n {
        let m = (0..=n).filter(|&h| h != d).map(|h| scores.get(h, d)).fold(f64::NEG_INFINITY, f64::max);
        if forbidden(m) {
            return Err(GraphError::Numerical {
                sign: 0.0,
                condition: 0.0,
            });
        }
        shift[d] = m;
    }
    let weight = |h: usize, d: usize| -> f64 {
        let s = scores.get(h, d);
        if forbidden(s) {
            0.0
        } else {
            (s - shift[d]).exp()
        }
    };

    let lap = DMatrix::from_fn(n, n, |row, col| {
        let (i, j) = (row + 1, col + 1);
        if i == 1 {
            weight(0, j)
        } else if i == j {
            (1..=n).filter(|&h| h != j).map(|h| weight(h, j)).sum()
        } else {
            -weight(i, j)
        }
    });

    let lu = lap.lu();
    let mut sign: f64 = lu.p().determinant();
    let mut log_det = 0.0;
    let mut max_pivot: f64 = 0.0;
    let mut min_pivot = f64::INFINITY;
    for u in lu.u().diagonal().iter() {
        let a = u.abs();
        max_pivot = max_pivot.max(a);
        min_pivot = min_pivot.min(a);
        sign *= u.signum();
        log_det += a.ln();
    }
    let condition = if max_pivot > 0.0 { min_pivot / max_pivot } else { 0.0 };
    if !(sign > 0.0) || min_pivot == 0.0 || !log_det.is_finite() {
        return Err(GraphError::Numerical { sign, condition });
    }
    Ok(log_det + shift[1..].iter().sum::<f64>())
}
