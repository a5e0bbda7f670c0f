//! Offline optimum: a minimum-cost perfect matching under
//! `cost(u, v) = dist(u, v) + |atime(u) - atime(v)|`, each pair being served
//! as soon as its later request arrives.

use std::fmt;

use serde_json::{json, Value};
use thiserror::Error;

use crate::instance::{Instance, Polarity, Variant};
use crate::scalar::Scalar;

/// Largest request count accepted by [`opt_brute`].
pub const BRUTE_MAX_REQUESTS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptMethod {
    Brute,
    Hungarian,
}

impl OptMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            OptMethod::Brute => "brute",
            OptMethod::Hungarian => "hungarian",
        }
    }
}

impl fmt::Display for OptMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptSolution<S> {
    /// Pairs `(u, v)` with `u < v`, sorted.
    pub pairs: Vec<(usize, usize)>,
    pub value: S,
    pub method: OptMethod,
}

impl<S: Scalar> OptSolution<S> {
    pub fn to_json(&self) -> Value {
        let pairs: Vec<[usize; 2]> = self.pairs.iter().map(|&(u, v)| [u, v]).collect();
        json!({
            "value": self.value.to_json(),
            "pairs": pairs,
            "method": self.method.as_str(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OptError {
    #[error("{n} requests exceed the brute-force limit of {BRUTE_MAX_REQUESTS}; use the hungarian oracle for mbpmd instances")]
    TooLargeBipartite { n: usize },
    #[error("{n} requests exceed the brute-force limit of {BRUTE_MAX_REQUESTS}; no exact oracle covers larger mpmd instances")]
    TooLargeGeneral { n: usize },
    #[error("the hungarian oracle needs an mbpmd instance")]
    NotBipartite,
}

/// Cost of a perfect matching given as pairs, or `None` if `pairs` is not a
/// perfect matching of eligible pairs.
pub fn matching_value<S: Scalar>(inst: &Instance<S>, pairs: &[(usize, usize)]) -> Option<S> {
    let mut seen = vec![false; inst.len()];
    let mut total = S::zero();
    for &(u, v) in pairs {
        if u >= inst.len() || v >= inst.len() || seen[u] || seen[v] {
            return None;
        }
        seen[u] = true;
        seen[v] = true;
        total = total + &inst.edge_cost(u, v)?;
    }
    seen.iter().all(|&s| s).then_some(total)
}

struct Search<'a, S> {
    costs: &'a [Vec<Option<S>>],
    used: Vec<bool>,
    current: Vec<(usize, usize)>,
    best: Option<(S, Vec<(usize, usize)>)>,
}

impl<S: Scalar> Search<'_, S> {
    /// Pairs the lowest unmatched request with each eligible partner in
    /// index order, so complete matchings are visited in lexicographic order
    /// and a strict improvement test keeps the least one among minima.
    fn go(&mut self, acc: S) {
        let Some(i) = self.used.iter().position(|&u| !u) else {
            if self.best.as_ref().map_or(true, |(b, _)| acc < *b) {
                self.best = Some((acc, self.current.clone()));
            }
            return;
        };
        self.used[i] = true;
        for j in i + 1..self.used.len() {
            if self.used[j] {
                continue;
            }
            let Some(c) = &self.costs[i][j] else { continue };
            let next = acc.clone() + c;
            if self.best.as_ref().is_some_and(|(b, _)| next >= *b) {
                continue;
            }
            self.used[j] = true;
            self.current.push((i, j));
            self.go(next);
            self.current.pop();
            self.used[j] = false;
        }
        self.used[i] = false;
    }
}

/// Exhaustive search over perfect matchings, for at most
/// [`BRUTE_MAX_REQUESTS`] requests. Among minima the lexicographically least
/// pair list is returned.
pub fn opt_brute<S: Scalar>(inst: &Instance<S>) -> Result<OptSolution<S>, OptError> {
    let n = inst.len();
    if n > BRUTE_MAX_REQUESTS {
        return Err(match inst.variant() {
            Variant::Mbpmd => OptError::TooLargeBipartite { n },
            Variant::Mpmd => OptError::TooLargeGeneral { n },
        });
    }
    let costs: Vec<Vec<Option<S>>> = (0..n)
        .map(|u| (0..n).map(|v| inst.edge_cost(u, v)).collect())
        .collect();
    let mut search = Search {
        costs: &costs,
        used: vec![false; n],
        current: Vec::with_capacity(n / 2),
        best: None,
    };
    search.go(S::zero());
    let (value, pairs) = search.best.expect("valid instances admit a perfect matching");
    Ok(OptSolution {
        pairs,
        value,
        method: OptMethod::Brute,
    })
}

/// Minimum-cost assignment of rows to columns (square matrix); returns the
/// column chosen for each row. Shortest augmenting paths with potentials.
fn assignment<S: Scalar>(a: &[Vec<S>]) -> Vec<usize> {
    let n = a.len();
    // 1-based rows and columns; column 0 and row 0 are sentinels.
    let mut u = vec![S::zero(); n + 1];
    let mut v = vec![S::zero(); n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv: Vec<Option<S>> = vec![None; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta: Option<S> = None;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = a[i0 - 1][j - 1].clone() - &u[i0] - &v[j];
                if minv[j].as_ref().map_or(true, |m| cur < *m) {
                    minv[j] = Some(cur);
                    way[j] = j0;
                }
                let mj = minv[j].as_ref().expect("just set");
                if delta.as_ref().map_or(true, |d| mj < d) {
                    delta = Some(mj.clone());
                    j1 = j;
                }
            }
            let delta = delta.expect("an unused column remains");
            for j in 0..=n {
                if used[j] {
                    u[p[j]] = u[p[j]].clone() + &delta;
                    v[j] = v[j].clone() - &delta;
                } else if let Some(m) = minv[j].as_mut() {
                    *m = m.clone() - &delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }
    row_to_col
}

/// Minimum-cost perfect matching between positive and negative requests,
/// solved as an assignment problem in the instance's numeric mode.
pub fn opt_hungarian<S: Scalar>(inst: &Instance<S>) -> Result<OptSolution<S>, OptError> {
    if inst.variant() != Variant::Mbpmd {
        return Err(OptError::NotBipartite);
    }
    let of_sign = |s: Polarity| -> Vec<usize> {
        inst.requests().iter().filter(|r| r.sgn == s).map(|r| r.index).collect()
    };
    let pos = of_sign(Polarity::Positive);
    let neg = of_sign(Polarity::Negative);
    let matrix: Vec<Vec<S>> = pos
        .iter()
        .map(|&p| {
            neg.iter()
                .map(|&q| inst.edge_cost(p, q).expect("opposite signs are eligible"))
                .collect()
        })
        .collect();
    let cols = assignment(&matrix);
    let mut value = S::zero();
    let mut pairs = Vec::with_capacity(pos.len());
    for (i, &j) in cols.iter().enumerate() {
        value = value + &matrix[i][j];
        let (a, b) = (pos[i], neg[j]);
        pairs.push((a.min(b), a.max(b)));
    }
    pairs.sort_unstable();
    Ok(OptSolution {
        pairs,
        value,
        method: OptMethod::Hungarian,
    })
}
