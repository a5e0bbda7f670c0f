//! Post-hoc verification of an engine run.
//!
//! The certifier replays the event log against the instance and rebuilds set
//! membership, dual values, potentials, the marked forest and the matching on
//! its own. It never reads engine caches. Properties are checked whenever the
//! clock is about to move and at the end of each growth block, which covers
//! every instant of the run since all quantities are linear in between.
//!
//! Besides P1-P11 the replay enforces the schedule itself: times in the log
//! must agree with arrivals and growth, tight pairs are taken least-first,
//! matches follow the FIFO rule, and no tight cross-set constraint is left
//! behind when time advances.

use std::collections::BTreeMap;
use std::fmt;

use serde_json::{json, Value};

use crate::engine::{EventKind, EventRecord, MatchRecord, RunResult, RunSummary};
use crate::instance::Instance;
use crate::scalar::{self, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Property {
    Partition,
    Laminar,
    Surplus,
    Potential,
    Feasibility,
    MarkedForest,
    MarkedTight,
    WaitingDual,
    ConnectionBound,
    TotalBound,
    Eligibility,
    /// The log does not describe a run of the algorithm (bad times, wrong
    /// growth, skipped or out-of-order events).
    Schedule,
    /// The run result disagrees with its own event log.
    Consistency,
}

impl Property {
    pub fn code(self) -> &'static str {
        match self {
            Property::Partition => "P1",
            Property::Laminar => "P2",
            Property::Surplus => "P3",
            Property::Potential => "P4",
            Property::Feasibility => "P5",
            Property::MarkedForest => "P6",
            Property::MarkedTight => "P7",
            Property::WaitingDual => "P8",
            Property::ConnectionBound => "P9",
            Property::TotalBound => "P10",
            Property::Eligibility => "P11",
            Property::Schedule => "schedule",
            Property::Consistency => "consistency",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Property::Partition => "partition",
            Property::Laminar => "laminar",
            Property::Surplus => "surplus",
            Property::Potential => "potential",
            Property::Feasibility => "feasibility",
            Property::MarkedForest => "marked forest",
            Property::MarkedTight => "marked tight",
            Property::WaitingDual => "waiting equals dual",
            Property::ConnectionBound => "connection bound",
            Property::TotalBound => "total bound",
            Property::Eligibility => "eligibility",
            Property::Schedule => "event schedule",
            Property::Consistency => "result consistency",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Property::Schedule | Property::Consistency => f.write_str(self.name()),
            _ => write!(f, "{} {}", self.code(), self.name()),
        }
    }
}

/// The first property found broken, by log position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub property: Property,
    /// Index of the offending event; the log length for end-of-run checks.
    pub position: usize,
    pub message: String,
    /// Request or set indices involved, as named in the message.
    pub witnesses: Vec<usize>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violated at event {}: {}", self.property, self.position, self.message)
    }
}

impl std::error::Error for Violation {}

impl Violation {
    pub fn to_json(&self) -> Value {
        json!({
            "property": self.property.code(),
            "name": self.property.name(),
            "position": self.position,
            "message": self.message,
            "witnesses": self.witnesses,
        })
    }
}

fn violation<T>(property: Property, position: usize, witnesses: &[usize], message: String) -> Result<T, Violation> {
    Err(Violation {
        property,
        position,
        message,
        witnesses: witnesses.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifiedSet<S> {
    pub id: usize,
    pub members: Vec<usize>,
    pub sur: usize,
    pub y: S,
}

/// A feasible dual solution rebuilt from the log, with the quantities
/// derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct DualCertificate<S> {
    pub sets: Vec<CertifiedSet<S>>,
    /// `Σ sur(S)·y_S`.
    pub objective: S,
    /// `cost(u, v) - Σ_{S : (u,v) ∈ δ(S)} y_S` for every eligible `u < v`.
    pub per_edge_slack: BTreeMap<(usize, usize), S>,
    /// Costs recomputed from the log.
    pub summary: RunSummary<S>,
    pub matching: Vec<MatchRecord<S>>,
    pub marked: Vec<(usize, usize)>,
}

impl<S: Scalar> DualCertificate<S> {
    pub fn to_json(&self) -> Value {
        let sets: Vec<Value> = self
            .sets
            .iter()
            .map(|s| json!({ "id": s.id, "members": s.members, "sur": s.sur, "y": s.y.to_json() }))
            .collect();
        let slack: Vec<Value> = self
            .per_edge_slack
            .iter()
            .map(|(&(u, v), s)| json!({ "u": u, "v": v, "slack": s.to_json() }))
            .collect();
        json!({
            "objective": self.objective.to_json(),
            "sets": sets,
            "per_edge_slack": slack,
        })
    }
}

/// `a == b` within the mode tolerance, scaled by the operands' magnitude.
/// Exact in exact mode.
fn within<S: Scalar>(a: &S, b: &S) -> bool {
    (a.clone() - b.clone()).abs() <= S::tolerance() * magnitude(a, b)
}

/// `a <= b` within the mode tolerance, scaled like [`within`].
fn at_most<S: Scalar>(a: &S, b: &S) -> bool {
    a.clone() <= b.clone() + &(S::tolerance() * magnitude(a, b))
}

fn magnitude<S: Scalar>(a: &S, b: &S) -> S {
    S::max_of(S::from_int(1), S::max_of(a.abs(), b.abs()))
}

fn merge_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = a.iter().chain(b).copied().collect();
    out.sort_unstable();
    out
}

fn contains(members: &[usize], u: usize) -> bool {
    members.binary_search(&u).is_ok()
}

/// Unique path from `u` to `v` in the forest formed by `edges`.
fn tree_path(n: usize, edges: &[(usize, usize)], u: usize, v: usize) -> Option<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut prev = vec![usize::MAX; n];
    prev[u] = u;
    let mut queue = std::collections::VecDeque::from([u]);
    while let Some(x) = queue.pop_front() {
        if x == v {
            break;
        }
        for &w in &adj[x] {
            if prev[w] == usize::MAX {
                prev[w] = x;
                queue.push_back(w);
            }
        }
    }
    if prev[v] == usize::MAX {
        return None;
    }
    let mut path = vec![v];
    let mut at = v;
    while at != u {
        at = prev[at];
        path.push(at);
    }
    path.reverse();
    Some(path)
}

/// Largest number of path edges leaving a single set, with that set.
fn worst_crossing<'s, I>(path: &[usize], sets: I) -> (usize, Option<usize>)
where
    I: IntoIterator<Item = (usize, &'s [usize])>,
{
    let mut worst = (0, None);
    for (id, members) in sets {
        let count = path
            .windows(2)
            .filter(|w| contains(members, w[0]) != contains(members, w[1]))
            .count();
        if count > worst.0 {
            worst = (count, Some(id));
        }
    }
    worst
}

/// Sums of edge distances and edge costs along a path.
fn path_lengths<S: Scalar>(inst: &Instance<S>, path: &[usize]) -> Option<(S, S)> {
    let mut dist = S::zero();
    let mut cost = S::zero();
    for w in path.windows(2) {
        dist = dist + &inst.distance(w[0], w[1]);
        cost = cost + &inst.edge_cost(w[0], w[1])?;
    }
    Some((dist, cost))
}

/// First pair under the FIFO rule: the earliest free request that has an
/// eligible free partner, with its earliest such partner.
fn fifo_pair<S: Scalar>(inst: &Instance<S>, free: &[usize]) -> Option<(usize, usize)> {
    for (i, &x) in free.iter().enumerate() {
        for &w in &free[i + 1..] {
            if inst.eligible(x, w) {
                return Some((x, w));
            }
        }
    }
    None
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        self.0[ra] = rb;
    }
}

struct ReplaySet<S> {
    members: Vec<usize>,
    y: S,
    free: Vec<usize>,
    active: bool,
    parent: Option<usize>,
}

struct Grow<S> {
    pos: usize,
    t: S,
    set: usize,
    from: S,
    to: S,
}

struct Replay<'a, S> {
    inst: &'a Instance<S>,
    costs: Vec<Vec<Option<S>>>,
    clock: S,
    arrived: usize,
    sets: Vec<ReplaySet<S>>,
    active_of: Vec<Option<usize>>,
    singleton: Vec<usize>,
    potential: Vec<S>,
    partner: Vec<Option<usize>>,
    matching: Vec<MatchRecord<S>>,
    marked: Vec<(usize, usize)>,
    forest: UnionFind,
    pending_tight: Option<(usize, usize, usize)>,
    last_merge: Option<usize>,
    block: Vec<Grow<S>>,
}

impl<'a, S: Scalar> Replay<'a, S> {
    fn new(inst: &'a Instance<S>) -> Self {
        let n = inst.len();
        Replay {
            inst,
            costs: (0..n)
                .map(|u| (0..n).map(|v| inst.edge_cost(u, v)).collect())
                .collect(),
            clock: S::zero(),
            arrived: 0,
            sets: Vec::new(),
            active_of: vec![None; n],
            singleton: Vec::with_capacity(n),
            potential: vec![S::zero(); n],
            partner: vec![None; n],
            matching: Vec::new(),
            marked: Vec::new(),
            forest: UnionFind((0..n).collect()),
            pending_tight: None,
            last_merge: None,
            block: Vec::new(),
        }
    }

    fn slack(&self, u: usize, v: usize) -> Option<S> {
        let cost = self.costs[u][v].as_ref()?;
        Some(cost.clone() - &self.potential[u] - &self.potential[v])
    }

    fn growing(&self) -> Vec<usize> {
        (0..self.sets.len())
            .filter(|&id| self.sets[id].active && !self.sets[id].free.is_empty())
            .collect()
    }

    /// Least eligible cross-set pair whose constraint is tight.
    fn least_tight(&self) -> Option<(usize, usize)> {
        let tol = S::tolerance();
        for u in 0..self.arrived {
            for v in u + 1..self.arrived {
                if self.active_of[u] == self.active_of[v] {
                    continue;
                }
                if let Some(slack) = self.slack(u, v) {
                    if slack <= tol {
                        return Some((u, v));
                    }
                }
            }
        }
        None
    }

    fn at_clock(&self, pos: usize, t: &S) -> Result<(), Violation> {
        if *t != self.clock {
            return violation(
                Property::Schedule,
                pos,
                &[],
                format!("event logged at {t} but the clock stands at {}", self.clock),
            );
        }
        Ok(())
    }

    /// Cross-set pairs must satisfy `Y(u) + Y(v) <= cost(u, v)`.
    fn check_cross_feasibility(&self, pos: usize) -> Result<(), Violation> {
        let floor = -S::tolerance();
        for u in 0..self.arrived {
            for v in u + 1..self.arrived {
                if self.active_of[u] == self.active_of[v] {
                    continue;
                }
                if let Some(slack) = self.slack(u, v) {
                    if slack < floor {
                        return violation(
                            Property::Feasibility,
                            pos,
                            &[u, v],
                            format!(
                                "constraint ({u}, {v}) has value {} above cost {}",
                                self.potential[u].clone() + &self.potential[v],
                                self.costs[u][v].as_ref().expect("eligible")
                            ),
                        );
                    }
                }
            }
        }
        Ok(())
    }

    /// State checks before the clock leaves its current value.
    fn close_instant(&self, pos: usize) -> Result<(), Violation> {
        let n = self.arrived;
        let mut owner: Vec<Option<usize>> = vec![None; n];
        for (id, set) in self.sets.iter().enumerate().filter(|(_, s)| s.active) {
            for &u in &set.members {
                if u >= n {
                    return violation(Property::Partition, pos, &[u, id], format!("active set {id} holds unarrived request {u}"));
                }
                if let Some(other) = owner[u] {
                    return violation(
                        Property::Partition,
                        pos,
                        &[u, other, id],
                        format!("request {u} lies in active sets {other} and {id}"),
                    );
                }
                owner[u] = Some(id);
            }
        }
        if let Some(u) = (0..n).find(|&u| owner[u].is_none() || owner[u] != self.active_of[u]) {
            return violation(Property::Partition, pos, &[u], format!("request {u} has no unique active set"));
        }

        for (id, set) in self.sets.iter().enumerate().filter(|(_, s)| s.active) {
            let free: Vec<usize> = set.members.iter().copied().filter(|&u| self.partner[u].is_none()).collect();
            let sur = self.inst.surplus(set.members.iter().copied());
            if free != set.free || free.len() != sur {
                return violation(
                    Property::Surplus,
                    pos,
                    &[id],
                    format!("active set {id} has {} free requests but surplus {sur}", free.len()),
                );
            }
        }

        for u in 0..n {
            let elapsed = self.clock.clone() - self.inst.atime(u);
            let y = &self.potential[u];
            if !S::approx_le(y, &elapsed) {
                return violation(Property::Potential, pos, &[u], format!("Y({u}) = {y} exceeds elapsed time {elapsed}"));
            }
            if self.partner[u].is_none() && !S::approx_eq(y, &elapsed) {
                return violation(
                    Property::Potential,
                    pos,
                    &[u],
                    format!("free request {u} has Y = {y} but has waited {elapsed}"),
                );
            }
        }

        self.check_cross_feasibility(pos)?;

        if let Some((u, v)) = self.least_tight() {
            return violation(
                Property::Schedule,
                pos,
                &[u, v],
                format!("constraint ({u}, {v}) is tight at {} but its sets were not merged", self.clock),
            );
        }
        Ok(())
    }

    fn arrival(&mut self, pos: usize, t: &S, u: usize, set: usize) -> Result<(), Violation> {
        if u != self.arrived || u >= self.inst.len() {
            return violation(Property::Schedule, pos, &[u], format!("arrival of {u} but request {} is next", self.arrived));
        }
        if t != self.inst.atime(u) {
            return violation(
                Property::Schedule,
                pos,
                &[u],
                format!("request {u} logged at {t} but arrives at {}", self.inst.atime(u)),
            );
        }
        if *t < self.clock {
            return violation(Property::Schedule, pos, &[u], format!("time moves back from {} to {t}", self.clock));
        }
        if *t > self.clock {
            if let Some(&g) = self.growing().first() {
                return violation(
                    Property::Schedule,
                    pos,
                    &[g],
                    format!("clock jumps from {} to {t} while set {g} should grow", self.clock),
                );
            }
            self.close_instant(pos)?;
            self.clock = t.clone();
        }
        if set != self.sets.len() {
            return violation(Property::Schedule, pos, &[set], format!("arrival opens set {set}, expected {}", self.sets.len()));
        }
        self.sets.push(ReplaySet {
            members: vec![u],
            y: S::zero(),
            free: vec![u],
            active: true,
            parent: None,
        });
        self.active_of[u] = Some(set);
        self.singleton.push(set);
        self.arrived += 1;
        Ok(())
    }

    fn tight(&mut self, pos: usize, t: &S, u: usize, v: usize) -> Result<(), Violation> {
        self.at_clock(pos, t)?;
        if u >= v || v >= self.arrived {
            return violation(Property::Schedule, pos, &[u, v], format!("({u}, {v}) is not an ordered pair of arrived requests"));
        }
        let Some(slack) = self.slack(u, v) else {
            return violation(Property::Schedule, pos, &[u, v], format!("tight pair ({u}, {v}) is not eligible"));
        };
        if self.active_of[u] == self.active_of[v] {
            return violation(Property::Schedule, pos, &[u, v], format!("tight pair ({u}, {v}) lies inside one active set"));
        }
        if self.arrived < self.inst.len() && *self.inst.atime(self.arrived) == self.clock {
            return violation(
                Property::Schedule,
                pos,
                &[self.arrived],
                format!("tight pair processed before request {} arriving at the same instant", self.arrived),
            );
        }
        if slack < -S::tolerance() {
            return violation(Property::Feasibility, pos, &[u, v], format!("constraint ({u}, {v}) exceeds its cost by {}", -slack));
        }
        if slack > S::tolerance() {
            return violation(Property::MarkedTight, pos, &[u, v], format!("marked pair ({u}, {v}) has slack {slack}"));
        }
        if let Some((x, w)) = self.least_tight().filter(|&p| p != (u, v)) {
            return violation(
                Property::Schedule,
                pos,
                &[x, w],
                format!("({x}, {w}) is tight and precedes ({u}, {v})"),
            );
        }
        self.pending_tight = Some((pos, u, v));
        Ok(())
    }

    fn merge(&mut self, pos: usize, t: &S, set: usize, a: usize, b: usize) -> Result<(), Violation> {
        self.at_clock(pos, t)?;
        let Some((_, u, v)) = self.pending_tight.take() else {
            return violation(Property::Schedule, pos, &[set], "merge without a preceding tight pair".into());
        };
        if set != self.sets.len() {
            return violation(Property::Schedule, pos, &[set], format!("merge creates set {set}, expected {}", self.sets.len()));
        }
        if self.active_of[u] != Some(a) || self.active_of[v] != Some(b) {
            return violation(
                Property::Schedule,
                pos,
                &[a, b],
                format!("merge of sets {a} and {b} does not join the active sets of {u} and {v}"),
            );
        }
        if self.forest.find(u) == self.forest.find(v) {
            return violation(Property::MarkedForest, pos, &[u, v], format!("marking ({u}, {v}) closes a cycle"));
        }
        self.forest.union(u, v);
        self.marked.push((u, v));

        let members = merge_sorted(&self.sets[a].members, &self.sets[b].members);
        if members.windows(2).any(|w| w[0] == w[1]) {
            return violation(Property::Laminar, pos, &[a, b], format!("merged sets {a} and {b} overlap"));
        }
        let free = merge_sorted(&self.sets[a].free, &self.sets[b].free);
        for child in [a, b] {
            self.sets[child].active = false;
            self.sets[child].parent = Some(set);
        }
        for &w in &members {
            self.active_of[w] = Some(set);
        }
        let inside = self
            .marked
            .iter()
            .filter(|&&(x, w)| contains(&members, x) && contains(&members, w))
            .count();
        let root = self.forest.find(members[0]);
        if inside + 1 != members.len() || members.iter().any(|&w| self.forest.find(w) != root) {
            return violation(
                Property::MarkedForest,
                pos,
                &[set],
                format!("marked edges inside set {set} do not form a spanning tree"),
            );
        }
        self.sets.push(ReplaySet {
            members,
            y: S::zero(),
            free,
            active: true,
            parent: None,
        });
        self.last_merge = Some(set);
        Ok(())
    }

    fn matched(&mut self, pos: usize, t: &S, u: usize, v: usize) -> Result<(), Violation> {
        self.at_clock(pos, t)?;
        if u >= self.arrived || v >= self.arrived {
            return violation(Property::Eligibility, pos, &[u, v], format!("match ({u}, {v}) involves an unarrived request"));
        }
        if let Some(x) = [u, v].into_iter().find(|&x| self.partner[x].is_some()) {
            return violation(Property::Eligibility, pos, &[x], format!("request {x} matched twice"));
        }
        if !self.inst.eligible(u, v) {
            return violation(Property::Eligibility, pos, &[u, v], format!("matched pair ({u}, {v}) is not eligible"));
        }
        let set = self.active_of[u];
        if set != self.active_of[v] || set != self.last_merge {
            return violation(
                Property::Schedule,
                pos,
                &[u, v],
                format!("match ({u}, {v}) outside the most recently merged set"),
            );
        }
        let set = set.expect("arrived");
        let expected = fifo_pair(self.inst, &self.sets[set].free);
        if expected != Some((u, v)) {
            return violation(
                Property::Schedule,
                pos,
                &[u, v],
                format!("match ({u}, {v}) but the FIFO rule selects {expected:?}"),
            );
        }
        self.sets[set].free.retain(|&x| x != u && x != v);
        self.partner[u] = Some(v);
        self.partner[v] = Some(u);
        self.matching.push(MatchRecord { u, v, time: t.clone() });

        let Some(path) = tree_path(self.inst.len(), &self.marked, u, v) else {
            return violation(Property::MarkedForest, pos, &[u, v], format!("no marked path joins matched pair ({u}, {v})"));
        };
        let (path_dist, path_cost) = path_lengths(self.inst, &path).expect("marked edges are eligible");
        let dist = self.inst.distance(u, v);
        if !at_most(&dist, &path_dist) || !at_most(&path_dist, &path_cost) {
            return violation(
                Property::ConnectionBound,
                pos,
                &[u, v],
                format!("pair ({u}, {v}): distance {dist}, marked path length {path_dist}, path cost {path_cost}"),
            );
        }
        let (count, worst) = worst_crossing(&path, self.sets.iter().enumerate().map(|(i, s)| (i, &s.members[..])));
        if count > 2 {
            let id = worst.expect("count > 0");
            return violation(
                Property::ConnectionBound,
                pos,
                &[u, v, id],
                format!("marked path of ({u}, {v}) crosses set {id} {count} times"),
            );
        }
        Ok(())
    }

    /// Applies a block of consecutive growth events, then checks it.
    fn end_block(&mut self) -> Result<(), Violation> {
        let block = std::mem::take(&mut self.block);
        let first = block[0].pos;
        for g in &block {
            if g.set >= self.sets.len() {
                return violation(Property::Schedule, g.pos, &[g.set], format!("growth of unknown set {}", g.set));
            }
            let delta = g.to.clone() - &g.from;
            let set = &mut self.sets[g.set];
            set.y = set.y.clone() + &delta;
            for &u in &set.members {
                self.potential[u] = self.potential[u].clone() + &delta;
            }
        }
        self.check_cross_feasibility(first)?;

        let to = block[0].to.clone();
        let mut seen = Vec::with_capacity(block.len());
        for g in &block {
            if g.from != self.clock || g.to != to || g.t != g.to || g.to <= g.from {
                return violation(
                    Property::Schedule,
                    g.pos,
                    &[g.set],
                    format!(
                        "growth of set {} over [{}, {}] at {} does not continue the clock {} to {to}",
                        g.set, g.from, g.to, g.t, self.clock
                    ),
                );
            }
            let set = &self.sets[g.set];
            if !set.active || set.free.is_empty() {
                return violation(Property::Schedule, g.pos, &[g.set], format!("set {} grows but holds no free request", g.set));
            }
            if seen.contains(&g.set) {
                return violation(Property::Schedule, g.pos, &[g.set], format!("set {} grows twice", g.set));
            }
            seen.push(g.set);
        }
        seen.sort_unstable();
        let growing = self.growing();
        if seen != growing {
            return violation(
                Property::Schedule,
                first,
                &growing,
                format!("sets {growing:?} should grow but the log grows {seen:?}"),
            );
        }
        self.clock = to;
        if self.arrived < self.inst.len() && *self.inst.atime(self.arrived) < self.clock {
            return violation(
                Property::Schedule,
                first,
                &[self.arrived],
                format!("growth to {} passes the arrival of request {}", self.clock, self.arrived),
            );
        }
        Ok(())
    }

    fn finish(self, end: usize) -> Result<DualCertificate<S>, Violation> {
        let inst = self.inst;
        let n = inst.len();
        if self.arrived != n {
            return violation(Property::Schedule, end, &[self.arrived], format!("only {} of {n} requests arrived", self.arrived));
        }
        if let Some(u) = self.partner.iter().position(Option::is_none) {
            return violation(Property::Eligibility, end, &[u], format!("request {u} is never matched"));
        }

        for i in 0..self.sets.len() {
            for j in i + 1..self.sets.len() {
                let (a, b) = (&self.sets[i].members, &self.sets[j].members);
                let common = a.iter().filter(|&&x| contains(b, x)).count();
                if common != 0 && common != a.len() && common != b.len() {
                    return violation(Property::Laminar, end, &[i, j], format!("sets {i} and {j} overlap without nesting"));
                }
            }
        }

        // Potentials from scratch, and for each request the chain of sets
        // containing it with suffix sums of y.
        let mut chains: Vec<Vec<usize>> = Vec::with_capacity(n);
        let mut suffix: Vec<Vec<S>> = Vec::with_capacity(n);
        let mut potential = Vec::with_capacity(n);
        for u in 0..n {
            let mut chain = vec![self.singleton[u]];
            while let Some(p) = self.sets[*chain.last().expect("nonempty")].parent {
                chain.push(p);
            }
            let mut sums = vec![S::zero(); chain.len() + 1];
            for k in (0..chain.len()).rev() {
                sums[k] = sums[k + 1].clone() + &self.sets[chain[k]].y;
            }
            let total: S = scalar::sum(self.sets.iter().filter(|s| contains(&s.members, u)).map(|s| &s.y));
            if !within(&total, &sums[0]) || !S::approx_eq(&total, &self.potential[u]) {
                return violation(
                    Property::Potential,
                    end,
                    &[u],
                    format!("Y({u}) = {} during replay but {total} from the set family", self.potential[u]),
                );
            }
            potential.push(total);
            chains.push(chain);
            suffix.push(sums);
        }

        let mut per_edge_slack = BTreeMap::new();
        for u in 0..n {
            for v in u + 1..n {
                let Some(cost) = inst.edge_cost(u, v) else { continue };
                let k = chains[u]
                    .iter()
                    .position(|&s| contains(&self.sets[s].members, v))
                    .unwrap_or(chains[u].len());
                let common = &suffix[u][k];
                let value = potential[u].clone() + &potential[v] - &scalar::scale(common, 2);
                let slack = cost.clone() - &value;
                if slack < -S::tolerance() {
                    return violation(
                        Property::Feasibility,
                        end,
                        &[u, v],
                        format!("final constraint ({u}, {v}) has value {value} above cost {cost}"),
                    );
                }
                per_edge_slack.insert((u, v), slack);
            }
        }
        for &(u, v) in &self.marked {
            let slack = &per_edge_slack[&(u.min(v), u.max(v))];
            if !S::approx_eq(slack, &S::zero()) {
                return violation(Property::MarkedTight, end, &[u, v], format!("marked pair ({u}, {v}) ends with slack {slack}"));
            }
        }

        let sets: Vec<CertifiedSet<S>> = self
            .sets
            .into_iter()
            .enumerate()
            .map(|(id, s)| CertifiedSet {
                id,
                sur: inst.surplus(s.members.iter().copied()),
                members: s.members,
                y: s.y,
            })
            .collect();
        let objective = sets
            .iter()
            .fold(S::zero(), |acc, s| acc + &scalar::scale(&s.y, s.sur));

        let mut connection = S::zero();
        let mut waiting = S::zero();
        for m in &self.matching {
            connection = connection + &inst.distance(m.u, m.v);
            waiting = waiting + &(m.time.clone() - inst.atime(m.u)) + &(m.time.clone() - inst.atime(m.v));
        }
        if !within(&waiting, &objective) {
            return violation(
                Property::WaitingDual,
                end,
                &[],
                format!("waiting cost {waiting} differs from dual objective {objective}"),
            );
        }
        let twice = scalar::scale(&objective, 2);
        for m in &self.matching {
            let dist = inst.distance(m.u, m.v);
            if !at_most(&dist, &twice) {
                return violation(
                    Property::ConnectionBound,
                    end,
                    &[m.u, m.v],
                    format!("pair ({}, {}) at distance {dist} exceeds twice the dual objective {objective}", m.u, m.v),
                );
            }
        }
        let total = connection.clone() + &waiting;
        let bound = scalar::scale(&objective, 2 * inst.m() + 1);
        if !at_most(&total, &bound) {
            return violation(
                Property::TotalBound,
                end,
                &[],
                format!("total cost {total} exceeds (2m+1) times the dual objective, {bound}"),
            );
        }

        Ok(DualCertificate {
            summary: RunSummary {
                connection_cost: connection,
                waiting_cost: waiting,
                total_cost: total,
                dual_objective: objective.clone(),
                m: inst.m(),
                num_sets: sets.len(),
                num_marked_edges: self.marked.len(),
            },
            sets,
            objective,
            per_edge_slack,
            matching: self.matching,
            marked: self.marked,
        })
    }
}

/// Replays an event log against `inst` and returns the dual certificate, or
/// the earliest violated property.
pub fn certify_log<S: Scalar>(inst: &Instance<S>, events: &[EventRecord<S>]) -> Result<DualCertificate<S>, Violation> {
    let mut r = Replay::new(inst);
    for (pos, event) in events.iter().enumerate() {
        if let EventKind::Grow { set, from, to } = &event.kind {
            if r.block.is_empty() {
                if let Some((tp, u, v)) = r.pending_tight {
                    return violation(Property::Schedule, tp, &[u, v], format!("tight pair ({u}, {v}) is never merged"));
                }
                r.close_instant(pos)?;
            }
            r.block.push(Grow {
                pos,
                t: event.t.clone(),
                set: *set,
                from: from.clone(),
                to: to.clone(),
            });
            continue;
        }
        if !r.block.is_empty() {
            r.end_block()?;
        }
        if let Some((tp, u, v)) = r.pending_tight {
            if !matches!(event.kind, EventKind::Merge { .. }) {
                return violation(Property::Schedule, tp, &[u, v], format!("tight pair ({u}, {v}) is never merged"));
            }
        }
        match &event.kind {
            EventKind::Arrival { u, set } => r.arrival(pos, &event.t, *u, *set)?,
            EventKind::Tight { u, v } => r.tight(pos, &event.t, *u, *v)?,
            EventKind::Merge { set, a, b } => r.merge(pos, &event.t, *set, *a, *b)?,
            EventKind::Match { u, v } => r.matched(pos, &event.t, *u, *v)?,
            EventKind::Grow { .. } => unreachable!("handled above"),
        }
    }
    let end = events.len();
    if !r.block.is_empty() {
        r.end_block()?;
    }
    if let Some((tp, u, v)) = r.pending_tight {
        return violation(Property::Schedule, tp, &[u, v], format!("tight pair ({u}, {v}) is never merged"));
    }
    r.close_instant(end)?;
    r.finish(end)
}

/// Certifies a run: replays its log, then checks that the matching, marked
/// edges, set family and summary carried by `result` agree with the replay.
pub fn certify<S: Scalar>(inst: &Instance<S>, result: &RunResult<S>) -> Result<DualCertificate<S>, Violation> {
    let cert = certify_log(inst, &result.events)?;
    let end = result.events.len();
    let mismatch = |what: &str| violation(Property::Consistency, end, &[], format!("{what} differ from the event log"));
    if result.matching != cert.matching {
        return mismatch("matched pairs");
    }
    if result.marked != cert.marked {
        return mismatch("marked edges");
    }
    if result.sets.len() != cert.sets.len()
        || result
            .sets
            .iter()
            .zip(&cert.sets)
            .any(|(r, c)| r.members != c.members || r.sur != c.sur || !within(&r.y, &c.y))
    {
        return mismatch("set records");
    }
    let (a, b) = (&result.summary, &cert.summary);
    if !within(&a.connection_cost, &b.connection_cost)
        || !within(&a.waiting_cost, &b.waiting_cost)
        || !within(&a.total_cost, &b.total_cost)
        || !within(&a.dual_objective, &b.dual_objective)
        || (a.m, a.num_sets, a.num_marked_edges) != (b.m, b.num_sets, b.num_marked_edges)
    {
        return mismatch("summary figures");
    }
    Ok(cert)
}

/// The marked-forest path behind one matched pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCheck<S> {
    /// Requests from `u` to `v` along marked edges present at match time.
    pub path: Vec<usize>,
    pub distance: S,
    pub path_distance: S,
    pub path_cost: S,
    /// Most path edges crossing the boundary of any one set.
    pub max_crossings: usize,
    /// `distance <= path_distance <= path_cost`.
    pub lengths_ok: bool,
    pub crossings_ok: bool,
}

impl<S> PathCheck<S> {
    pub fn ok(&self) -> bool {
        self.lengths_ok && self.crossings_ok
    }
}

/// Rebuilds the marked forest at the moment `pair` was matched and checks its
/// tree path against the pair's distance and the set family at that time.
pub fn marked_path_check<S: Scalar>(
    inst: &Instance<S>,
    result: &RunResult<S>,
    pair: (usize, usize),
) -> Result<PathCheck<S>, Violation> {
    let (u, v) = pair;
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut marked = Vec::new();
    for (pos, event) in result.events.iter().enumerate() {
        match &event.kind {
            EventKind::Arrival { u, .. } => members.push(vec![*u]),
            EventKind::Merge { a, b, .. } => {
                let (Some(x), Some(y)) = (members.get(*a), members.get(*b)) else {
                    return violation(Property::Consistency, pos, &[*a, *b], "merge of unknown sets".into());
                };
                members.push(merge_sorted(x, y));
            }
            EventKind::Tight { u, v } => marked.push((*u, *v)),
            EventKind::Match { u: x, v: w } if (*x, *w) == (u, v) || (*x, *w) == (v, u) => {
                let Some(path) = tree_path(inst.len(), &marked, u, v) else {
                    return violation(Property::MarkedForest, pos, &[u, v], format!("no marked path joins ({u}, {v})"));
                };
                let (path_distance, path_cost) = path_lengths(inst, &path).ok_or_else(|| Violation {
                    property: Property::MarkedForest,
                    position: pos,
                    message: "marked path uses an ineligible edge".into(),
                    witnesses: path.clone(),
                })?;
                let distance = inst.distance(u, v);
                let (max_crossings, _) = worst_crossing(&path, members.iter().enumerate().map(|(i, m)| (i, &m[..])));
                return Ok(PathCheck {
                    lengths_ok: at_most(&distance, &path_distance) && at_most(&path_distance, &path_cost),
                    crossings_ok: max_crossings <= 2,
                    path,
                    distance,
                    path_distance,
                    path_cost,
                    max_crossings,
                });
            }
            _ => {}
        }
    }
    violation(
        Property::Consistency,
        result.events.len(),
        &[u, v],
        format!("({u}, {v}) is not a matched pair of this run"),
    )
}

/// Realized cost against the dual lower bound and, when known, the optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioReport<S> {
    pub gd_total: S,
    pub dual_objective: S,
    pub opt_value: Option<S>,
    pub ratio_vs_dual: S,
    pub ratio_vs_opt: Option<S>,
    pub bound_2m_plus_1: S,
}

impl<S: Scalar> RatioReport<S> {
    pub fn to_json(&self) -> Value {
        json!({
            "gd_total": self.gd_total.to_json(),
            "dual_objective": self.dual_objective.to_json(),
            "opt_value": self.opt_value.as_ref().map(Scalar::to_json),
            "ratio_vs_dual": self.ratio_vs_dual.to_json(),
            "ratio_vs_opt": self.ratio_vs_opt.as_ref().map(Scalar::to_json),
            "bound_2m_plus_1": self.bound_2m_plus_1.to_json(),
        })
    }
}

/// `cost / lower`, with `0 / 0 = 1`; `None` for a positive cost over zero.
fn ratio<S: Scalar>(cost: &S, lower: &S) -> Option<S> {
    if lower.is_zero() {
        cost.is_zero().then(|| S::from_int(1))
    } else {
        Some(cost.clone() / lower.clone())
    }
}

/// Builds the ratio report for a certified run. Fails when the cost bound
/// `GD <= (2m+1)·D` or weak duality `D <= opt` is broken.
pub fn ratio_report<S: Scalar>(
    inst: &Instance<S>,
    result: &RunResult<S>,
    opt: Option<S>,
) -> Result<RatioReport<S>, Violation> {
    let end = result.events.len();
    let gd = result.summary.total_cost.clone();
    let dual = result.summary.dual_objective.clone();
    let bound = S::from_int(2 * inst.m() as i64 + 1);
    let Some(ratio_vs_dual) = ratio(&gd, &dual) else {
        return violation(Property::TotalBound, end, &[], format!("cost {gd} with a zero dual objective"));
    };
    if !at_most(&ratio_vs_dual, &bound) {
        return violation(
            Property::TotalBound,
            end,
            &[],
            format!("ratio to the dual objective {ratio_vs_dual} exceeds 2m+1 = {bound}"),
        );
    }
    let ratio_vs_opt = match &opt {
        None => None,
        Some(value) => {
            if !at_most(&dual, value) {
                return violation(
                    Property::TotalBound,
                    end,
                    &[],
                    format!("dual objective {dual} exceeds the optimum {value}"),
                );
            }
            let Some(r) = ratio(&gd, value) else {
                return violation(Property::TotalBound, end, &[], format!("cost {gd} against an optimum of zero"));
            };
            if !at_most(&r, &ratio_vs_dual) {
                return violation(
                    Property::TotalBound,
                    end,
                    &[],
                    format!("ratio to the optimum {r} exceeds the ratio to the dual {ratio_vs_dual}"),
                );
            }
            Some(r)
        }
    };
    Ok(RatioReport {
        gd_total: gd,
        dual_objective: dual,
        opt_value: opt,
        ratio_vs_dual,
        ratio_vs_opt,
        bound_2m_plus_1: bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run;
    use crate::generate::{gen_random_instance, gen_tightness_instance, RandomSpec};
    use crate::instance::{AnyInstance, Polarity, Variant};
    use crate::metric::{Metric, MetricKind, Point};
    use crate::scalar::Exact;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> Exact {
        Exact::from_ratio(n, d)
    }

    fn line(variant: Variant, reqs: &[(i64, i64, i64)]) -> Instance<Exact> {
        Instance::new(
            variant,
            Metric::Line,
            reqs.iter()
                .map(|&(x, t, s)| (Point::Line(q(x, 1)), q(t, 1), Polarity::from_sign(s).unwrap()))
                .collect(),
        )
        .unwrap()
    }

    fn dist_six() -> Instance<Exact> {
        line(Variant::Mpmd, &[(0, 0, 0), (6, 0, 0)])
    }

    #[test]
    fn dist_six_certificate() {
        let inst = dist_six();
        let cert = certify(&inst, &run(&inst)).unwrap();
        assert_eq!(cert.objective, q(6, 1));
        assert_eq!(cert.per_edge_slack.len(), 1);
        assert_eq!(cert.per_edge_slack[&(0, 1)], q(0, 1));
        assert_eq!(cert.sets.len(), 3);
    }

    #[test]
    fn tightness_waiting_equals_dual() {
        for variant in [Variant::Mpmd, Variant::Mbpmd] {
            let inst = gen_tightness_instance(4, variant).unwrap();
            let result = run(&inst);
            let cert = certify(&inst, &result).unwrap();
            assert_eq!(cert.summary.waiting_cost, cert.objective);
            assert_eq!(result.summary.waiting_cost, cert.objective);
        }
    }

    #[test]
    fn inflated_growth_breaks_feasibility() {
        let inst = dist_six();
        let mut result = run(&inst);
        let grow = result
            .events
            .iter_mut()
            .find(|e| matches!(e.kind, EventKind::Grow { .. }))
            .unwrap();
        if let EventKind::Grow { to, .. } = &mut grow.kind {
            *to = q(4, 1);
        }
        let err = certify(&inst, &result).unwrap_err();
        assert_eq!(err.property, Property::Feasibility);
        assert_eq!(err.witnesses, vec![0, 1]);
    }

    #[test]
    fn detects_result_tampering() {
        let inst = gen_tightness_instance(2, Variant::Mpmd).unwrap();
        let mut result = run(&inst);
        result.summary.total_cost = result.summary.total_cost + &q(1, 1);
        assert_eq!(certify(&inst, &result).unwrap_err().property, Property::Consistency);
        let mut result = run(&inst);
        result.matching.swap(0, 1);
        assert_eq!(certify(&inst, &result).unwrap_err().property, Property::Consistency);
    }

    #[test]
    fn truncated_log_fails() {
        let inst = gen_tightness_instance(2, Variant::Mbpmd).unwrap();
        let result = run(&inst);
        for cut in 0..result.events.len() {
            assert!(certify_log(&inst, &result.events[..cut]).is_err(), "prefix of length {cut}");
        }
    }

    /// Every numeric field of every event, nudged up or down, and every index
    /// field shifted by one.
    fn perturbations(events: &[EventRecord<Exact>]) -> Vec<Vec<EventRecord<Exact>>> {
        let mut out = Vec::new();
        for i in 0..events.len() {
            for delta in [q(1, 7), q(-1, 7)] {
                let mut log = events.to_vec();
                log[i].t = log[i].t.clone() + &delta;
                out.push(log);
                if let EventKind::Grow { .. } = events[i].kind {
                    for field in 0..2 {
                        let mut log = events.to_vec();
                        if let EventKind::Grow { from, to, .. } = &mut log[i].kind {
                            let x = if field == 0 { from } else { to };
                            *x = x.clone() + &delta;
                        }
                        out.push(log);
                    }
                }
            }
            let fields = match events[i].kind {
                EventKind::Arrival { .. } | EventKind::Tight { .. } | EventKind::Match { .. } => 2,
                EventKind::Merge { .. } => 3,
                EventKind::Grow { .. } => 1,
            };
            for field in 0..fields {
                for up in [true, false] {
                    let mut log = events.to_vec();
                    let slot: &mut usize = match (&mut log[i].kind, field) {
                        (EventKind::Arrival { u, .. }, 0) => u,
                        (EventKind::Arrival { set, .. }, _) => set,
                        (EventKind::Tight { u, .. } | EventKind::Match { u, .. }, 0) => u,
                        (EventKind::Tight { v, .. } | EventKind::Match { v, .. }, _) => v,
                        (EventKind::Merge { set, .. }, 0) => set,
                        (EventKind::Merge { a, .. }, 1) => a,
                        (EventKind::Merge { b, .. }, _) => b,
                        (EventKind::Grow { set, .. }, _) => set,
                    };
                    if !up && *slot == 0 {
                        continue;
                    }
                    *slot = if up { *slot + 1 } else { *slot - 1 };
                    out.push(log);
                }
            }
        }
        out
    }

    #[test]
    fn fault_injection_corpus() {
        let mut corpus = vec![
            dist_six(),
            line(Variant::Mbpmd, &[(0, 0, 1), (1, 0, -1), (2, 0, 1), (3, 5, 1), (4, 1000, -1), (5, 1000, -1)]),
            line(Variant::Mpmd, &[(0, 0, 0), (2, 0, 0), (4, 0, 0), (1000, 0, 0)]),
        ];
        for m in [2, 4] {
            corpus.push(gen_tightness_instance(m, Variant::Mpmd).unwrap());
            corpus.push(gen_tightness_instance(m, Variant::Mbpmd).unwrap());
        }
        for seed in 0..6 {
            let variant = if seed % 2 == 0 { Variant::Mpmd } else { Variant::Mbpmd };
            let metric = [MetricKind::Line, MetricKind::Matrix, MetricKind::Ring][seed as usize % 3];
            if let AnyInstance::Exact(inst) = gen_random_instance(&RandomSpec::new(seed, 3, variant, metric)).unwrap() {
                corpus.push(inst);
            }
        }
        for inst in &corpus {
            let events = run(inst).events;
            certify_log(inst, &events).unwrap();
            for (k, log) in perturbations(&events).into_iter().enumerate() {
                assert!(certify_log(inst, &log).is_err(), "perturbation {k} went unnoticed");
            }
        }
    }

    #[test]
    fn first_merge_path_is_single_edge() {
        let inst = gen_tightness_instance(2, Variant::Mpmd).unwrap();
        let result = run(&inst);
        let check = marked_path_check(&inst, &result, (0, 1)).unwrap();
        assert_eq!(check.path, vec![0, 1]);
        assert!(check.ok());
    }

    #[test]
    fn tightness_second_pair_path() {
        // Both sides of the second pair attach to the first pair's tree, so
        // the path runs new p, old p, old q, new q.
        for variant in [Variant::Mpmd, Variant::Mbpmd] {
            let inst = gen_tightness_instance(2, variant).unwrap();
            let result = run(&inst);
            let check = marked_path_check(&inst, &result, (2, 3)).unwrap();
            assert_eq!(check.path, vec![2, 0, 1, 3]);
            assert_eq!(check.path_distance, q(2, 1));
            assert_eq!(check.distance, q(2, 1));
            assert!(check.max_crossings <= 2);
            assert!(check.ok());
        }
    }

    #[test]
    fn path_check_rejects_unmatched_pair() {
        let inst = gen_tightness_instance(2, Variant::Mpmd).unwrap();
        let result = run(&inst);
        assert!(marked_path_check(&inst, &result, (0, 3)).is_err());
    }

    #[test]
    fn dist_six_ratio() {
        let inst = dist_six();
        let result = run(&inst);
        let report = ratio_report(&inst, &result, Some(q(6, 1))).unwrap();
        assert_eq!(report.gd_total, q(12, 1));
        assert_eq!(report.dual_objective, q(6, 1));
        assert_eq!(report.ratio_vs_dual, q(2, 1));
        assert_eq!(report.ratio_vs_opt, Some(q(2, 1)));
        assert_eq!(report.bound_2m_plus_1, q(3, 1));
    }

    #[test]
    fn ratio_zero_over_zero_is_one() {
        let inst = line(Variant::Mpmd, &[(0, 0, 0), (0, 0, 0)]);
        let result = run(&inst);
        let report = ratio_report(&inst, &result, Some(q(0, 1))).unwrap();
        assert_eq!(report.ratio_vs_dual, q(1, 1));
        assert_eq!(report.ratio_vs_opt, Some(q(1, 1)));
    }

    #[test]
    fn ratio_rejects_optimum_below_dual() {
        let inst = dist_six();
        let result = run(&inst);
        let err = ratio_report(&inst, &result, Some(q(5, 1))).unwrap_err();
        assert_eq!(err.property, Property::TotalBound);
    }

    #[test]
    fn float_euclidean_certifies() {
        for seed in 0..10 {
            let spec = RandomSpec::new(seed, 4, Variant::Mbpmd, MetricKind::Euclidean);
            let AnyInstance::Float(inst) = gen_random_instance(&spec).unwrap() else { panic!() };
            let result = run(&inst);
            certify(&inst, &result).unwrap();
        }
    }

    #[test]
    fn certification_is_pure() {
        let inst = gen_tightness_instance(4, Variant::Mbpmd).unwrap();
        let result = run(&inst);
        assert_eq!(certify(&inst, &result).unwrap(), certify(&inst, &result).unwrap());
    }

    fn exact_instance() -> impl Strategy<Value = Instance<Exact>> {
        (
            any::<u64>(),
            1usize..=5,
            prop_oneof![Just(Variant::Mpmd), Just(Variant::Mbpmd)],
            prop_oneof![Just(MetricKind::Line), Just(MetricKind::Matrix), Just(MetricKind::Ring)],
            1u32..=12,
        )
            .prop_map(|(seed, m, variant, metric, horizon)| {
                let spec = RandomSpec {
                    horizon,
                    ..RandomSpec::new(seed, m, variant, metric)
                };
                match gen_random_instance(&spec).unwrap() {
                    AnyInstance::Exact(inst) => inst,
                    AnyInstance::Float(_) => unreachable!("exact metrics only"),
                }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn every_run_certifies(inst in exact_instance()) {
            let result = run(&inst);
            let cert = certify(&inst, &result).unwrap();
            prop_assert_eq!(&cert.summary.waiting_cost, &cert.objective);
            prop_assert!(cert.per_edge_slack.values().all(|s| *s >= q(0, 1)));
            for m in &result.matching {
                let check = marked_path_check(&inst, &result, (m.u, m.v)).unwrap();
                prop_assert!(check.ok(), "pair ({}, {}): {:?}", m.u, m.v, check);
            }
            ratio_report(&inst, &result, None).unwrap();
        }
    }
}
