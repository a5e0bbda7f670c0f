//! Event-driven simulation of the Greedy Dual algorithm.
//!
//! Every arrived request belongs to exactly one active set. Active sets that
//! hold a free (unmatched) request grow their dual variable at unit rate.
//! When the dual constraint of an eligible pair whose endpoints sit in
//! different active sets becomes tight, the two sets are merged, the pair's
//! edge is marked, and free requests inside the merged set are matched until
//! no eligible free pair remains.
//!
//! Time advances from event to event: the next event is either the next
//! arrival or the earliest moment at which some cross-set constraint becomes
//! tight, found by a full scan over eligible pairs. With [`Exact`] scalars the
//! simulation is exact.
//!
//! [`Exact`]: crate::scalar::Exact

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::instance::Instance;
use crate::scalar::{self, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetStatus {
    /// Active and holding at least one free request.
    Growing,
    /// Active with every member matched.
    NonGrowing,
    /// Merged into a larger set.
    Inactive,
}

/// One set that was active at some point.
#[derive(Debug, Clone, PartialEq)]
pub struct SetRecord<S> {
    pub id: usize,
    /// Sorted request indices.
    pub members: Vec<usize>,
    pub sur: usize,
    pub y: S,
    pub status: SetStatus,
    pub parent: Option<usize>,
    pub children: Option<(usize, usize)>,
    /// Sorted unmatched members. Empty once inactive bookkeeping stops.
    pub free: Vec<usize>,
    pub created_at: S,
    /// `(from, to)` intervals during which `y` grew.
    pub growth: Vec<(S, S)>,
}

impl<S: Scalar> SetRecord<S> {
    pub fn is_active(&self) -> bool {
        self.status != SetStatus::Inactive
    }

    pub fn contains(&self, u: usize) -> bool {
        self.members.binary_search(&u).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind<S> {
    Arrival { u: usize, set: usize },
    Tight { u: usize, v: usize },
    Merge { set: usize, a: usize, b: usize },
    Match { u: usize, v: usize },
    Grow { set: usize, from: S, to: S },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord<S> {
    pub t: S,
    pub kind: EventKind<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchRecord<S> {
    pub u: usize,
    pub v: usize,
    pub time: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary<S> {
    pub connection_cost: S,
    pub waiting_cost: S,
    pub total_cost: S,
    pub dual_objective: S,
    pub m: usize,
    pub num_sets: usize,
    pub num_marked_edges: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult<S> {
    pub summary: RunSummary<S>,
    pub matching: Vec<MatchRecord<S>>,
    pub sets: Vec<SetRecord<S>>,
    pub marked: Vec<(usize, usize)>,
    pub events: Vec<EventRecord<S>>,
}

/// The next thing that happens, as found by [`Engine::next_event_time`].
#[derive(Debug, Clone, PartialEq)]
pub enum NextEvent<S> {
    Arrival { time: S, u: usize },
    /// `(u, v)` is the least pair (by index) among those reaching
    /// tightness first.
    Tight { time: S, u: usize, v: usize },
}

impl<S: Clone> NextEvent<S> {
    pub fn time(&self) -> S {
        match self {
            NextEvent::Arrival { time, .. } | NextEvent::Tight { time, .. } => time.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("pair ({0}, {1}) is not eligible")]
    Ineligible(usize, usize),
}

/// A broken engine invariant. Always a bug, never an input condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvariantViolation {
    pub invariant: &'static str,
    pub detail: String,
}

impl fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.invariant, self.detail)
    }
}

impl std::error::Error for InvariantViolation {}

fn breach(invariant: &'static str, detail: String) -> Result<(), InvariantViolation> {
    Err(InvariantViolation { invariant, detail })
}

pub struct Engine<'a, S> {
    inst: &'a Instance<S>,
    costs: Vec<Vec<Option<S>>>,
    clock: S,
    next_arrival: usize,
    sets: Vec<SetRecord<S>>,
    active_of: Vec<Option<usize>>,
    singleton_of: Vec<Option<usize>>,
    potential: Vec<S>,
    frozen: BTreeMap<(usize, usize), S>,
    marked: Vec<(usize, usize)>,
    partner: Vec<Option<usize>>,
    matching: Vec<MatchRecord<S>>,
    events: Vec<EventRecord<S>>,
    check_each_event: bool,
}

impl<'a, S: Scalar> Engine<'a, S> {
    pub fn new(inst: &'a Instance<S>) -> Self {
        let n = inst.len();
        let costs = (0..n)
            .map(|u| (0..n).map(|v| inst.edge_cost(u, v)).collect())
            .collect();
        Engine {
            inst,
            costs,
            clock: S::zero(),
            next_arrival: 0,
            sets: Vec::new(),
            active_of: vec![None; n],
            singleton_of: vec![None; n],
            potential: vec![S::zero(); n],
            frozen: BTreeMap::new(),
            marked: Vec::new(),
            partner: vec![None; n],
            matching: Vec::new(),
            events: Vec::new(),
            check_each_event: false,
        }
    }

    /// Re-verify the engine invariants after every step and panic on the
    /// first breach.
    pub fn with_invariant_checks(mut self, on: bool) -> Self {
        self.check_each_event = on;
        self
    }

    pub fn clock(&self) -> &S {
        &self.clock
    }

    pub fn sets(&self) -> &[SetRecord<S>] {
        &self.sets
    }

    pub fn events(&self) -> &[EventRecord<S>] {
        &self.events
    }

    pub fn matching(&self) -> &[MatchRecord<S>] {
        &self.matching
    }

    pub fn marked_edges(&self) -> &[(usize, usize)] {
        &self.marked
    }

    /// `Y(u)`: the sum of `y_S` over every set containing `u`.
    pub fn potential(&self, u: usize) -> &S {
        &self.potential[u]
    }

    pub fn active_set(&self, u: usize) -> Option<usize> {
        self.active_of[u]
    }

    pub fn arrived(&self) -> usize {
        self.next_arrival
    }

    pub fn is_free(&self, u: usize) -> bool {
        u < self.next_arrival && self.partner[u].is_none()
    }

    /// All requests have arrived and been matched.
    pub fn is_done(&self) -> bool {
        self.next_arrival == self.inst.len() && self.partner.iter().all(Option::is_some)
    }

    fn is_growing(&self, set: usize) -> bool {
        self.sets[set].status == SetStatus::Growing
    }

    fn cost(&self, u: usize, v: usize) -> Option<&S> {
        self.costs[u][v].as_ref()
    }

    /// Current value of `Σ_{S : (u,v) ∈ δ(S)} y_S`.
    pub fn constraint_value(&self, u: usize, v: usize) -> Result<S, EngineError> {
        if !self.inst.eligible(u, v) {
            return Err(EngineError::Ineligible(u, v));
        }
        let key = (u.min(v), u.max(v));
        let same = self.active_of[u].is_some() && self.active_of[u] == self.active_of[v];
        if same {
            Ok(self.frozen[&key].clone())
        } else {
            Ok(self.potential[u].clone() + &self.potential[v])
        }
    }

    /// Earliest next event; arrivals win ties. `None` once every request has
    /// arrived and been matched.
    ///
    /// # Panics
    ///
    /// If unmatched requests remain but nothing can ever happen again.
    pub fn next_event_time(&self) -> Option<NextEvent<S>> {
        if self.is_done() {
            return None;
        }
        let mut best: Option<(S, usize, usize)> = None;
        for u in 0..self.next_arrival {
            let su = self.active_of[u].expect("arrived request has an active set");
            let gu = self.is_growing(su);
            for v in u + 1..self.next_arrival {
                let sv = self.active_of[v].expect("arrived request has an active set");
                if su == sv {
                    continue;
                }
                let rate = gu as i64 + self.is_growing(sv) as i64;
                if rate == 0 {
                    continue;
                }
                let Some(cost) = self.cost(u, v) else { continue };
                let slack = cost.clone() - &self.potential[u] - &self.potential[v];
                let slack = S::max_of(slack, S::zero());
                let t = self.clock.clone() + &(slack / S::from_int(rate));
                if best.as_ref().map_or(true, |(bt, _, _)| t < *bt) {
                    best = Some((t, u, v));
                }
            }
        }
        let arrival = (self.next_arrival < self.inst.len()).then(|| {
            let u = self.next_arrival;
            (self.inst.atime(u).clone(), u)
        });
        match (arrival, best) {
            (Some((time, u)), Some((bt, _, _))) if time <= bt => Some(NextEvent::Arrival { time, u }),
            (Some((time, u)), None) => Some(NextEvent::Arrival { time, u }),
            (_, Some((time, u, v))) => Some(NextEvent::Tight { time, u, v }),
            (None, None) => panic!(
                "stuck state at t={}: unmatched requests remain but no constraint can become tight",
                self.clock
            ),
        }
    }

    /// Grows every active growing set from the current clock to `t`.
    ///
    /// # Panics
    ///
    /// If `t` is earlier than the clock.
    pub fn advance_to(&mut self, t: S) {
        assert!(
            t >= self.clock,
            "clock monotonicity: cannot move from {} back to {}",
            self.clock,
            t
        );
        let delta = t.clone() - &self.clock;
        if delta.is_positive() {
            for id in 0..self.sets.len() {
                if self.sets[id].status != SetStatus::Growing {
                    continue;
                }
                let set = &mut self.sets[id];
                set.y = set.y.clone() + &delta;
                set.growth.push((self.clock.clone(), t.clone()));
                for &u in &set.members {
                    self.potential[u] = self.potential[u].clone() + &delta;
                }
                self.events.push(EventRecord {
                    t: t.clone(),
                    kind: EventKind::Grow {
                        set: id,
                        from: self.clock.clone(),
                        to: t.clone(),
                    },
                });
            }
        }
        self.clock = t;
    }

    /// Opens a singleton active set for the next pending request.
    fn admit(&mut self, u: usize) {
        assert_eq!(u, self.next_arrival, "requests arrive in index order");
        assert!(
            *self.inst.atime(u) == self.clock,
            "request {u} admitted at {} but arrives at {}",
            self.clock,
            self.inst.atime(u)
        );
        let id = self.sets.len();
        self.sets.push(SetRecord {
            id,
            members: vec![u],
            sur: self.inst.surplus([u]),
            y: S::zero(),
            status: SetStatus::Growing,
            parent: None,
            children: None,
            free: vec![u],
            created_at: self.clock.clone(),
            growth: Vec::new(),
        });
        self.active_of[u] = Some(id);
        self.singleton_of[u] = Some(id);
        self.next_arrival += 1;
        self.events.push(EventRecord {
            t: self.clock.clone(),
            kind: EventKind::Arrival { u, set: id },
        });
    }

    /// Handles the arrival of request `u` at the current clock, then
    /// resolves any constraint made tight by it.
    pub fn on_arrival(&mut self, u: usize) {
        self.admit(u);
        self.process_tight();
    }

    /// Least eligible cross-set pair whose constraint is tight.
    fn find_tight(&self) -> Option<(usize, usize)> {
        for u in 0..self.next_arrival {
            let su = self.active_of[u];
            for v in u + 1..self.next_arrival {
                if self.active_of[v] == su {
                    continue;
                }
                let Some(cost) = self.cost(u, v) else { continue };
                let slack = cost.clone() - &self.potential[u] - &self.potential[v];
                if slack <= S::tolerance() {
                    return Some((u, v));
                }
            }
        }
        None
    }

    /// Merges active sets along tight constraints until none remains,
    /// matching free requests inside each merged set.
    pub fn process_tight(&mut self) {
        while let Some((u, v)) = self.find_tight() {
            self.merge_along(u, v);
        }
    }

    fn merge_along(&mut self, u: usize, v: usize) {
        let a = self.active_of[u].expect("arrived");
        let b = self.active_of[v].expect("arrived");
        debug_assert_ne!(a, b);
        let id = self.sets.len();
        let t = self.clock.clone();

        for &x in &self.sets[a].members {
            for &w in &self.sets[b].members {
                if self.inst.eligible(x, w) {
                    let value = self.potential[x].clone() + &self.potential[w];
                    self.frozen.insert((x.min(w), x.max(w)), value);
                }
            }
        }
        let members = merge_sorted(&self.sets[a].members, &self.sets[b].members);
        let mut free = merge_sorted(&self.sets[a].free, &self.sets[b].free);
        for child in [a, b] {
            let c = &mut self.sets[child];
            c.status = SetStatus::Inactive;
            c.parent = Some(id);
        }
        for &w in &members {
            self.active_of[w] = Some(id);
        }
        self.marked.push((u, v));
        self.events.push(EventRecord {
            t: t.clone(),
            kind: EventKind::Tight { u, v },
        });
        self.events.push(EventRecord {
            t: t.clone(),
            kind: EventKind::Merge { set: id, a, b },
        });

        // Earliest free request with the earliest opposite-eligible one.
        'outer: loop {
            for i in 0..free.len() {
                for j in i + 1..free.len() {
                    let (x, w) = (free[i], free[j]);
                    if self.inst.eligible(x, w) {
                        free.remove(j);
                        free.remove(i);
                        self.partner[x] = Some(w);
                        self.partner[w] = Some(x);
                        self.matching.push(MatchRecord {
                            u: x,
                            v: w,
                            time: t.clone(),
                        });
                        self.events.push(EventRecord {
                            t: t.clone(),
                            kind: EventKind::Match { u: x, v: w },
                        });
                        continue 'outer;
                    }
                }
            }
            break;
        }

        let sur = self.inst.surplus(members.iter().copied());
        assert_eq!(
            free.len(),
            sur,
            "surplus invariant: merged set {id} keeps {} free requests but has surplus {sur}",
            free.len()
        );
        let status = if free.is_empty() {
            SetStatus::NonGrowing
        } else {
            SetStatus::Growing
        };
        self.sets.push(SetRecord {
            id,
            members,
            sur,
            y: S::zero(),
            status,
            parent: None,
            children: Some((a, b)),
            free,
            created_at: t,
            growth: Vec::new(),
        });
    }

    /// Processes the next event. Returns `false` once the run is complete.
    pub fn step(&mut self) -> bool {
        match self.next_event_time() {
            None => false,
            Some(NextEvent::Arrival { time, .. }) => {
                self.advance_to(time);
                while self.next_arrival < self.inst.len()
                    && *self.inst.atime(self.next_arrival) == self.clock
                {
                    self.admit(self.next_arrival);
                }
                self.process_tight();
                self.after_step();
                true
            }
            Some(NextEvent::Tight { time, .. }) => {
                self.advance_to(time);
                self.process_tight();
                self.after_step();
                true
            }
        }
    }

    fn after_step(&self) {
        if self.check_each_event {
            if let Err(e) = self.check_invariants() {
                panic!("engine invariant {} violated at t={}: {}", e.invariant, self.clock, e.detail);
            }
        }
    }

    /// Runs to completion and packages the result.
    pub fn finish(mut self) -> RunResult<S> {
        while self.step() {}
        let inst = self.inst;
        let mut connection = S::zero();
        let mut waiting = S::zero();
        for m in &self.matching {
            connection = connection + &inst.distance(m.u, m.v);
            waiting = waiting + &(m.time.clone() - inst.atime(m.u)) + &(m.time.clone() - inst.atime(m.v));
        }
        let dual = self
            .sets
            .iter()
            .fold(S::zero(), |acc, s| acc + &scalar::scale(&s.y, s.sur));
        RunResult {
            summary: RunSummary {
                total_cost: connection.clone() + &waiting,
                connection_cost: connection,
                waiting_cost: waiting,
                dual_objective: dual,
                m: inst.m(),
                num_sets: self.sets.len(),
                num_marked_edges: self.marked.len(),
            },
            matching: self.matching,
            sets: self.sets,
            marked: self.marked,
            events: self.events,
        }
    }

    /// Checks the partition, laminarity, surplus, potential, feasibility and
    /// marked-forest invariants against the live state.
    pub fn check_invariants(&self) -> Result<(), InvariantViolation> {
        let n_arrived = self.next_arrival;
        let tol = S::tolerance();

        // P1: active sets partition the arrived requests.
        let mut owner = vec![None; n_arrived];
        for set in self.sets.iter().filter(|s| s.is_active()) {
            for &u in &set.members {
                if u >= n_arrived {
                    return breach("P1 partition", format!("set {} holds unarrived {u}", set.id));
                }
                if let Some(other) = owner[u] {
                    return breach(
                        "P1 partition",
                        format!("request {u} in active sets {other} and {}", set.id),
                    );
                }
                owner[u] = Some(set.id);
            }
        }
        for (u, o) in owner.iter().enumerate() {
            if *o != self.active_of[u] || o.is_none() {
                return breach("P1 partition", format!("request {u} has no consistent active set"));
            }
        }

        // P2: each merged set is the disjoint union of its two children.
        for set in &self.sets {
            if let Some((a, b)) = set.children {
                let (ca, cb) = (&self.sets[a], &self.sets[b]);
                if ca.parent != Some(set.id) || cb.parent != Some(set.id) {
                    return breach("P2 laminar", format!("children of set {} not linked", set.id));
                }
                if merge_sorted(&ca.members, &cb.members) != set.members
                    || ca.members.iter().any(|u| cb.contains(*u))
                {
                    return breach(
                        "P2 laminar",
                        format!("set {} is not the disjoint union of {a} and {b}", set.id),
                    );
                }
            } else if set.members.len() != 1 {
                return breach("P2 laminar", format!("set {} has no children", set.id));
            }
        }

        // P3: free requests match the surplus.
        for set in self.sets.iter().filter(|s| s.is_active()) {
            let sur = self.inst.surplus(set.members.iter().copied());
            let free: Vec<usize> = set.members.iter().copied().filter(|&u| self.is_free(u)).collect();
            if sur != set.sur || free != set.free || free.len() != sur {
                return breach(
                    "P3 surplus",
                    format!("set {}: sur {sur}, cached {}, free {:?}", set.id, set.sur, set.free),
                );
            }
            if (set.status == SetStatus::Growing) == free.is_empty() {
                return breach("P3 surplus", format!("set {} has status {:?}", set.id, set.status));
            }
        }

        // P4: potentials equal the sum over containing sets and are bounded
        // by elapsed time, with equality while free.
        for u in 0..n_arrived {
            let mut total = S::zero();
            let mut at = self.singleton_of[u];
            while let Some(id) = at {
                total = total + &self.sets[id].y;
                at = self.sets[id].parent;
            }
            if !S::approx_eq(&total, &self.potential[u]) {
                return breach("P4 potential", format!("Y({u}) cached {} but sums to {total}", self.potential[u]));
            }
            let elapsed = self.clock.clone() - self.inst.atime(u);
            if !S::approx_le(&total, &elapsed) {
                return breach("P4 potential", format!("Y({u}) = {total} exceeds elapsed {elapsed}"));
            }
            if self.is_free(u) && !S::approx_eq(&total, &elapsed) {
                return breach("P4 potential", format!("free {u}: Y = {total} but elapsed {elapsed}"));
            }
        }

        // P5: dual feasibility.
        for u in 0..n_arrived {
            for v in u + 1..n_arrived {
                let Some(cost) = self.cost(u, v) else { continue };
                let value = self.constraint_value(u, v).expect("eligible");
                if value > cost.clone() + &tol {
                    return breach("P5 feasibility", format!("({u}, {v}): {value} > cost {cost}"));
                }
            }
        }

        // P6: marked edges stay inside active sets and span each of them.
        for &(u, v) in &self.marked {
            if self.active_of[u] != self.active_of[v] {
                return breach("P6 marked forest", format!("marked ({u}, {v}) crosses an active boundary"));
            }
        }
        for set in self.sets.iter().filter(|s| s.is_active()) {
            let inside: Vec<(usize, usize)> = self
                .marked
                .iter()
                .copied()
                .filter(|&(u, v)| set.contains(u) && set.contains(v))
                .collect();
            if inside.len() + 1 != set.members.len() || !spans(&set.members, &inside) {
                return breach(
                    "P6 marked forest",
                    format!("marked edges inside set {} do not form a spanning tree", set.id),
                );
            }
        }

        // P7: marked edges are tight.
        for &(u, v) in &self.marked {
            let value = self.constraint_value(u, v).expect("marked edges are eligible");
            let cost = self.cost(u, v).expect("eligible");
            if !S::approx_eq(&value, cost) {
                return breach("P7 marked tight", format!("({u}, {v}): {value} != cost {cost}"));
            }
        }
        Ok(())
    }
}

/// Runs the engine to completion.
pub fn run<S: Scalar>(inst: &Instance<S>) -> RunResult<S> {
    Engine::new(inst).finish()
}

/// Like [`run`], re-verifying every engine invariant after each step.
pub fn run_checked<S: Scalar>(inst: &Instance<S>) -> RunResult<S> {
    Engine::new(inst).with_invariant_checks(true).finish()
}

fn merge_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Whether `edges` connect all of `nodes`.
fn spans(nodes: &[usize], edges: &[(usize, usize)]) -> bool {
    let Some(&root) = nodes.first() else { return true };
    let mut seen = vec![root];
    let mut stack = vec![root];
    while let Some(x) = stack.pop() {
        for &(u, v) in edges {
            let next = if u == x {
                v
            } else if v == x {
                u
            } else {
                continue;
            };
            if !seen.contains(&next) {
                seen.push(next);
                stack.push(next);
            }
        }
    }
    seen.len() == nodes.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::gen_tightness_instance;
    use crate::instance::{Polarity, Variant};
    use crate::metric::{Metric, Point};
    use crate::scalar::Exact;

    fn q(n: i64, d: i64) -> Exact {
        Exact::from_ratio(n, d)
    }

    fn line(variant: Variant, reqs: &[(i64, (i64, i64), i64)]) -> Instance<Exact> {
        Instance::new(
            variant,
            Metric::Line,
            reqs.iter()
                .map(|&(x, (tn, td), s)| (Point::Line(q(x, 1)), q(tn, td), Polarity::from_sign(s).unwrap()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn same_point_pair_matches_immediately() {
        let inst = line(Variant::Mpmd, &[(0, (0, 1), 0), (0, (0, 1), 0)]);
        let r = run_checked(&inst);
        assert_eq!(r.matching, vec![MatchRecord { u: 0, v: 1, time: q(0, 1) }]);
        assert_eq!(r.summary.total_cost, q(0, 1));
    }

    #[test]
    fn distance_six_pair() {
        let inst = line(Variant::Mpmd, &[(0, (0, 1), 0), (6, (0, 1), 0)]);
        let r = run_checked(&inst);
        assert_eq!(r.matching[0].time, q(3, 1));
        assert_eq!(r.summary.connection_cost, q(6, 1));
        assert_eq!(r.summary.waiting_cost, q(6, 1));
        assert_eq!(r.summary.dual_objective, q(6, 1));
        assert_eq!(r.summary.total_cost, q(12, 1));
        assert_eq!(r.summary.num_sets, 3);
        assert_eq!(r.marked, vec![(0, 1)]);
    }

    #[test]
    fn next_event_two_free_singletons() {
        let inst = line(Variant::Mpmd, &[(0, (0, 1), 0), (6, (0, 1), 0)]);
        let mut e = Engine::new(&inst);
        e.advance_to(q(0, 1));
        e.admit(0);
        e.admit(1);
        assert_eq!(e.next_event_time(), Some(NextEvent::Tight { time: q(3, 1), u: 0, v: 1 }));
    }

    #[test]
    fn next_event_arrival_wins_when_earlier() {
        let inst = line(Variant::Mpmd, &[(0, (0, 1), 0), (6, (0, 1), 0), (100, (1, 1), 0), (200, (1, 1), 0)]);
        let mut e = Engine::new(&inst);
        e.admit(0);
        e.admit(1);
        assert_eq!(e.next_event_time(), Some(NextEvent::Arrival { time: q(1, 1), u: 2 }));
    }

    #[test]
    fn next_event_arrival_wins_ties() {
        let inst = line(Variant::Mpmd, &[(0, (0, 1), 0), (6, (0, 1), 0), (100, (3, 1), 0), (200, (3, 1), 0)]);
        let mut e = Engine::new(&inst);
        e.admit(0);
        e.admit(1);
        assert_eq!(e.next_event_time(), Some(NextEvent::Arrival { time: q(3, 1), u: 2 }));
    }

    #[test]
    fn free_singleton_meets_non_growing_set() {
        // The second pair of the two-point family: p2 is tight against the
        // non-growing {p1, q1} when Y(p2) = ε.
        let inst = gen_tightness_instance(4, Variant::Mpmd).unwrap();
        let mut e = Engine::new(&inst);
        e.step(); // arrivals at 0
        e.step(); // tight at 1
        assert_eq!(e.matching().len(), 1);
        e.step(); // arrivals at 1 + ε
        let eps = q(1, 4);
        let arrival = q(1, 1) + eps.clone();
        assert_eq!(
            e.next_event_time(),
            Some(NextEvent::Tight { time: arrival + eps.clone(), u: 0, v: 2 })
        );
        assert_eq!(e.constraint_value(0, 2).unwrap(), q(1, 1));
    }

    #[test]
    fn advance_grows_only_growing_sets() {
        let inst = line(Variant::Mpmd, &[(0, (0, 1), 0), (0, (0, 1), 0), (50, (0, 1), 0), (90, (20, 1), 0)]);
        let mut e = Engine::new(&inst);
        e.step();
        // {0, 1} merged and matched at 0; {2} is growing.
        let grown_before = e.sets()[3].y.clone();
        e.advance_to(q(5, 1));
        assert_eq!(e.potential(2), &q(5, 1));
        assert_eq!(e.sets()[2].y, q(5, 1));
        assert_eq!(e.sets()[3].y, grown_before);
        assert_eq!(e.potential(0), &q(0, 1));
    }

    /// `+0 -1 +2` at the origin collapse into one set with `2` free; `+3`
    /// at distance 5 joins it at t = 5/2, leaving two free positives.
    fn surplus_two() -> Instance<Exact> {
        line(
            Variant::Mbpmd,
            &[(0, (0, 1), 1), (0, (0, 1), -1), (0, (0, 1), 1), (5, (0, 1), 1), (1000, (0, 1), -1), (1000, (0, 1), -1)],
        )
    }

    #[test]
    fn growing_set_with_surplus_two_doubles_objective_rate() {
        let inst = surplus_two();
        let mut e = Engine::new(&inst);
        e.step();
        e.step();
        assert_eq!(e.clock(), &q(5, 2));
        let merged = e.active_set(0).unwrap();
        assert_eq!(e.sets()[merged].members, vec![0, 1, 2, 3]);
        assert_eq!(e.sets()[merged].sur, 2);
        let dual = |e: &Engine<Exact>| {
            e.sets().iter().fold(q(0, 1), |acc, s| acc + scalar::scale(&s.y, s.sur))
        };
        let before = dual(&e);
        e.advance_to(q(5, 2) + q(3, 1));
        // 2Δ from the merged set plus Δ from each negative singleton.
        assert_eq!(dual(&e) - before, q(2 * 3 + 3 + 3, 1));
    }

    #[test]
    fn mbpmd_merge_of_two_free_positives_with_a_negative() {
        let inst = surplus_two();
        let r = run_checked(&inst);
        let joined = r
            .sets
            .iter()
            .find(|s| s.members == vec![0, 1, 2, 3, 4])
            .expect("{+,+} set meets the negative at 1000");
        assert_eq!(joined.sur, 1);
        // FIFO: the earliest free positive (2) takes the negative.
        assert!(r.matching.contains(&MatchRecord { u: 2, v: 4, time: q(995, 2) }));
        assert!(r.matching.contains(&MatchRecord { u: 3, v: 5, time: q(995, 2) }));
    }

    #[test]
    #[should_panic(expected = "clock monotonicity")]
    fn advance_backwards_panics() {
        let inst = line(Variant::Mpmd, &[(0, (0, 1), 0), (6, (0, 1), 0)]);
        let mut e = Engine::new(&inst);
        e.advance_to(q(2, 1));
        e.advance_to(q(1, 1));
    }

    #[test]
    fn arrival_onto_free_request_at_same_point_is_immediately_tight() {
        // Request 0 waits alone from 0; request 1 arrives at the same point at
        // 2: cost = 2 = Y(0), so they match at the arrival instant.
        let inst = line(Variant::Mpmd, &[(0, (0, 1), 0), (0, (2, 1), 0)]);
        let mut e = Engine::new(&inst);
        e.admit(0);
        e.advance_to(q(2, 1));
        e.on_arrival(1);
        assert_eq!(e.matching(), &[MatchRecord { u: 0, v: 1, time: q(2, 1) }]);
    }

    #[test]
    fn arrival_without_tight_edge_adds_a_set() {
        let inst = line(Variant::Mpmd, &[(0, (0, 1), 0), (10, (1, 1), 0)]);
        let mut e = Engine::new(&inst);
        e.admit(0);
        e.advance_to(q(1, 1));
        e.on_arrival(1);
        assert_eq!(e.sets().iter().filter(|s| s.is_active()).count(), 2);
        assert_eq!(e.constraint_value(0, 1).unwrap(), q(1, 1));
    }

    #[test]
    fn mpmd_merge_of_two_growing_singletons() {
        let inst = line(Variant::Mpmd, &[(0, (0, 1), 0), (2, (0, 1), 0)]);
        let mut e = Engine::new(&inst);
        e.step();
        e.step();
        let s = &e.sets()[2];
        assert_eq!((s.sur, s.status), (0, SetStatus::NonGrowing));
        assert_eq!(e.matching().len(), 1);
    }

    #[test]
    fn cascade_in_one_instant() {
        // Points 0, 2, 4 at time 0: (0,1) and (1,2) both become tight at t=1.
        // The first merge matches 0 with 1; the second pulls 2 into the now
        // non-growing set at the same instant.
        let inst = line(
            Variant::Mpmd,
            &[(0, (0, 1), 0), (2, (0, 1), 0), (4, (0, 1), 0), (1000, (0, 1), 0)],
        );
        let mut e = Engine::new(&inst);
        e.step(); // arrivals
        e.step(); // t = 1
        assert_eq!(e.clock(), &q(1, 1));
        let merges: Vec<_> = e
            .events()
            .iter()
            .filter(|ev| matches!(ev.kind, EventKind::Merge { .. }))
            .collect();
        assert_eq!(merges.len(), 2);
        let top = e.active_set(2).unwrap();
        assert_eq!(e.sets()[top].members, vec![0, 1, 2]);
        assert_eq!(e.marked_edges(), &[(0, 1), (1, 2)]);
        e.check_invariants().unwrap();
    }

    #[test]
    fn constraint_value_cases() {
        let inst = line(Variant::Mpmd, &[(0, (0, 1), 0), (10, (0, 1), 0), (3, (1, 1), 0), (50, (1, 1), 0)]);
        let mut e = Engine::new(&inst);
        e.step();
        e.advance_to(q(1, 1));
        e.admit(2);
        e.admit(3);
        // freshly arrived request: value is the other side's potential.
        assert_eq!(e.constraint_value(2, 0).unwrap(), q(1, 1));
        assert_eq!(e.constraint_value(0, 1).unwrap(), q(2, 1));
        let r = e.finish();
        // (0, 2) becomes tight at some point and its value stays frozen at cost.
        assert!(r.marked.contains(&(0, 2)));
    }

    #[test]
    fn frozen_value_is_constant_after_merge() {
        let inst = line(Variant::Mpmd, &[(0, (0, 1), 0), (6, (0, 1), 0), (20, (0, 1), 0), (40, (0, 1), 0)]);
        let mut e = Engine::new(&inst);
        while e.matching().is_empty() {
            e.step();
        }
        let v = e.constraint_value(0, 1).unwrap();
        e.step();
        e.step();
        assert_eq!(e.constraint_value(0, 1).unwrap(), v);
    }

    #[test]
    fn ineligible_constraint_value() {
        let inst = line(Variant::Mbpmd, &[(0, (0, 1), 1), (1, (0, 1), 1), (2, (0, 1), -1), (3, (0, 1), -1)]);
        let e = Engine::new(&inst);
        assert_eq!(e.constraint_value(0, 1), Err(EngineError::Ineligible(0, 1)));
    }

    #[test]
    fn tightness_family_connection_cost() {
        for variant in [Variant::Mpmd, Variant::Mbpmd] {
            for m in [2usize, 4, 6] {
                let inst = gen_tightness_instance(m, variant).unwrap();
                let r = run_checked(&inst);
                assert_eq!(r.summary.connection_cost, q(2 * m as i64, 1));
                assert_eq!(r.matching[0].time, q(1, 1));
                let eps = q(1, m as i64);
                for pair in &r.matching[1..] {
                    assert_eq!(pair.time.clone() - inst.atime(pair.u), eps);
                }
            }
        }
    }

    #[test]
    fn float_mode_euclidean() {
        let inst = Instance::new(
            Variant::Mpmd,
            Metric::Euclidean,
            vec![
                (Point::Plane(0.0, 0.0), 0.0, Polarity::Neutral),
                (Point::Plane(3.0, 4.0), 0.0, Polarity::Neutral),
                (Point::Plane(0.1, 0.0), 0.3, Polarity::Neutral),
                (Point::Plane(9.0, 9.0), 0.7, Polarity::Neutral),
            ],
        )
        .unwrap();
        let r = run_checked(&inst);
        assert_eq!(r.matching.len(), 2);
        assert!((r.summary.waiting_cost - r.summary.dual_objective).abs() < 1e-9);
    }
}
