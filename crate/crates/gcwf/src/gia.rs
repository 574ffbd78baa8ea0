//! Group interface automata: finite acyclic automata whose transitions are
//! communication actions of a group of participants, composed with a
//! synchronous tensor product that fuses matching sends and receives into
//! internal actions.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::gchor::Participant;
use crate::pomsets::{ActionLabel, Polarity};

/// A τ-free sequence of actions; the empty sequence stands for τ itself.
pub type ActionWord = Vec<ActionLabel>;

/// A transition: source, label, target.
pub type Transition = (StateId, ActionLabel, StateId);

/// Structured state identifiers, so product and tagged states keep their
/// provenance readable in diagnostics and DOT output.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StateId {
    Atom(String),
    Tagged(Box<StateId>, u32),
    Pair(Box<StateId>, Box<StateId>),
    /// A merged equivalence class of states, kept sorted and deduplicated.
    Class(Vec<StateId>),
}

impl StateId {
    pub fn atom(name: &str) -> Self {
        StateId::Atom(name.to_string())
    }

    pub fn tagged(self, n: u32) -> Self {
        StateId::Tagged(Box::new(self), n)
    }

    pub fn pair(left: StateId, right: StateId) -> Self {
        StateId::Pair(Box::new(left), Box::new(right))
    }

    pub fn class<I: IntoIterator<Item = StateId>>(members: I) -> Self {
        let mut ms: Vec<StateId> = members.into_iter().collect();
        ms.sort();
        ms.dedup();
        StateId::Class(ms)
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateId::Atom(s) => f.write_str(s),
            StateId::Tagged(id, n) => write!(f, "{id}.{n}"),
            StateId::Pair(a, b) => write!(f, "({a},{b})"),
            StateId::Class(ms) => {
                f.write_str("[")?;
                for (i, m) in ms.iter().enumerate() {
                    if i > 0 {
                        f.write_str("|")?;
                    }
                    write!(f, "{m}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GiaError {
    #[error("automaton group must be nonempty")]
    EmptyGroup,
    #[error("label {label} on {from} -> {to} does not fit group {{{group}}}")]
    LabelOutsideGroup {
        from: String,
        label: String,
        to: String,
        group: String,
    },
    #[error("transition graph has a cycle through {0}")]
    CyclicTransitions(String),
    #[error("groups overlap on {{{0}}}")]
    NotComposable(String),
    #[error("state {0} not present in the automaton")]
    UnknownState(String),
}

/// An automaton over a group of participants. Transition labels must fit
/// the group: inputs come from outside into the group, outputs leave the
/// group, internal actions stay inside it.
#[derive(Debug, Clone)]
pub struct Gia {
    states: BTreeSet<StateId>,
    initial: StateId,
    group: BTreeSet<Participant>,
    transitions: BTreeSet<Transition>,
    /// Leaf indices of the syntax-tree interactions each transition came
    /// from; diagnostics only, not part of the automaton's identity.
    origins: BTreeMap<Transition, BTreeSet<usize>>,
}

// Origins are bookkeeping, excluded from equality on purpose.
impl PartialEq for Gia {
    fn eq(&self, other: &Self) -> bool {
        self.states == other.states
            && self.initial == other.initial
            && self.group == other.group
            && self.transitions == other.transitions
    }
}

impl Eq for Gia {}

impl Gia {
    /// Builds and validates an automaton. The state set is the initial
    /// state plus every transition endpoint.
    pub fn new(
        initial: StateId,
        group: BTreeSet<Participant>,
        transitions: BTreeSet<Transition>,
    ) -> Result<Self, GiaError> {
        let mut states = BTreeSet::from([initial.clone()]);
        for (s, _, t) in &transitions {
            states.insert(s.clone());
            states.insert(t.clone());
        }
        let g = Gia {
            states,
            initial,
            group,
            transitions,
            origins: BTreeMap::new(),
        };
        match validate_gia(&g).into_iter().next() {
            Some(err) => Err(err),
            None => Ok(g),
        }
    }

    pub fn states(&self) -> &BTreeSet<StateId> {
        &self.states
    }

    pub fn initial(&self) -> &StateId {
        &self.initial
    }

    pub fn group(&self) -> &BTreeSet<Participant> {
        &self.group
    }

    pub fn transitions(&self) -> &BTreeSet<Transition> {
        &self.transitions
    }

    pub fn outgoing<'a>(&'a self, v: &'a StateId) -> impl Iterator<Item = &'a Transition> {
        self.transitions.iter().filter(move |(s, _, _)| s == v)
    }

    pub fn is_sink(&self, v: &StateId) -> bool {
        self.outgoing(v).next().is_none()
    }

    pub fn sinks(&self) -> Vec<StateId> {
        self.states.iter().filter(|v| self.is_sink(v)).cloned().collect()
    }

    pub fn reachable(&self) -> BTreeSet<StateId> {
        let mut seen = BTreeSet::from([self.initial.clone()]);
        let mut queue = VecDeque::from([self.initial.clone()]);
        while let Some(v) = queue.pop_front() {
            for (_, _, t) in self.outgoing(&v) {
                if seen.insert(t.clone()) {
                    queue.push_back(t.clone());
                }
            }
        }
        seen
    }

    /// Syntax-tree leaf indices recorded for a transition, if any.
    pub fn origin(&self, t: &Transition) -> Option<&BTreeSet<usize>> {
        self.origins.get(t)
    }

    pub(crate) fn add_origin(&mut self, t: Transition, leaves: BTreeSet<usize>) {
        debug_assert!(self.transitions.contains(&t));
        self.origins.entry(t).or_default().extend(leaves);
    }

    pub(crate) fn states_mut_insert(&mut self, v: StateId) {
        self.states.insert(v);
    }

    pub(crate) fn origins_iter(
        &self,
    ) -> impl Iterator<Item = (&Transition, &BTreeSet<usize>)> {
        self.origins.iter()
    }

    /// Input labels occurring on transitions.
    pub fn input_labels(&self) -> BTreeSet<ActionLabel> {
        self.labels_of(Polarity::Input)
    }

    /// Output labels occurring on transitions.
    pub fn output_labels(&self) -> BTreeSet<ActionLabel> {
        self.labels_of(Polarity::Output)
    }

    /// Internal labels occurring on transitions.
    pub fn internal_labels(&self) -> BTreeSet<ActionLabel> {
        self.labels_of(Polarity::Internal)
    }

    fn labels_of(&self, pol: Polarity) -> BTreeSet<ActionLabel> {
        self.transitions
            .iter()
            .map(|(_, l, _)| l)
            .filter(|l| l.polarity() == Some(pol))
            .cloned()
            .collect()
    }
}

fn label_fits_group(label: &ActionLabel, group: &BTreeSet<Participant>) -> bool {
    match label {
        ActionLabel::Tau => true,
        ActionLabel::Comm { sender, receiver, polarity, .. } => match polarity {
            Polarity::Input => !group.contains(sender) && group.contains(receiver),
            Polarity::Output => group.contains(sender) && !group.contains(receiver),
            Polarity::Internal => group.contains(sender) && group.contains(receiver),
        },
    }
}

fn display_group(group: &BTreeSet<Participant>) -> String {
    group.iter().map(|p| p.0.as_str()).collect::<Vec<_>>().join(",")
}

/// All invariant violations: label class membership per transition plus
/// acyclicity and group nonemptiness. Empty result means the automaton is
/// well formed.
pub fn validate_gia(g: &Gia) -> Vec<GiaError> {
    let mut errors = Vec::new();
    if g.group.is_empty() {
        errors.push(GiaError::EmptyGroup);
    }
    for (s, l, t) in &g.transitions {
        if !label_fits_group(l, &g.group) {
            errors.push(GiaError::LabelOutsideGroup {
                from: s.to_string(),
                label: l.to_string(),
                to: t.to_string(),
                group: display_group(&g.group),
            });
        }
    }
    if let Some(v) = find_cycle(g) {
        errors.push(GiaError::CyclicTransitions(v.to_string()));
    }
    errors
}

fn find_cycle(g: &Gia) -> Option<StateId> {
    // Colored DFS: gray = on the current stack.
    #[derive(Clone, Copy, PartialEq)]
    enum Color {
        White,
        Gray,
        Black,
    }
    let mut color: BTreeMap<&StateId, Color> =
        g.states.iter().map(|v| (v, Color::White)).collect();
    fn visit<'a>(
        g: &'a Gia,
        v: &'a StateId,
        color: &mut BTreeMap<&'a StateId, Color>,
    ) -> Option<StateId> {
        color.insert(v, Color::Gray);
        for (_, _, t) in g.outgoing(v) {
            match color.get(t).copied().unwrap_or(Color::White) {
                Color::Gray => return Some(t.clone()),
                Color::White => {
                    if let Some(c) = visit(g, t, color) {
                        return Some(c);
                    }
                }
                Color::Black => {}
            }
        }
        color.insert(v, Color::Black);
        None
    }
    let states: Vec<&StateId> = g.states.iter().collect();
    for v in states {
        if color.get(v) == Some(&Color::White) {
            if let Some(c) = visit(g, v, &mut color) {
                return Some(c);
            }
        }
    }
    None
}

/// The shared inputs, outputs and internals of two automata: inputs of one
/// matched by outputs of the other, and the internal labels those matches
/// fuse into.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SharedInterfaces {
    pub si: BTreeSet<ActionLabel>,
    pub so: BTreeSet<ActionLabel>,
    pub sh: BTreeSet<ActionLabel>,
}

pub fn shared_interfaces(g1: &Gia, g2: &Gia) -> SharedInterfaces {
    let mut out = SharedInterfaces::default();
    for (ins, outs) in [
        (g1.input_labels(), g2.output_labels()),
        (g2.input_labels(), g1.output_labels()),
    ] {
        for i in ins {
            if outs.contains(&i.dual()) {
                out.so.insert(i.dual());
                if let ActionLabel::Comm { sender, receiver, message, .. } = &i {
                    out.sh.insert(ActionLabel::internal(sender, receiver, message));
                }
                out.si.insert(i);
            }
        }
    }
    out
}

/// True iff the groups are disjoint.
pub fn composable(g1: &Gia, g2: &Gia) -> bool {
    g1.group.is_disjoint(&g2.group)
}

/// True iff the label must synchronize with the other side: its far
/// endpoint lies in the other automaton's group.
fn synchronizes(label: &ActionLabel, other_group: &BTreeSet<Participant>) -> bool {
    match label.polarity() {
        Some(Polarity::Input) | Some(Polarity::Output) => {
            label.object().map_or(false, |p| other_group.contains(p))
        }
        _ => false,
    }
}

/// Synchronous product of two composable automata. Actions addressed at
/// the other group only fire fused with a matching dual action there; all
/// other actions interleave. Restricted to states reachable from the
/// initial pair.
pub fn tensor(g1: &Gia, g2: &Gia) -> Result<Gia, GiaError> {
    if !composable(g1, g2) {
        let overlap: BTreeSet<Participant> =
            g1.group.intersection(&g2.group).cloned().collect();
        return Err(GiaError::NotComposable(display_group(&overlap)));
    }
    let initial = StateId::pair(g1.initial.clone(), g2.initial.clone());
    let mut transitions = BTreeSet::new();
    let mut seen = BTreeSet::from([(g1.initial.clone(), g2.initial.clone())]);
    let mut queue = VecDeque::from([(g1.initial.clone(), g2.initial.clone())]);
    while let Some((v1, v2)) = queue.pop_front() {
        let source = StateId::pair(v1.clone(), v2.clone());
        let push = |transitions: &mut BTreeSet<Transition>,
                        seen: &mut BTreeSet<(StateId, StateId)>,
                        queue: &mut VecDeque<(StateId, StateId)>,
                        label: ActionLabel,
                        u1: StateId,
                        u2: StateId| {
            transitions.insert((source.clone(), label, StateId::pair(u1.clone(), u2.clone())));
            if seen.insert((u1.clone(), u2.clone())) {
                queue.push_back((u1, u2));
            }
        };
        for (_, l, t) in g1.outgoing(&v1) {
            if !synchronizes(l, &g2.group) {
                push(&mut transitions, &mut seen, &mut queue, l.clone(), t.clone(), v2.clone());
            }
        }
        for (_, l, t) in g2.outgoing(&v2) {
            if !synchronizes(l, &g1.group) {
                push(&mut transitions, &mut seen, &mut queue, l.clone(), v1.clone(), t.clone());
            }
        }
        for (_, l1, t1) in g1.outgoing(&v1) {
            if l1.is_tau() || l1.is_internal() {
                continue;
            }
            for (_, l2, t2) in g2.outgoing(&v2) {
                if *l2 == l1.dual() {
                    let fused = match l1 {
                        ActionLabel::Comm { sender, receiver, message, .. } => {
                            ActionLabel::internal(sender, receiver, message)
                        }
                        ActionLabel::Tau => unreachable!(),
                    };
                    push(&mut transitions, &mut seen, &mut queue, fused, t1.clone(), t2.clone());
                }
            }
        }
    }
    let group = g1.group.union(&g2.group).cloned().collect();
    Gia::new(initial, group, transitions)
}

/// Free product: each step moves exactly one side, no fusion. Restricted
/// to reachable pairs.
pub fn interleave(g1: &Gia, g2: &Gia) -> Gia {
    let initial = StateId::pair(g1.initial.clone(), g2.initial.clone());
    let mut transitions = BTreeSet::new();
    let mut origins: BTreeMap<Transition, BTreeSet<usize>> = BTreeMap::new();
    let mut seen = BTreeSet::from([(g1.initial.clone(), g2.initial.clone())]);
    let mut queue = VecDeque::from([(g1.initial.clone(), g2.initial.clone())]);
    while let Some((v1, v2)) = queue.pop_front() {
        let source = StateId::pair(v1.clone(), v2.clone());
        for (side, g) in [(0, g1), (1, g2)] {
            let at = if side == 0 { &v1 } else { &v2 };
            for tr in g.outgoing(at) {
                let (_, l, t) = tr;
                let (u1, u2) = if side == 0 {
                    (t.clone(), v2.clone())
                } else {
                    (v1.clone(), t.clone())
                };
                let product_tr =
                    (source.clone(), l.clone(), StateId::pair(u1.clone(), u2.clone()));
                if let Some(leaves) = g.origin(tr) {
                    origins.entry(product_tr.clone()).or_default().extend(leaves.clone());
                }
                transitions.insert(product_tr);
                if seen.insert((u1.clone(), u2.clone())) {
                    queue.push_back((u1, u2));
                }
            }
        }
    }
    let group = g1.group.union(&g2.group).cloned().collect();
    let mut out = Gia::new(initial, group, transitions)
        .expect("interleaving same-group automata preserves validity");
    out.origins = origins;
    out
}

/// Replaces every occurrence of `old` with `new`; if `new` already exists
/// the two states merge.
pub fn substitute(g: &Gia, old: &StateId, new: &StateId) -> Result<Gia, GiaError> {
    if !g.states.contains(old) {
        return Err(GiaError::UnknownState(old.to_string()));
    }
    let map = |v: &StateId| if v == old { new.clone() } else { v.clone() };
    let initial = map(&g.initial);
    let transitions: BTreeSet<Transition> = g
        .transitions
        .iter()
        .map(|(s, l, t)| (map(s), l.clone(), map(t)))
        .collect();
    let mut out = Gia::new(initial, g.group.clone(), transitions)?;
    // Lone states survive substitution even without transitions.
    for v in &g.states {
        out.states.insert(map(v));
    }
    for (tr, leaves) in &g.origins {
        let (s, l, t) = tr;
        out.origins
            .entry((map(s), l.clone(), map(t)))
            .or_default()
            .extend(leaves.clone());
    }
    Ok(out)
}

/// Pairs every state with the tag `n`, preserving structure.
pub fn tag(g: &Gia, n: u32) -> Gia {
    let map = |v: &StateId| v.clone().tagged(n);
    let transitions: BTreeSet<Transition> = g
        .transitions
        .iter()
        .map(|(s, l, t)| (map(s), l.clone(), map(t)))
        .collect();
    let mut out = Gia::new(map(&g.initial), g.group.clone(), transitions)
        .expect("tagging preserves validity");
    for v in &g.states {
        out.states.insert(map(v));
    }
    for ((s, l, t), leaves) in &g.origins {
        out.origins.insert((map(s), l.clone(), map(t)), leaves.clone());
    }
    out
}

/// Componentwise union with `g1`'s initial. States shared on purpose
/// (after substitution) glue the two automata together.
pub fn union(g1: &Gia, g2: &Gia) -> Gia {
    let transitions: BTreeSet<Transition> =
        g1.transitions.union(&g2.transitions).cloned().collect();
    let group = g1.group.union(&g2.group).cloned().collect();
    let mut out = Gia::new(g1.initial.clone(), group, transitions)
        .expect("union of glued automata preserves validity");
    for v in g1.states.union(&g2.states) {
        out.states.insert(v.clone());
    }
    for (tr, leaves) in g1.origins.iter().chain(g2.origins.iter()) {
        out.origins.entry(tr.clone()).or_default().extend(leaves.clone());
    }
    out
}

/// Words (τ erased) over all paths `from` to `to`; contains the empty word
/// iff `from = to`. Finite because the automaton is acyclic.
pub fn language(g: &Gia, from: &StateId, to: &StateId) -> BTreeSet<ActionWord> {
    assert!(g.states.contains(from), "language: unknown source state");
    assert!(g.states.contains(to), "language: unknown target state");
    let mut memo: BTreeMap<StateId, BTreeSet<ActionWord>> = BTreeMap::new();
    words_to(g, from, to, &mut memo)
}

fn words_to(
    g: &Gia,
    v: &StateId,
    to: &StateId,
    memo: &mut BTreeMap<StateId, BTreeSet<ActionWord>>,
) -> BTreeSet<ActionWord> {
    if let Some(cached) = memo.get(v) {
        return cached.clone();
    }
    let mut out = BTreeSet::new();
    if v == to {
        out.insert(Vec::new());
    }
    let steps: Vec<(ActionLabel, StateId)> = g
        .outgoing(v)
        .map(|(_, l, t)| (l.clone(), t.clone()))
        .collect();
    for (l, t) in steps {
        for suffix in words_to(g, &t, to, memo) {
            let mut word = Vec::new();
            if !l.is_tau() {
                word.push(l.clone());
            }
            word.extend(suffix);
            out.insert(word);
        }
    }
    memo.insert(v.clone(), out.clone());
    out
}

/// Words from the initial state to any sink: the maximal behaviors.
pub fn complete_language(g: &Gia) -> BTreeSet<ActionWord> {
    let reachable = g.reachable();
    let mut out = BTreeSet::new();
    for sink in g.sinks() {
        if reachable.contains(&sink) {
            out.extend(language(g, &g.initial, &sink));
        }
    }
    out
}

/// True iff a bijection on reachable states preserves initials, groups,
/// and labelled transitions.
pub fn gia_isomorphic(g1: &Gia, g2: &Gia) -> bool {
    if g1.group != g2.group {
        return false;
    }
    let r1: Vec<StateId> = g1.reachable().into_iter().collect();
    let r2: Vec<StateId> = g2.reachable().into_iter().collect();
    if r1.len() != r2.len() {
        return false;
    }
    let keep = |g: &Gia, r: &[StateId]| -> BTreeSet<(usize, ActionLabel, usize)> {
        let index: BTreeMap<&StateId, usize> =
            r.iter().enumerate().map(|(i, v)| (v, i)).collect();
        g.transitions
            .iter()
            .filter_map(|(s, l, t)| Some((*index.get(s)?, l.clone(), *index.get(t)?)))
            .collect()
    };
    let t1 = keep(g1, &r1);
    let t2 = keep(g2, &r2);
    if t1.len() != t2.len() {
        return false;
    }
    let init1 = r1.iter().position(|v| v == &g1.initial).unwrap();
    let init2 = r2.iter().position(|v| v == &g2.initial).unwrap();
    let n = r1.len();
    let signature = |ts: &BTreeSet<(usize, ActionLabel, usize)>, v: usize| {
        let mut outs: Vec<&ActionLabel> =
            ts.iter().filter(|(s, _, _)| *s == v).map(|(_, l, _)| l).collect();
        let mut ins: Vec<&ActionLabel> =
            ts.iter().filter(|(_, _, t)| *t == v).map(|(_, l, _)| l).collect();
        outs.sort();
        ins.sort();
        (outs.into_iter().cloned().collect::<Vec<_>>(), ins.into_iter().cloned().collect::<Vec<_>>())
    };
    let mut candidates: Vec<Vec<usize>> = Vec::with_capacity(n);
    for v in 0..n {
        let sig = signature(&t1, v);
        let options: Vec<usize> = (0..n)
            .filter(|&w| {
                (v == init1) == (w == init2) && signature(&t2, w) == sig
            })
            .collect();
        if options.is_empty() {
            return false;
        }
        candidates.push(options);
    }
    let mut assignment: Vec<Option<usize>> = vec![None; n];
    let mut used = vec![false; n];
    map_states(0, n, &candidates, &t1, &t2, &mut assignment, &mut used)
}

fn map_states(
    v: usize,
    n: usize,
    candidates: &[Vec<usize>],
    t1: &BTreeSet<(usize, ActionLabel, usize)>,
    t2: &BTreeSet<(usize, ActionLabel, usize)>,
    assignment: &mut Vec<Option<usize>>,
    used: &mut Vec<bool>,
) -> bool {
    if v == n {
        return true;
    }
    'next: for &w in &candidates[v] {
        if used[w] {
            continue;
        }
        for prev in 0..v {
            let q = assignment[prev].unwrap();
            let between1: BTreeSet<&ActionLabel> =
                t1.iter().filter(|(s, _, t)| *s == v && *t == prev).map(|(_, l, _)| l).collect();
            let between2: BTreeSet<&ActionLabel> =
                t2.iter().filter(|(s, _, t)| *s == w && *t == q).map(|(_, l, _)| l).collect();
            if between1 != between2 {
                continue 'next;
            }
            let back1: BTreeSet<&ActionLabel> =
                t1.iter().filter(|(s, _, t)| *s == prev && *t == v).map(|(_, l, _)| l).collect();
            let back2: BTreeSet<&ActionLabel> =
                t2.iter().filter(|(s, _, t)| *s == q && *t == w).map(|(_, l, _)| l).collect();
            if back1 != back2 {
                continue 'next;
            }
        }
        assignment[v] = Some(w);
        used[w] = true;
        if map_states(v + 1, n, candidates, t1, t2, assignment, used) {
            return true;
        }
        assignment[v] = None;
        used[w] = false;
    }
    false
}

/// DOT rendering: states as nodes (initial marked by an entry arrow), τ
/// shown as "τ", the group and derived interfaces in a legend.
pub fn gia_to_dot(g: &Gia, name: &str) -> String {
    let ids: BTreeMap<&StateId, String> = g
        .states
        .iter()
        .enumerate()
        .map(|(i, v)| (v, format!("n{i}")))
        .collect();
    let mut out = format!("digraph {name} {{\n  rankdir=LR;\n  node [shape=circle];\n");
    out.push_str("  start [shape=point];\n");
    for (v, id) in &ids {
        out.push_str(&format!("  {id} [label=\"{v}\"];\n"));
    }
    out.push_str(&format!("  start -> {};\n", ids[&g.initial]));
    for (s, l, t) in &g.transitions {
        let text = if l.is_tau() { "τ".to_string() } else { l.to_string() };
        out.push_str(&format!("  {} -> {} [label=\"{text}\"];\n", ids[s], ids[t]));
    }
    let fmt_labels = |ls: BTreeSet<ActionLabel>| {
        ls.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(", ")
    };
    out.push_str(&format!(
        "  label=\"group: {{{}}}\\nin: {}\\nout: {}\\nint: {}\";\n  labelloc=b;\n}}\n",
        display_group(&g.group),
        fmt_labels(g.input_labels()),
        fmt_labels(g.output_labels()),
        fmt_labels(g.internal_labels()),
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gchor::Message;

    fn p(s: &str) -> Participant {
        Participant::new(s)
    }

    fn grp(names: &[&str]) -> BTreeSet<Participant> {
        names.iter().map(|s| p(s)).collect()
    }

    fn out(a: &str, b: &str, m: &str) -> ActionLabel {
        ActionLabel::output(&p(a), &p(b), &Message::new(m))
    }

    fn inp(a: &str, b: &str, m: &str) -> ActionLabel {
        ActionLabel::input(&p(a), &p(b), &Message::new(m))
    }

    fn int(a: &str, b: &str, m: &str) -> ActionLabel {
        ActionLabel::internal(&p(a), &p(b), &Message::new(m))
    }

    fn st(s: &str) -> StateId {
        StateId::atom(s)
    }

    fn build(initial: &str, group: &[&str], edges: &[(&str, ActionLabel, &str)]) -> Gia {
        Gia::new(
            st(initial),
            grp(group),
            edges.iter().map(|(s, l, t)| (st(s), l.clone(), st(t))).collect(),
        )
        .unwrap()
    }

    /// The three single-interaction automata used across product tests:
    /// A sends m to C, B sends n to C, C receives both in order.
    fn abc() -> (Gia, Gia, Gia) {
        let ia = build("v0", &["A"], &[("v0", out("A", "C", "m"), "v1")]);
        let ib = build("u0", &["B"], &[("u0", out("B", "C", "n"), "u1")]);
        let ic = build(
            "w0",
            &["C"],
            &[("w0", inp("A", "C", "m"), "w1"), ("w1", inp("B", "C", "n"), "w2")],
        );
        (ia, ib, ic)
    }

    #[test]
    fn validation_accepts_fitting_labels() {
        let (ia, _, _) = abc();
        assert!(validate_gia(&ia).is_empty());
    }

    #[test]
    fn validation_rejects_labels_outside_the_group() {
        let err = Gia::new(
            st("v0"),
            grp(&["A"]),
            BTreeSet::from([(st("v0"), out("C", "A", "m"), st("v1"))]),
        )
        .unwrap_err();
        assert!(matches!(err, GiaError::LabelOutsideGroup { .. }));
    }

    #[test]
    fn validation_rejects_cycles() {
        let err = Gia::new(
            st("v0"),
            grp(&["A"]),
            BTreeSet::from([
                (st("v0"), out("A", "B", "m"), st("v1")),
                (st("v1"), ActionLabel::Tau, st("v0")),
            ]),
        )
        .unwrap_err();
        assert!(matches!(err, GiaError::CyclicTransitions(_)));
    }

    #[test]
    fn shared_interfaces_match_duals() {
        let (ia, ib, ic) = abc();
        let s = shared_interfaces(&ia, &ic);
        assert_eq!(s.si, BTreeSet::from([inp("A", "C", "m")]));
        assert_eq!(s.so, BTreeSet::from([out("A", "C", "m")]));
        assert_eq!(s.sh, BTreeSet::from([int("A", "C", "m")]));
        assert_eq!(shared_interfaces(&ia, &ib), SharedInterfaces::default());
        assert_eq!(shared_interfaces(&ia, &ia), SharedInterfaces::default());
    }

    #[test]
    fn composability_is_group_disjointness() {
        let (ia, ib, _) = abc();
        assert!(composable(&ia, &ib));
        let iab = build("x0", &["A", "B"], &[("x0", int("A", "B", "m"), "x1")]);
        assert!(!composable(&iab, &ib));
        let (_, _, ic) = abc();
        assert!(composable(&iab, &ic));
    }

    #[test]
    fn tensor_interleaves_unrelated_automata() {
        let (ia, ib, _) = abc();
        let prod = tensor(&ia, &ib).unwrap();
        assert_eq!(prod.states().len(), 4);
        assert_eq!(prod.transitions().len(), 4);
        let labels: BTreeSet<&ActionLabel> =
            prod.transitions().iter().map(|(_, l, _)| l).collect();
        assert_eq!(labels, BTreeSet::from([&out("A", "C", "m"), &out("B", "C", "n")]));
        assert!(validate_gia(&prod).is_empty());
    }

    #[test]
    fn tensor_fuses_matching_actions_into_a_chain() {
        let (ia, ib, ic) = abc();
        let prod = tensor(&tensor(&ia, &ib).unwrap(), &ic).unwrap();
        assert_eq!(prod.states().len(), 3);
        let labels: Vec<&ActionLabel> =
            prod.transitions().iter().map(|(_, l, _)| l).collect();
        assert_eq!(labels, vec![&int("A", "C", "m"), &int("B", "C", "n")]);
        let words = complete_language(&prod);
        assert_eq!(
            words,
            BTreeSet::from([vec![int("A", "C", "m"), int("B", "C", "n")]])
        );
    }

    #[test]
    fn tensor_blocks_unmatched_shared_actions() {
        // A wants to send m first, B only expects n first: nothing fires.
        let ia = build(
            "v0",
            &["A"],
            &[("v0", out("A", "B", "m"), "v1"), ("v1", out("A", "B", "n"), "v2")],
        );
        let ib = build(
            "u0",
            &["B"],
            &[("u0", inp("A", "B", "n"), "u1"), ("u1", inp("A", "B", "m"), "u2")],
        );
        let prod = tensor(&ia, &ib).unwrap();
        assert_eq!(prod.states().len(), 1);
        assert!(prod.transitions().is_empty());
    }

    #[test]
    fn tensor_requires_composability() {
        let (ia, _, _) = abc();
        assert!(matches!(tensor(&ia, &ia), Err(GiaError::NotComposable(_))));
    }

    #[test]
    fn interleave_builds_the_full_diamond() {
        let g1 = build("v0", &["A"], &[("v0", out("A", "B", "m"), "v1")]);
        let g2 = build("u0", &["A"], &[("u0", out("A", "B", "m"), "u1")]);
        let d = interleave(&g1, &g2);
        assert_eq!(d.states().len(), 4);
        assert_eq!(d.transitions().len(), 4);
        assert!(d.transitions().iter().all(|(_, l, _)| *l == out("A", "B", "m")));
    }

    #[test]
    fn interleave_with_a_point_is_identity_up_to_naming() {
        let g = build(
            "v0",
            &["A"],
            &[("v0", out("A", "B", "m"), "v1"), ("v1", out("A", "C", "n"), "v2")],
        );
        let point = Gia::new(st("p"), grp(&["A"]), BTreeSet::new()).unwrap();
        assert!(gia_isomorphic(&interleave(&g, &point), &g));
    }

    #[test]
    fn substitution_merges_states() {
        let g = build(
            "v0",
            &["A"],
            &[("v0", out("A", "B", "m"), "v1"), ("v2", out("A", "B", "n"), "v3")],
        );
        let merged = substitute(&g, &st("v2"), &st("v1")).unwrap();
        assert!(merged.states().contains(&st("v1")));
        assert!(!merged.states().contains(&st("v2")));
        assert!(merged
            .transitions()
            .contains(&(st("v1"), out("A", "B", "n"), st("v3"))));
        assert_eq!(substitute(&g, &st("v0"), &st("v0")).unwrap(), g);
        assert!(matches!(
            substitute(&g, &st("zz"), &st("v0")),
            Err(GiaError::UnknownState(_))
        ));
    }

    #[test]
    fn tagging_renames_but_preserves_shape() {
        let g = build("v0", &["A"], &[("v0", out("A", "B", "m"), "v1")]);
        let t1 = tag(&g, 1);
        let t2 = tag(&g, 2);
        assert!(t1.states().is_disjoint(t2.states()));
        assert_eq!(t1.transitions().len(), g.transitions().len());
        assert!(gia_isomorphic(&t1, &g));
    }

    #[test]
    fn union_keeps_the_first_initial() {
        let g1 = build("v0", &["A"], &[("v0", out("A", "B", "m"), "v1")]);
        let g2 = build("u0", &["A"], &[("u0", out("A", "B", "n"), "u1")]);
        let u = union(&g1, &g2);
        assert_eq!(u.initial(), &st("v0"));
        assert_eq!(u.states().len(), 4);
        assert!(!u.reachable().contains(&st("u0")));
        assert_eq!(union(&g1, &g1), g1);
    }

    #[test]
    fn language_erases_tau_and_contains_the_empty_word_on_identity() {
        let g = Gia::new(
            st("v"),
            grp(&["A"]),
            BTreeSet::from([
                (st("v"), out("A", "B", "m"), st("u")),
                (st("u"), ActionLabel::Tau, st("w")),
            ]),
        )
        .unwrap();
        assert_eq!(language(&g, &st("v"), &st("v")), BTreeSet::from([vec![]]));
        assert_eq!(
            language(&g, &st("v"), &st("w")),
            BTreeSet::from([vec![out("A", "B", "m")]])
        );
        let lonely = substitute(&g, &st("v"), &st("v")).unwrap();
        assert_eq!(language(&lonely, &st("w"), &st("v")), BTreeSet::new());
    }

    #[test]
    fn tensor_commutes_and_associates_up_to_isomorphism() {
        let (ia, ib, ic) = abc();
        let ab = tensor(&ia, &ib).unwrap();
        let ba = tensor(&ib, &ia).unwrap();
        assert!(gia_isomorphic(&ab, &ba));
        let left = tensor(&ab, &ic).unwrap();
        let right = tensor(&ia, &tensor(&ib, &ic).unwrap()).unwrap();
        assert!(gia_isomorphic(&left, &right));
    }

    #[test]
    fn isomorphism_rejects_different_labels() {
        let g1 = build("v0", &["A"], &[("v0", out("A", "B", "m"), "v1")]);
        let g2 = build("v0", &["A"], &[("v0", out("A", "B", "n"), "v1")]);
        assert!(!gia_isomorphic(&g1, &g2));
    }

    #[test]
    fn dot_output_is_deterministic_and_marks_tau() {
        let g = Gia::new(
            st("v"),
            grp(&["A"]),
            BTreeSet::from([(st("v"), ActionLabel::Tau, st("u"))]),
        )
        .unwrap();
        let dot = gia_to_dot(&g, "g");
        assert_eq!(dot, gia_to_dot(&g, "g"));
        assert!(dot.contains("label=\"τ\""));
        assert!(dot.contains("start ->"));
    }
}
