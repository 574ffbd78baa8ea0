//! Pomset semantics of choreographies and the semantic well-formedness
//! oracle.
//!
//! A choreography denotes a family of partially ordered multisets of
//! communication events, or ⊥ when a parallel composition shares input
//! labels (not well-forked) or a choice cannot be attributed to a single
//! deciding participant (not well-branched). This module is deliberately
//! independent from the automata-based analysis so the two can check each
//! other.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::gchor::{participants, GChor, Message, Participant};

/// Direction of a communication action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarity {
    /// `!`: a send.
    Output,
    /// `?`: a receive.
    Input,
    /// `!?`: a send already fused with its receive inside a composition.
    Internal,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Output => "!",
            Polarity::Input => "?",
            Polarity::Internal => "!?",
        })
    }
}

/// A transition or event label: a communication action or the silent `tau`.
///
/// Pomset events only ever carry `Output`/`Input` actions; `Internal` and
/// `Tau` arise in automata.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionLabel {
    Comm {
        sender: Participant,
        receiver: Participant,
        polarity: Polarity,
        message: Message,
    },
    Tau,
}

impl ActionLabel {
    pub fn output(sender: &Participant, receiver: &Participant, message: &Message) -> Self {
        ActionLabel::Comm {
            sender: sender.clone(),
            receiver: receiver.clone(),
            polarity: Polarity::Output,
            message: message.clone(),
        }
    }

    pub fn input(sender: &Participant, receiver: &Participant, message: &Message) -> Self {
        ActionLabel::Comm {
            sender: sender.clone(),
            receiver: receiver.clone(),
            polarity: Polarity::Input,
            message: message.clone(),
        }
    }

    pub fn internal(sender: &Participant, receiver: &Participant, message: &Message) -> Self {
        ActionLabel::Comm {
            sender: sender.clone(),
            receiver: receiver.clone(),
            polarity: Polarity::Internal,
            message: message.clone(),
        }
    }

    pub fn is_tau(&self) -> bool {
        matches!(self, ActionLabel::Tau)
    }

    pub fn polarity(&self) -> Option<Polarity> {
        match self {
            ActionLabel::Comm { polarity, .. } => Some(*polarity),
            ActionLabel::Tau => None,
        }
    }

    pub fn is_output(&self) -> bool {
        self.polarity() == Some(Polarity::Output)
    }

    pub fn is_input(&self) -> bool {
        self.polarity() == Some(Polarity::Input)
    }

    pub fn is_internal(&self) -> bool {
        self.polarity() == Some(Polarity::Internal)
    }

    /// The acting participant: sender of `!` and `!?`, receiver of `?`.
    pub fn subject(&self) -> Option<&Participant> {
        match self {
            ActionLabel::Comm { sender, receiver, polarity, .. } => Some(match polarity {
                Polarity::Output | Polarity::Internal => sender,
                Polarity::Input => receiver,
            }),
            ActionLabel::Tau => None,
        }
    }

    /// The counterpart: receiver of `!` and `!?`, sender of `?`.
    pub fn object(&self) -> Option<&Participant> {
        match self {
            ActionLabel::Comm { sender, receiver, polarity, .. } => Some(match polarity {
                Polarity::Output | Polarity::Internal => receiver,
                Polarity::Input => sender,
            }),
            ActionLabel::Tau => None,
        }
    }

    /// Subject and object together; both endpoints for `!?`.
    pub fn subject_object(&self) -> BTreeSet<Participant> {
        let mut s = BTreeSet::new();
        if let Some(p) = self.subject() {
            s.insert(p.clone());
        }
        if let Some(p) = self.object() {
            s.insert(p.clone());
        }
        s
    }

    /// Swaps `!` and `?`; `!?` is self-dual. Must not be called on `Tau`.
    pub fn dual(&self) -> ActionLabel {
        match self {
            ActionLabel::Comm { sender, receiver, polarity, message } => ActionLabel::Comm {
                sender: sender.clone(),
                receiver: receiver.clone(),
                polarity: match polarity {
                    Polarity::Output => Polarity::Input,
                    Polarity::Input => Polarity::Output,
                    Polarity::Internal => Polarity::Internal,
                },
                message: message.clone(),
            },
            ActionLabel::Tau => panic!("dual(tau) is undefined"),
        }
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionLabel::Comm { sender, receiver, polarity, message } => {
                write!(f, "{sender}>{receiver}{polarity}{message}")
            }
            ActionLabel::Tau => f.write_str("tau"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("participant {0} cannot communicate with itself")]
pub struct SelfCommunication(pub Participant);

/// A labelled partial order of events. Events are `0..len`; the order is
/// stored as covering edges of the strict partial order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pomset {
    labels: Vec<ActionLabel>,
    covering: BTreeSet<(usize, usize)>,
}

impl Pomset {
    /// The empty pomset ε.
    pub fn empty() -> Self {
        Pomset { labels: Vec::new(), covering: BTreeSet::new() }
    }

    /// Builds a pomset from labels and any generating set of strict order
    /// pairs; the pairs are closed transitively and reduced to covering
    /// edges. Panics on cycles, which cannot arise from the grammar.
    pub fn from_parts(labels: Vec<ActionLabel>, pairs: BTreeSet<(usize, usize)>) -> Self {
        let n = labels.len();
        let closure = transitive_closure(n, &pairs);
        for e in 0..n {
            assert!(!closure.contains(&(e, e)), "cyclic event order");
        }
        let covering = hasse_reduction(&closure);
        Pomset { labels, covering }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, event: usize) -> &ActionLabel {
        &self.labels[event]
    }

    pub fn labels(&self) -> &[ActionLabel] {
        &self.labels
    }

    /// Covering edges of the strict order.
    pub fn covering(&self) -> &BTreeSet<(usize, usize)> {
        &self.covering
    }

    /// All strict order pairs (transitive closure of the covering edges).
    pub fn strict_order(&self) -> BTreeSet<(usize, usize)> {
        transitive_closure(self.labels.len(), &self.covering)
    }

    /// The set of labels occurring in the pomset.
    pub fn label_image(&self) -> BTreeSet<ActionLabel> {
        self.labels.iter().cloned().collect()
    }
}

fn transitive_closure(n: usize, pairs: &BTreeSet<(usize, usize)>) -> BTreeSet<(usize, usize)> {
    let mut reach = vec![vec![false; n]; n];
    for &(a, b) in pairs {
        reach[a][b] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    for i in 0..n {
        for j in 0..n {
            if reach[i][j] {
                out.insert((i, j));
            }
        }
    }
    out
}

fn hasse_reduction(closure: &BTreeSet<(usize, usize)>) -> BTreeSet<(usize, usize)> {
    closure
        .iter()
        .copied()
        .filter(|&(a, b)| {
            !closure
                .iter()
                .any(|&(x, y)| x == a && closure.contains(&(y, b)) && y != b && x != y)
        })
        .collect()
}

/// The two-event pomset of a single interaction: send before receive.
pub fn interaction_pomset(
    a: &Participant,
    m: &Message,
    b: &Participant,
) -> Result<Pomset, SelfCommunication> {
    if a == b {
        return Err(SelfCommunication(a.clone()));
    }
    Ok(Pomset::from_parts(
        vec![ActionLabel::output(a, b, m), ActionLabel::input(a, b, m)],
        BTreeSet::from([(0, 1)]),
    ))
}

/// Sequential composition: disjoint union plus, per participant, every
/// subject event of `r` before every subject event of `r2`.
pub fn seq_pomset(r: &Pomset, r2: &Pomset) -> Pomset {
    let offset = r.len();
    let mut labels = r.labels.clone();
    labels.extend(r2.labels.iter().cloned());
    let mut pairs: BTreeSet<(usize, usize)> = r.covering.clone();
    pairs.extend(r2.covering.iter().map(|&(a, b)| (a + offset, b + offset)));
    for (e1, l1) in r.labels.iter().enumerate() {
        for (e2, l2) in r2.labels.iter().enumerate() {
            if l1.subject() == l2.subject() && l1.subject().is_some() {
                pairs.insert((e1, e2 + offset));
            }
        }
    }
    Pomset::from_parts(labels, pairs)
}

/// Parallel composition: disjoint union, no cross dependencies.
pub fn par_pomset(r: &Pomset, r2: &Pomset) -> Pomset {
    let offset = r.len();
    let mut labels = r.labels.clone();
    labels.extend(r2.labels.iter().cloned());
    let mut pairs: BTreeSet<(usize, usize)> = r.covering.clone();
    pairs.extend(r2.covering.iter().map(|&(a, b)| (a + offset, b + offset)));
    Pomset::from_parts(labels, pairs)
}

/// True iff no input label occurs in both pomsets.
pub fn well_forked(r: &Pomset, r2: &Pomset) -> bool {
    r.label_image()
        .intersection(&r2.label_image())
        .all(|l| !l.is_input())
}

/// Restriction to the events whose subject is `a`.
pub fn project_pomset(r: &Pomset, a: &Participant) -> Pomset {
    let kept: Vec<usize> = (0..r.len())
        .filter(|&e| r.label(e).subject() == Some(a))
        .collect();
    let index: BTreeMap<usize, usize> =
        kept.iter().enumerate().map(|(new, &old)| (old, new)).collect();
    let labels = kept.iter().map(|&e| r.label(e).clone()).collect();
    let strict = r.strict_order();
    let pairs = strict
        .iter()
        .filter_map(|&(x, y)| Some((*index.get(&x)?, *index.get(&y)?)))
        .collect();
    Pomset::from_parts(labels, pairs)
}

/// Events with no strict predecessor.
pub fn min_events(r: &Pomset) -> BTreeSet<usize> {
    let targets: BTreeSet<usize> = r.covering.iter().map(|&(_, b)| b).collect();
    (0..r.len()).filter(|e| !targets.contains(e)).collect()
}

/// Why a semantics evaluation returned ⊥.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BottomReason {
    NotWellForked,
    NotWellBranched,
}

impl fmt::Display for BottomReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BottomReason::NotWellForked => "not-well-forked",
            BottomReason::NotWellBranched => "not-well-branched",
        })
    }
}

/// Diagnostic for ⊥: the reason plus the innermost failing subterm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BottomInfo {
    pub reason: BottomReason,
    pub subterm: GChor,
}

/// Result of evaluating a choreography.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SemanticsResult {
    Defined(Vec<Pomset>),
    Bottom(BottomInfo),
}

impl SemanticsResult {
    pub fn is_defined(&self) -> bool {
        matches!(self, SemanticsResult::Defined(_))
    }

    pub fn pomsets(&self) -> Option<&[Pomset]> {
        match self {
            SemanticsResult::Defined(rs) => Some(rs),
            SemanticsResult::Bottom(_) => None,
        }
    }
}

/// How a participant relates to the two arms of a choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Active,
    Passive,
    Neither,
}

/// Labels of the minimal `a`-events across each arm's pomsets.
pub fn div(
    g1: &GChor,
    g2: &GChor,
    a: &Participant,
) -> Result<(BTreeSet<ActionLabel>, BTreeSet<ActionLabel>), BottomInfo> {
    let s1 = expect_defined(semantics(g1))?;
    let s2 = expect_defined(semantics(g2))?;
    Ok((first_labels(&s1, a), first_labels(&s2, a)))
}

fn expect_defined(r: SemanticsResult) -> Result<Vec<Pomset>, BottomInfo> {
    match r {
        SemanticsResult::Defined(rs) => Ok(rs),
        SemanticsResult::Bottom(info) => Err(info),
    }
}

fn first_labels(pomsets: &[Pomset], a: &Participant) -> BTreeSet<ActionLabel> {
    let mut out = BTreeSet::new();
    for r in pomsets {
        let ra = project_pomset(r, a);
        for e in min_events(&ra) {
            out.insert(ra.label(e).clone());
        }
    }
    out
}

fn classify_from_labels(l1: &BTreeSet<ActionLabel>, l2: &BTreeSet<ActionLabel>) -> Role {
    let disjoint = l1.is_disjoint(l2);
    let nonempty = !l1.is_empty() && !l2.is_empty();
    let all_outputs = l1.iter().chain(l2.iter()).all(|l| l.is_output());
    let all_inputs = l1.iter().chain(l2.iter()).all(|l| l.is_input());
    if disjoint && nonempty && all_outputs {
        Role::Active
    } else if disjoint && nonempty && all_inputs {
        Role::Passive
    } else {
        Role::Neither
    }
}

/// Active/Passive/Neither for `a` in the choice `g1 + g2`.
pub fn classify_participant(
    g1: &GChor,
    g2: &GChor,
    a: &Participant,
) -> Result<Role, BottomInfo> {
    let (l1, l2) = div(g1, g2, a)?;
    Ok(classify_from_labels(&l1, &l2))
}

/// True iff the choice `g1 + g2` has at most one active participant and
/// every other participant is passive.
pub fn well_branched(g1: &GChor, g2: &GChor) -> Result<bool, BottomInfo> {
    let s1 = expect_defined(semantics(g1))?;
    let s2 = expect_defined(semantics(g2))?;
    Ok(well_branched_pomsets(&s1, &s2, g1, g2))
}

fn well_branched_pomsets(s1: &[Pomset], s2: &[Pomset], g1: &GChor, g2: &GChor) -> bool {
    let mut parts = participants(g1);
    parts.extend(participants(g2));
    let mut actives = 0usize;
    for p in &parts {
        match classify_from_labels(&first_labels(s1, p), &first_labels(s2, p)) {
            Role::Active => actives += 1,
            Role::Passive => {}
            Role::Neither => return false,
        }
    }
    actives <= 1
}

/// Evaluates a choreography to its pomset family, or ⊥ with the innermost
/// failing subterm.
pub fn semantics(g: &GChor) -> SemanticsResult {
    match g {
        GChor::Empty => SemanticsResult::Defined(vec![Pomset::empty()]),
        GChor::Interaction { from, to, msg } => {
            // Self-interactions are unrepresentable through the parser and
            // the checked constructor.
            let r = interaction_pomset(from, msg, to).expect("interaction with distinct ends");
            SemanticsResult::Defined(vec![r])
        }
        GChor::Seq(a, b) => {
            let (sa, sb) = match both(a, b) {
                Ok(pair) => pair,
                Err(bottom) => return SemanticsResult::Bottom(bottom),
            };
            let mut out = Vec::new();
            for ra in &sa {
                for rb in &sb {
                    out.push(seq_pomset(ra, rb));
                }
            }
            SemanticsResult::Defined(dedup_isomorphic(out))
        }
        GChor::Par(a, b) => {
            let (sa, sb) = match both(a, b) {
                Ok(pair) => pair,
                Err(bottom) => return SemanticsResult::Bottom(bottom),
            };
            for ra in &sa {
                for rb in &sb {
                    if !well_forked(ra, rb) {
                        return SemanticsResult::Bottom(BottomInfo {
                            reason: BottomReason::NotWellForked,
                            subterm: g.clone(),
                        });
                    }
                }
            }
            let mut out = Vec::new();
            for ra in &sa {
                for rb in &sb {
                    out.push(par_pomset(ra, rb));
                }
            }
            SemanticsResult::Defined(dedup_isomorphic(out))
        }
        GChor::Branch(a, b) => {
            let (sa, sb) = match both(a, b) {
                Ok(pair) => pair,
                Err(bottom) => return SemanticsResult::Bottom(bottom),
            };
            if !well_branched_pomsets(&sa, &sb, a, b) {
                return SemanticsResult::Bottom(BottomInfo {
                    reason: BottomReason::NotWellBranched,
                    subterm: g.clone(),
                });
            }
            let mut out = sa;
            out.extend(sb);
            SemanticsResult::Defined(dedup_isomorphic(out))
        }
    }
}

fn both(a: &GChor, b: &GChor) -> Result<(Vec<Pomset>, Vec<Pomset>), BottomInfo> {
    Ok((expect_defined(semantics(a))?, expect_defined(semantics(b))?))
}

fn dedup_isomorphic(pomsets: Vec<Pomset>) -> Vec<Pomset> {
    let mut out: Vec<Pomset> = Vec::new();
    for r in pomsets {
        if !out.iter().any(|kept| pomset_isomorphic(kept, &r)) {
            out.push(r);
        }
    }
    out
}

/// True iff a label- and order-preserving bijection exists.
pub fn pomset_isomorphic(r: &Pomset, r2: &Pomset) -> bool {
    if r.len() != r2.len() {
        return false;
    }
    let n = r.len();
    let o1 = r.strict_order();
    let o2 = r2.strict_order();
    if o1.len() != o2.len() {
        return false;
    }
    // Candidate targets must agree on the label and on degree signatures.
    let sig = |order: &BTreeSet<(usize, usize)>, e: usize| {
        let below = order.iter().filter(|&&(_, b)| b == e).count();
        let above = order.iter().filter(|&&(a, _)| a == e).count();
        (below, above)
    };
    let mut candidates: Vec<Vec<usize>> = Vec::with_capacity(n);
    for e in 0..n {
        let options: Vec<usize> = (0..n)
            .filter(|&f| r2.label(f) == r.label(e) && sig(&o2, f) == sig(&o1, e))
            .collect();
        if options.is_empty() {
            return false;
        }
        candidates.push(options);
    }
    let mut assignment: Vec<Option<usize>> = vec![None; n];
    let mut used = vec![false; n];
    backtrack(0, n, &candidates, &o1, &o2, &mut assignment, &mut used)
}

fn backtrack(
    e: usize,
    n: usize,
    candidates: &[Vec<usize>],
    o1: &BTreeSet<(usize, usize)>,
    o2: &BTreeSet<(usize, usize)>,
    assignment: &mut Vec<Option<usize>>,
    used: &mut Vec<bool>,
) -> bool {
    if e == n {
        return true;
    }
    for &f in &candidates[e] {
        if used[f] {
            continue;
        }
        // Order must be preserved in both directions against the events
        // already placed.
        let consistent = (0..e).all(|prev| {
            let g = assignment[prev].unwrap();
            o1.contains(&(prev, e)) == o2.contains(&(g, f))
                && o1.contains(&(e, prev)) == o2.contains(&(f, g))
        });
        if !consistent {
            continue;
        }
        assignment[e] = Some(f);
        used[f] = true;
        if backtrack(e + 1, n, candidates, o1, o2, assignment, used) {
            return true;
        }
        assignment[e] = None;
        used[f] = false;
    }
    false
}

/// DOT rendering: events as nodes, covering edges as arrows.
pub fn pomset_to_dot(r: &Pomset, name: &str) -> String {
    let mut out = format!("digraph {name} {{\n  rankdir=TB;\n  node [shape=ellipse];\n");
    for e in 0..r.len() {
        out.push_str(&format!("  e{e} [label=\"{}\"];\n", r.label(e)));
    }
    for (a, b) in r.covering() {
        out.push_str(&format!("  e{a} -> e{b};\n"));
    }
    out.push_str("}\n");
    out
}
