//! Error-state detection over products of stripped projections, the
//! combined well-formedness verdict, and an exhaustive 1-buffer executor
//! used as an independent deadlock check.
//!
//! The analysis has three detectors:
//!
//! * unmatched shared outputs: a send is available but every future of the
//!   other side either never consumes it or provably blocks first,
//! * parallel errors: same-label diamonds in the product of a parallel
//!   composition (two indistinguishable concurrent copies of an action),
//! * branching errors: choices that some participant cannot attribute to
//!   the deciding participant.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::ser::{SerializeStruct, Serializer};
use serde::Serialize;

use crate::gchor::{participants, render_gchor, subterms, GChor, Message, Participant};
use crate::gia::{
    language, shared_interfaces, tensor, ActionWord, Gia, SharedInterfaces, StateId, Transition,
};
use crate::pomsets::{semantics, ActionLabel, Polarity};
use crate::projection::{project, strip_tau};

/// Default bound on the number of distinct system states the buffered
/// executor explores before reporting an inconclusive result.
pub const DEFAULT_STATE_CAP: usize = 1 << 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum WitnessKind {
    UnmatchedOutput,
    Parallel,
    Branching,
}

impl WitnessKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            WitnessKind::UnmatchedOutput => "unmatched-output",
            WitnessKind::Parallel => "parallel",
            WitnessKind::Branching => "branching",
        }
    }
}

impl fmt::Display for WitnessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A concrete reason a choreography is not well-formed: the offending
/// product state(s), the implicated action, and a replayable path from the
/// product's initial state to the first offending state.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ErrorWitness {
    pub kind: WitnessKind,
    pub states: Vec<StateId>,
    pub label: ActionLabel,
    pub trail: Vec<Transition>,
}

impl Serialize for ErrorWitness {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("ErrorWitness", 4)?;
        s.serialize_field("kind", self.kind.as_str())?;
        let states: Vec<String> = self.states.iter().map(|v| v.to_string()).collect();
        s.serialize_field("states", &states)?;
        s.serialize_field("label", &self.label.to_string())?;
        let trail: Vec<String> = self
            .trail
            .iter()
            .map(|(v, l, u)| format!("{v} --{l}--> {u}"))
            .collect();
        s.serialize_field("trail", &trail)?;
        s.end()
    }
}

/// Outcome of one parallel or branching subterm check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubtermOutcome {
    pub check: String,
    pub witnesses: usize,
    pub ok: bool,
}

/// Executor verdict embedded in the overall verdict; `None` means the
/// exploration hit its state cap without finding a counterexample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BufferedVerdict {
    pub deadlock_free: Option<bool>,
    pub orphan_free: Option<bool>,
}

/// The combined well-formedness verdict. `well_formed` comes from the
/// automata analysis, `oracle_well_formed` from the pomset semantics; the
/// two must agree (their agreement is a tested theorem, not enforced
/// here).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub well_formed: bool,
    pub oracle_well_formed: bool,
    pub witnesses: Vec<ErrorWitness>,
    pub per_subterm: BTreeMap<String, SubtermOutcome>,
    pub buffered: BufferedVerdict,
}

/// Swaps `!` and `?`; `!?` is self-dual.
pub fn dual(label: &ActionLabel) -> ActionLabel {
    assert!(!label.is_tau(), "tau has no dual");
    label.dual()
}

/// The labels of `trail` with subject `a` and object `b`, in order.
pub fn channel_word(trail: &[Transition], a: &Participant, b: &Participant) -> ActionWord {
    trail
        .iter()
        .map(|(_, l, _)| l)
        .filter(|l| l.subject() == Some(a) && l.object() == Some(b))
        .cloned()
        .collect()
}

/// Drops the final label iff it is an output.
pub fn ro(word: &[ActionLabel]) -> ActionWord {
    match word.last() {
        Some(last) if last.is_output() => word[..word.len() - 1].to_vec(),
        _ => word.to_vec(),
    }
}

/// All prefixes of `word`, from the empty word to the word itself.
pub fn prefixes(word: &[ActionLabel]) -> BTreeSet<ActionWord> {
    (0..=word.len()).map(|n| word[..n].to_vec()).collect()
}

/// Per-sender words toward one fixed receiver, which is all the matching
/// procedure needs of a trail. One entry per maximal trail out of `at`,
/// but deduplicated: many trails induce the same words, and memoizing the
/// sets per state keeps the walk linear in the (acyclic) automaton
/// instead of enumerating every trail.
fn suffix_trail_maps(
    g: &Gia,
    at: &StateId,
    receiver: &Participant,
    memo: &mut BTreeMap<StateId, BTreeSet<BTreeMap<Participant, ActionWord>>>,
) -> BTreeSet<BTreeMap<Participant, ActionWord>> {
    if let Some(cached) = memo.get(at) {
        return cached.clone();
    }
    let mut result = BTreeSet::new();
    let steps: Vec<Transition> = g.outgoing(at).cloned().collect();
    if steps.is_empty() {
        result.insert(BTreeMap::new());
    }
    for (_, l, t) in &steps {
        for mut map in suffix_trail_maps(g, t, receiver, memo) {
            prepend_word(&mut map, l, receiver);
            result.insert(map);
        }
    }
    memo.insert(at.clone(), result.clone());
    result
}

/// Front-extends the per-sender word with `label` when it targets the
/// receiver; suffix maps are assembled back to front.
fn prepend_word(
    map: &mut BTreeMap<Participant, ActionWord>,
    label: &ActionLabel,
    receiver: &Participant,
) {
    if label.object() == Some(receiver) {
        if let Some(subject) = label.subject() {
            map.entry(subject.clone()).or_default().insert(0, label.clone());
        }
    }
}

/// The senders' traffic toward `receiver` along each maximal trail that
/// leaves `from` by an edge labelled `first_label`.
fn sender_trail_maps(
    g: &Gia,
    from: &StateId,
    first_label: &ActionLabel,
    receiver: &Participant,
    memo: &mut BTreeMap<StateId, BTreeSet<BTreeMap<Participant, ActionWord>>>,
) -> BTreeSet<BTreeMap<Participant, ActionWord>> {
    let starts: Vec<Transition> = g
        .outgoing(from)
        .filter(|(_, l, _)| l == first_label)
        .cloned()
        .collect();
    let mut results = BTreeSet::new();
    for (_, l, t) in &starts {
        for mut map in suffix_trail_maps(g, t, receiver, memo) {
            prepend_word(&mut map, l, receiver);
            results.insert(map);
        }
    }
    results
}

/// The consumer-side context accumulated along one trail prefix: the
/// receiver's per-peer conversation words, the peers whose conversations
/// must be checked against the sender trail, and whether the receiver
/// already acted on the sender's own channel.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord)]
struct ConsumerContext {
    words: BTreeMap<Participant, ActionWord>,
    cross_peers: BTreeSet<Participant>,
    same_channel: bool,
}

impl ConsumerContext {
    /// True when some cross conversation can no longer match a prefix of
    /// what the sender trail offers, now or ever: the word only grows,
    /// and any extension keeps the current word as its own prefix, so
    /// once both the word and its output-trimmed form fall outside the
    /// offered prefixes every future consumption point stays blocked.
    fn hopeless(&self, sender_words: &BTreeMap<Participant, ActionWord>) -> bool {
        self.cross_peers.iter().any(|c| {
            let got = self.words.get(c).map(|w| w.as_slice()).unwrap_or(&[]);
            let offered = sender_words.get(c).map(|w| w.as_slice()).unwrap_or(&[]);
            let offered_dual: ActionWord = offered.iter().map(dual).collect();
            !is_prefix(&ro(got), &offered_dual) && !is_prefix(got, &offered_dual)
        })
    }
}

/// True iff `shorter` is a prefix of `longer`.
fn is_prefix(shorter: &[ActionLabel], longer: &[ActionLabel]) -> bool {
    longer.get(..shorter.len()) == Some(shorter)
}

/// Searches the consumer side for one future that consumes `wanted`
/// without first blocking the channel. Returns true iff such a clean
/// consumption exists. The result is a pure function of the state and the
/// accumulated context, so `memo` both collapses interleaving diamonds
/// within one query and carries over to queries rooted elsewhere.
fn clean_consume_exists(
    g2: &Gia,
    at: &StateId,
    wanted: &ActionLabel,
    sender: &Participant,
    receiver: &Participant,
    shared: &BTreeSet<ActionLabel>,
    sender_words: &BTreeMap<Participant, ActionWord>,
    ctx: &ConsumerContext,
    memo: &mut BTreeMap<(StateId, ConsumerContext), bool>,
) -> bool {
    // Acting on the sender's own channel blocks every later consumption
    // point, as does a cross conversation that deviated for good.
    if ctx.same_channel || ctx.hopeless(sender_words) {
        return false;
    }
    let key = (at.clone(), ctx.clone());
    if let Some(&cached) = memo.get(&key) {
        return cached;
    }
    let mut found = false;
    for (_, l, t) in g2.outgoing(at) {
        if l == wanted {
            // First consumption point on this future: it succeeds unless
            // an earlier shared action of the receiver blocks it by a
            // cross-channel conversation inconsistent with what the
            // sender trail provides (the same-channel case was pruned).
            let blocked = ctx.cross_peers.iter().any(|c| {
                let got = ro(ctx.words.get(c).map(|w| w.as_slice()).unwrap_or(&[]));
                let offered = sender_words.get(c).map(|w| w.as_slice()).unwrap_or(&[]);
                let offered_dual: ActionWord = offered.iter().map(dual).collect();
                !prefixes(&offered_dual).contains(&got)
            });
            if !blocked {
                found = true;
                break;
            }
            continue;
        }
        let mut next = ctx.clone();
        if l.subject() == Some(receiver) {
            if let Some(obj) = l.object().cloned() {
                next.words.entry(obj.clone()).or_default().push(l.clone());
                if shared.contains(l) {
                    if &obj == sender {
                        next.same_channel = true;
                    } else {
                        next.cross_peers.insert(obj);
                    }
                }
            }
        }
        if clean_consume_exists(
            g2,
            t,
            wanted,
            sender,
            receiver,
            shared,
            sender_words,
            &next,
            memo,
        ) {
            found = true;
            break;
        }
    }
    memo.insert(key, found);
    found
}

/// Caches shared by every product-state query of one direction of
/// `error_states`: suffix trail maps per receiver on the sender side, and
/// consumer search results per (send, sender trail words) pair on the
/// consumer side. Both are pure functions of their keys, so reuse across
/// product states is exact.
#[derive(Default)]
struct MatchCaches {
    suffixes: BTreeMap<Participant, BTreeMap<StateId, BTreeSet<BTreeMap<Participant, ActionWord>>>>,
    consumers: BTreeMap<
        (ActionLabel, BTreeMap<Participant, ActionWord>),
        BTreeMap<(StateId, ConsumerContext), bool>,
    >,
}

/// The first send label available at `v` in `g1` that the other side,
/// from `v2`, can never cleanly consume along some maximal sender future.
fn unmatched_label(
    g1: &Gia,
    g2: &Gia,
    v: &StateId,
    v2: &StateId,
    shared: &SharedInterfaces,
    caches: &mut MatchCaches,
) -> Option<ActionLabel> {
    let mut blocking: BTreeSet<ActionLabel> = shared.si.clone();
    blocking.extend(shared.so.iter().cloned());
    let sends: BTreeSet<ActionLabel> = g1
        .outgoing(v)
        .map(|(_, l, _)| l)
        .filter(|l| shared.so.contains(l))
        .cloned()
        .collect();
    for send in sends {
        let (sender, receiver) = match &send {
            ActionLabel::Comm { sender, receiver, .. } => (sender.clone(), receiver.clone()),
            ActionLabel::Tau => continue,
        };
        let wanted = dual(&send);
        let trail_maps = {
            let suffixes = caches.suffixes.entry(receiver.clone()).or_default();
            sender_trail_maps(g1, v, &send, &receiver, suffixes)
        };
        for sender_words in trail_maps {
            let memo = caches
                .consumers
                .entry((send.clone(), sender_words.clone()))
                .or_default();
            let clean = clean_consume_exists(
                g2,
                v2,
                &wanted,
                &sender,
                &receiver,
                &blocking,
                &sender_words,
                &ConsumerContext::default(),
                memo,
            );
            if !clean {
                return Some(send);
            }
        }
    }
    None
}

fn decompose_pair(state: &StateId) -> (StateId, StateId) {
    match state {
        StateId::Pair(a, b) => ((**a).clone(), (**b).clone()),
        _ => panic!("product states are pairs"),
    }
}

/// Breadth-first shortest-path tree from the initial state, computed once
/// per product so that trails to many witnesses cost one traversal total.
/// Deterministic because neighbors are visited in sorted order.
struct TrailMap {
    initial: StateId,
    parents: BTreeMap<StateId, Transition>,
}

impl TrailMap {
    fn new(product: &Gia) -> Self {
        let initial = product.initial().clone();
        let mut parents: BTreeMap<StateId, Transition> = BTreeMap::new();
        let mut queue = VecDeque::from([initial.clone()]);
        while let Some(v) = queue.pop_front() {
            for tr in product.outgoing(&v) {
                let (_, _, t) = tr;
                if t != &initial && !parents.contains_key(t) {
                    parents.insert(t.clone(), tr.clone());
                    queue.push_back(t.clone());
                }
            }
        }
        TrailMap { initial, parents }
    }

    /// Shortest transition path from the initial state to `target`.
    fn trail(&self, target: &StateId) -> Vec<Transition> {
        let mut trail = Vec::new();
        let mut at = target.clone();
        while at != self.initial {
            let tr = self
                .parents
                .get(&at)
                .expect("witness states are reachable in the product")
                .clone();
            at = tr.0.clone();
            trail.push(tr);
        }
        trail.reverse();
        trail
    }
}

/// Shortest transition path from the initial state to `target`;
/// deterministic because neighbors are visited in sorted order.
fn shortest_trail(product: &Gia, target: &StateId) -> Vec<Transition> {
    TrailMap::new(product).trail(target)
}

/// Returns a witness iff `v` (in `g1`) holds a shared send that `v2` (in
/// `g2`) can never cleanly consume. The trail is a path of the product
/// `g1 ⊗ g2` from its initial state to the pair, empty when the pair is
/// the initial state or unreachable.
pub fn unmatched_shared_output(
    g1: &Gia,
    g2: &Gia,
    v: &StateId,
    v2: &StateId,
) -> Option<ErrorWitness> {
    assert!(g1.states().contains(v), "state not in the first automaton");
    assert!(g2.states().contains(v2), "state not in the second automaton");
    let shared = shared_interfaces(g1, g2);
    let label = unmatched_label(g1, g2, v, v2, &shared, &mut MatchCaches::default())?;
    let product = tensor(g1, g2).expect("operands must be composable");
    let state = StateId::pair(v.clone(), v2.clone());
    let trail = if product.reachable().contains(&state) {
        shortest_trail(&product, &state)
    } else {
        Vec::new()
    };
    Some(ErrorWitness {
        kind: WitnessKind::UnmatchedOutput,
        states: vec![state],
        label,
        trail,
    })
}

/// All reachable product pairs where either side holds an unmatched
/// shared output by the other.
pub fn error_states(g1: &Gia, g2: &Gia) -> BTreeSet<ErrorWitness> {
    let product = tensor(g1, g2).expect("operands must be composable");
    // The shared interfaces are symmetric in the two operands; the caches
    // and the shortest-path tree are built once for the whole sweep.
    let shared = shared_interfaces(g1, g2);
    let trails = TrailMap::new(&product);
    let mut caches1 = MatchCaches::default();
    let mut caches2 = MatchCaches::default();
    let mut out = BTreeSet::new();
    for state in product.reachable() {
        let (a, b) = decompose_pair(&state);
        let mut labels = Vec::new();
        if let Some(l) = unmatched_label(g1, g2, &a, &b, &shared, &mut caches1) {
            labels.push(l);
        }
        if let Some(l) = unmatched_label(g2, g1, &b, &a, &shared, &mut caches2) {
            labels.push(l);
        }
        for label in labels {
            out.insert(ErrorWitness {
                kind: WitnessKind::UnmatchedOutput,
                states: vec![state.clone()],
                label,
                trail: trails.trail(&state),
            });
        }
    }
    out
}

/// The stripped projection of `g` for each of its participants.
pub fn stripped_projections(g: &GChor) -> BTreeMap<Participant, Gia> {
    participants(g)
        .into_iter()
        .map(|p| {
            let t = project(g, &p);
            (p.clone(), strip_tau(&t.automaton))
        })
        .collect()
}

fn fold_tensor(factors: &[&Gia]) -> Option<Gia> {
    let mut iter = factors.iter();
    let first = (*iter.next()?).clone();
    Some(iter.fold(first, |acc, f| {
        tensor(&acc, f).expect("projection groups are disjoint")
    }))
}

/// The product of all stripped projections of `g`, `None` when `g` has no
/// participants.
pub fn stripped_product(g: &GChor) -> Option<Gia> {
    let factors = stripped_projections(g);
    let refs: Vec<&Gia> = factors.values().collect();
    fold_tensor(&refs)
}

/// Same-label diamonds in the product of a parallel composition: from one
/// state, two distinct intermediate states reach a common state by the
/// same visible action twice.
pub fn parallel_error_states(g: &GChor) -> BTreeSet<ErrorWitness> {
    assert!(matches!(g, GChor::Par(_, _)), "expected a parallel composition");
    let product = match stripped_product(g) {
        Some(p) => p,
        None => return BTreeSet::new(),
    };
    let trails = TrailMap::new(&product);
    let mut out = BTreeSet::new();
    for v in product.reachable() {
        let mut by_label: BTreeMap<&ActionLabel, Vec<&StateId>> = BTreeMap::new();
        for (_, l, u) in product.outgoing(&v) {
            if !l.is_tau() {
                by_label.entry(l).or_default().push(u);
            }
        }
        for (label, mids) in by_label {
            let found = mids.iter().enumerate().any(|(i, u)| {
                mids.iter().skip(i + 1).any(|u2| {
                    u != u2
                        && product.outgoing(u).any(|(_, l2, w)| {
                            l2 == label
                                && product
                                    .outgoing(u2)
                                    .any(|(_, l3, w2)| l3 == label && w2 == w)
                        })
                })
            });
            if found {
                out.insert(ErrorWitness {
                    kind: WitnessKind::Parallel,
                    states: vec![v.clone()],
                    label: label.clone(),
                    trail: trails.trail(&v),
                });
            }
        }
    }
    out
}

fn flatten_state(state: &StateId, arity: usize) -> Vec<StateId> {
    if arity == 1 {
        return vec![state.clone()];
    }
    match state {
        StateId::Pair(left, right) => {
            let mut out = flatten_state(left, arity - 1);
            out.push((**right).clone());
            out
        }
        _ => panic!("product states mirror the fold shape"),
    }
}

/// Subject-object participants across every letter of every word.
fn sobj_of_language(words: &BTreeSet<ActionWord>) -> BTreeSet<Participant> {
    words
        .iter()
        .flat_map(|w| w.iter())
        .flat_map(|l| l.subject_object())
        .collect()
}

/// The per-factor originating interaction leaves of a fused product
/// transition: which syntax leaves moved the sender's and the receiver's
/// automata.
fn fused_origins(
    factors: &[(&Participant, &Gia)],
    tr: &Transition,
) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let (v, l, u) = tr;
    let (sender, receiver, message) = match l {
        ActionLabel::Comm { sender, receiver, polarity: Polarity::Internal, message } => {
            (sender, receiver, message)
        }
        _ => panic!("product transitions of a full fold are internal"),
    };
    let vs = flatten_state(v, factors.len());
    let us = flatten_state(u, factors.len());
    let mut sender_origins = BTreeSet::new();
    let mut receiver_origins = BTreeSet::new();
    for (i, (p, f)) in factors.iter().enumerate() {
        if vs[i] == us[i] {
            continue;
        }
        let factor_label = if *p == sender {
            ActionLabel::output(sender, receiver, message)
        } else if *p == receiver {
            ActionLabel::input(sender, receiver, message)
        } else {
            panic!("only the endpoints of a fused action move");
        };
        let key = (vs[i].clone(), factor_label, us[i].clone());
        let origins = f.origin(&key).cloned().unwrap_or_default();
        if *p == sender {
            sender_origins = origins;
        } else {
            receiver_origins = origins;
        }
    }
    (sender_origins, receiver_origins)
}

fn interaction_count(g: &GChor) -> usize {
    match g {
        GChor::Empty => 0,
        GChor::Interaction { .. } => 1,
        GChor::Seq(a, b) | GChor::Par(a, b) | GChor::Branch(a, b) => {
            interaction_count(a) + interaction_count(b)
        }
    }
}

/// Choices that some participant cannot attribute to a deciding
/// participant, detected on the product of the stripped projections of a
/// branching composition.
///
/// A witness is produced when
/// - the whole product has a single transition (the two arms collapsed
///   into one behaviour, so the choice is vacuous),
/// - a state reachable only by silent moves offers two distinct
///   transitions with different senders or with the very same action,
/// - a state reachable only by silent moves offers an action whose
///   sender-side origins straddle both arms (the same occurrence serves
///   either arm, so taking it resolves nothing), or
/// - two distinct undecided states share an action that neither its
///   sender nor its receiver can tell apart by what they have observed.
pub fn branching_error_states(g: &GChor) -> BTreeSet<ErrorWitness> {
    let first_arm_leaves = match g {
        GChor::Branch(left, _) => interaction_count(left),
        _ => panic!("expected a branching composition"),
    };
    let factor_map = stripped_projections(g);
    let factors: Vec<(&Participant, &Gia)> = factor_map.iter().collect();
    let refs: Vec<&Gia> = factors.iter().map(|(_, f)| *f).collect();
    let product = match fold_tensor(&refs) {
        Some(p) => p,
        None => return BTreeSet::new(),
    };
    let trails = TrailMap::new(&product);
    let mut out = BTreeSet::new();
    let reachable: Vec<StateId> = product.reachable().into_iter().collect();
    // The whole product has exactly one transition: the choice collapsed,
    // so nobody can tell the two arms apart.
    if product.transitions().len() == 1 {
        let (_, l, _) = product.transitions().iter().next().unwrap();
        out.insert(ErrorWitness {
            kind: WitnessKind::Branching,
            states: vec![product.initial().clone()],
            label: l.clone(),
            trail: Vec::new(),
        });
    }
    let empty_word: ActionWord = Vec::new();
    let langs: BTreeMap<&StateId, BTreeSet<ActionWord>> = reachable
        .iter()
        .map(|v| (v, language(&product, product.initial(), v)))
        .collect();
    let tau_only: BTreeMap<&StateId, bool> = reachable
        .iter()
        .map(|v| (v, langs[v].len() == 1 && langs[v].contains(&empty_word)))
        .collect();
    // Still undecided (reachable by silent moves only), yet two distinct
    // transitions offer different senders or the very same action.
    for v in &reachable {
        if !tau_only[v] {
            continue;
        }
        let visible: Vec<&Transition> =
            product.outgoing(v).filter(|(_, l, _)| !l.is_tau()).collect();
        for (i, t1) in visible.iter().enumerate() {
            for t2 in visible.iter().skip(i + 1) {
                let (s1, s2) = (t1.1.subject(), t2.1.subject());
                if s1 != s2 || t1.1 == t2.1 {
                    out.insert(ErrorWitness {
                        kind: WitnessKind::Branching,
                        states: vec![v.clone()],
                        label: std::cmp::min(&t1.1, &t2.1).clone(),
                        trail: trails.trail(v),
                    });
                }
            }
        }
        // A first action whose sender-side origins straddle both arms
        // commits to nothing: the very same occurrence is on offer
        // whichever arm runs, so taking it leaves the choice unresolved.
        for tr in &visible {
            let (sender_origins, _) = fused_origins(&factors, tr);
            let spans = sender_origins.iter().any(|leaf| *leaf < first_arm_leaves)
                && sender_origins.iter().any(|leaf| *leaf >= first_arm_leaves);
            if spans {
                out.insert(ErrorWitness {
                    kind: WitnessKind::Branching,
                    states: vec![v.clone()],
                    label: tr.1.clone(),
                    trail: trails.trail(v),
                });
            }
        }
    }
    // Two distinct committed states offer the same action from different
    // arms of the choice while neither endpoint has learned which arm was
    // taken.
    let sobjs: BTreeMap<&StateId, BTreeSet<Participant>> =
        reachable.iter().map(|v| (v, sobj_of_language(&langs[v]))).collect();
    for (i, v) in reachable.iter().enumerate() {
        for v2 in reachable.iter().skip(i + 1) {
            if tau_only[v] && tau_only[v2] {
                continue;
            }
            let labels: BTreeSet<&ActionLabel> = product
                .outgoing(v)
                .map(|(_, l, _)| l)
                .filter(|l| !l.is_tau())
                .collect();
            for label in labels {
                let at_v2 = product
                    .outgoing(v2)
                    .any(|(_, l, _)| l == label);
                if !at_v2 {
                    continue;
                }
                let (sender, receiver) = match label {
                    ActionLabel::Comm { sender, receiver, .. } => (sender, receiver),
                    ActionLabel::Tau => continue,
                };
                let uninformed = |p: &Participant| !sobjs[v].contains(p) && !sobjs[v2].contains(p);
                if !uninformed(sender) && !uninformed(receiver) {
                    continue;
                }
                // The same action, but produced by different interaction
                // occurrences: the arms genuinely diverge here.
                let sigs = |state: &StateId| -> BTreeSet<(BTreeSet<usize>, BTreeSet<usize>)> {
                    product
                        .outgoing(state)
                        .filter(|(_, l, _)| l == label)
                        .map(|tr| fused_origins(&factors, tr))
                        .collect()
                };
                let sv = sigs(v);
                let sv2 = sigs(v2);
                let occurrence_distinct =
                    sv.iter().any(|s| !sv2.contains(s)) || sv2.iter().any(|s| !sv.contains(s));
                if occurrence_distinct {
                    out.insert(ErrorWitness {
                        kind: WitnessKind::Branching,
                        states: vec![v.clone(), v2.clone()],
                        label: label.clone(),
                        trail: trails.trail(v),
                    });
                }
            }
        }
    }
    out
}

/// Result of exhaustively executing the stripped projections over
/// one-slot buffers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecutorReport {
    pub deadlock_free: Option<bool>,
    pub orphan_free: Option<bool>,
    pub traces_explored: u64,
    pub complete: bool,
}

type SystemState = (Vec<StateId>, BTreeMap<(Participant, Participant), Message>);

struct Exploration<'a> {
    factors: Vec<&'a Gia>,
    memo: BTreeMap<SystemState, (bool, bool)>,
    visited: u64,
    cap: u64,
    capped: bool,
    found_deadlock: bool,
    found_orphan: bool,
}

impl<'a> Exploration<'a> {
    /// For every maximal run from `sys`: (all end clean, all end with
    /// empty buffers). Optimistic when the cap cuts exploration short;
    /// the caller downgrades unexplored optimism to "inconclusive".
    fn run(&mut self, sys: &SystemState) -> (bool, bool) {
        if let Some(&cached) = self.memo.get(sys) {
            return cached;
        }
        if self.visited >= self.cap {
            self.capped = true;
            return (true, true);
        }
        self.visited += 1;
        let moves = self.moves(sys);
        let result = if moves.is_empty() {
            let buffers_empty = sys.1.is_empty();
            let all_sinks = sys
                .0
                .iter()
                .enumerate()
                .all(|(i, v)| self.factors[i].is_sink(v));
            let clean = buffers_empty && all_sinks;
            if !clean {
                self.found_deadlock = true;
            }
            if !buffers_empty {
                self.found_orphan = true;
            }
            (clean, buffers_empty)
        } else {
            let mut clean = true;
            let mut orphan_ok = true;
            for next in moves {
                let (c, o) = self.run(&next);
                clean &= c;
                orphan_ok &= o;
            }
            (clean, orphan_ok)
        };
        self.memo.insert(sys.clone(), result);
        result
    }

    fn moves(&self, sys: &SystemState) -> Vec<SystemState> {
        let (positions, buffers) = sys;
        let mut out = Vec::new();
        for (i, v) in positions.iter().enumerate() {
            for (_, l, t) in self.factors[i].outgoing(v) {
                let mut next_buffers = buffers.clone();
                let enabled = match l {
                    ActionLabel::Tau => true,
                    ActionLabel::Comm { sender, receiver, polarity, message } => match polarity {
                        Polarity::Output => {
                            let key = (sender.clone(), receiver.clone());
                            if buffers.contains_key(&key) {
                                false
                            } else {
                                next_buffers.insert(key, message.clone());
                                true
                            }
                        }
                        Polarity::Input => {
                            let key = (sender.clone(), receiver.clone());
                            if buffers.get(&key) == Some(message) {
                                next_buffers.remove(&key);
                                true
                            } else {
                                false
                            }
                        }
                        // Singleton projections never carry fused actions.
                        Polarity::Internal => true,
                    },
                };
                if enabled {
                    let mut next_positions = positions.clone();
                    next_positions[i] = t.clone();
                    out.push((next_positions, next_buffers));
                }
            }
        }
        out
    }
}

/// Exhaustively executes the stripped projections of `g` connected by
/// one-slot buffers per ordered participant pair: a send needs an empty
/// buffer, a receive needs the matching message, τ is free. Reports
/// whether every maximal run ends with all automata in sinks and all
/// buffers drained.
pub fn explore_buffered_system(g: &GChor, state_cap: usize) -> ExecutorReport {
    let factor_map = stripped_projections(g);
    let factors: Vec<&Gia> = factor_map.values().collect();
    let start: SystemState = (
        factors.iter().map(|f| f.initial().clone()).collect(),
        BTreeMap::new(),
    );
    let mut exploration = Exploration {
        factors,
        memo: BTreeMap::new(),
        visited: 0,
        cap: state_cap as u64,
        capped: false,
        found_deadlock: false,
        found_orphan: false,
    };
    let (clean, orphan_ok) = exploration.run(&start);
    if exploration.capped {
        ExecutorReport {
            deadlock_free: if exploration.found_deadlock { Some(false) } else { None },
            orphan_free: if exploration.found_orphan { Some(false) } else { None },
            traces_explored: exploration.visited,
            complete: false,
        }
    } else {
        ExecutorReport {
            deadlock_free: Some(clean),
            orphan_free: Some(orphan_ok),
            traces_explored: exploration.visited,
            complete: true,
        }
    }
}

/// Runs the whole pipeline with the default executor cap.
pub fn check_well_formed(g: &GChor) -> Verdict {
    check_well_formed_with_cap(g, DEFAULT_STATE_CAP)
}

/// Projects onto every participant, strips, folds the product, and
/// collects unmatched-output witnesses per factor plus parallel and
/// branching witnesses per composition subterm.
pub fn check_well_formed_with_cap(g: &GChor, state_cap: usize) -> Verdict {
    let timing = std::env::var_os("GCWF_STAGE_TIMING").is_some();
    let stamp = |label: &str, start: std::time::Instant| {
        if timing {
            eprintln!("stage {label}: {:?}", start.elapsed());
        }
    };
    let t = std::time::Instant::now();
    let factor_map = stripped_projections(g);
    let factors: Vec<(&Participant, &Gia)> = factor_map.iter().collect();
    stamp("projections", t);
    let mut witnesses: BTreeSet<ErrorWitness> = BTreeSet::new();
    for i in 0..factors.len() {
        if factors.len() < 2 {
            break;
        }
        let t = std::time::Instant::now();
        let rest: Vec<&Gia> = factors
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, (_, f))| *f)
            .collect();
        let rest_product = fold_tensor(&rest).expect("at least one other factor");
        witnesses.extend(error_states(factors[i].1, &rest_product));
        if timing {
            eprintln!("stage error-states factor {i}: {:?}", t.elapsed());
        }
    }
    let mut per_subterm = BTreeMap::new();
    for sub in subterms(g) {
        match sub {
            GChor::Par(_, _) => {
                let t = std::time::Instant::now();
                let found = parallel_error_states(sub);
                stamp("parallel subterm", t);
                per_subterm.insert(
                    render_gchor(sub),
                    SubtermOutcome {
                        check: "parallel".to_string(),
                        witnesses: found.len(),
                        ok: found.is_empty(),
                    },
                );
                witnesses.extend(found);
            }
            GChor::Branch(_, _) => {
                let t = std::time::Instant::now();
                let found = branching_error_states(sub);
                stamp("branching subterm", t);
                per_subterm.insert(
                    render_gchor(sub),
                    SubtermOutcome {
                        check: "branching".to_string(),
                        witnesses: found.len(),
                        ok: found.is_empty(),
                    },
                );
                witnesses.extend(found);
            }
            _ => {}
        }
    }
    let t = std::time::Instant::now();
    let report = explore_buffered_system(g, state_cap);
    stamp("buffered execution", t);
    let t = std::time::Instant::now();
    let oracle_well_formed = semantics(g).is_defined();
    stamp("oracle", t);
    Verdict {
        well_formed: witnesses.is_empty(),
        oracle_well_formed,
        witnesses: witnesses.into_iter().collect(),
        per_subterm,
        buffered: BufferedVerdict {
            deadlock_free: report.deadlock_free,
            orphan_free: report.orphan_free,
        },
    }
}
