//! Command-line front end for the choreography checker: `check` parses a
//! file and prints the combined verdict, `export` writes DOT artifacts
//! for each pipeline stage, and `corpus` cross-validates the automata
//! analysis against the pomset oracle on randomly generated terms.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gcwf::analysis::{check_well_formed_with_cap, stripped_product, Verdict, DEFAULT_STATE_CAP};
use gcwf::gchor::{gchor_to_dot, parse_gchor, participants, render_gchor, GChor, Message, Participant};
use gcwf::gia::{composable, gia_isomorphic, gia_to_dot, tensor, Gia, GiaError};
use gcwf::pomsets::{pomset_to_dot, semantics};
use gcwf::projection::{language_equivalent, project, strip_tau};

/// Environment variable overriding the default executor state cap; an
/// explicit `--state-cap` flag still wins.
pub const STATE_CAP_ENV: &str = "GCWF_STATE_CAP";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Text,
    Json,
}

/// Pipeline stage whose artifacts `export` writes as DOT.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportStage {
    Gchor,
    Pomsets,
    Projections,
    Product,
}

/// Everything a run might need; each command reads the fields it uses.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    pub format: OutputFormat,
    pub stages: Vec<ExportStage>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub count: usize,
    pub max_depth: usize,
    pub max_participants: usize,
    pub max_messages: usize,
    pub state_cap: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inputs: Vec::new(),
            format: OutputFormat::Text,
            stages: Vec::new(),
            out_dir: PathBuf::from("."),
            seed: 1,
            count: 200,
            max_depth: 4,
            max_participants: 4,
            max_messages: 3,
            state_cap: DEFAULT_STATE_CAP,
        }
    }
}

/// Effective state cap: an explicit flag beats the environment variable,
/// which beats the built-in default.
pub fn resolve_state_cap(flag: Option<usize>) -> usize {
    resolve_state_cap_from(flag, std::env::var(STATE_CAP_ENV).ok().as_deref())
}

fn resolve_state_cap_from(flag: Option<usize>, env: Option<&str>) -> usize {
    flag.or_else(|| env.and_then(|s| s.trim().parse().ok()))
        .unwrap_or(DEFAULT_STATE_CAP)
}

fn read_term(path: &Path) -> Result<GChor> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_gchor(&text).map_err(|e| anyhow!("parsing {}: {e}", path.display()))
}

/// Checks one file. Returns the exit status (0 well-formed, 1 not) and
/// the report to print; parse and I/O trouble surfaces as `Err` and the
/// caller exits with status 2.
pub fn cmd_check(config: &RunConfig) -> Result<(u8, String)> {
    let path = config.inputs.first().context("no input file given")?;
    let g = read_term(path)?;
    let verdict = check_well_formed_with_cap(&g, config.state_cap);
    let report = match config.format {
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(&verdict)?;
            s.push('\n');
            s
        }
        OutputFormat::Text => render_text_verdict(path, &verdict),
    };
    Ok((u8::from(!verdict.well_formed), report))
}

fn yes_no(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "yes",
        Some(false) => "no",
        None => "unknown (state cap reached)",
    }
}

fn render_text_verdict(path: &Path, verdict: &Verdict) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{}: {}",
        path.display(),
        if verdict.well_formed { "well-formed" } else { "not well-formed" }
    );
    let _ = writeln!(
        out,
        "oracle: {}",
        if verdict.oracle_well_formed { "well-formed" } else { "not well-formed" }
    );
    let _ = writeln!(
        out,
        "buffered execution: deadlock-free={} orphan-free={}",
        yes_no(verdict.buffered.deadlock_free),
        yes_no(verdict.buffered.orphan_free)
    );
    if !verdict.witnesses.is_empty() {
        let _ = writeln!(out, "witnesses ({}):", verdict.witnesses.len());
        for w in &verdict.witnesses {
            let states: Vec<String> = w.states.iter().map(ToString::to_string).collect();
            let _ = writeln!(out, "  - {} at {} via {}", w.kind, states.join(", "), w.label);
            if !w.trail.is_empty() {
                let steps: Vec<String> = w
                    .trail
                    .iter()
                    .map(|(v, l, u)| format!("{v} --{l}--> {u}"))
                    .collect();
                let _ = writeln!(out, "    trail: {}", steps.join("; "));
            }
        }
    }
    if !verdict.per_subterm.is_empty() {
        let _ = writeln!(out, "composition checks ({}):", verdict.per_subterm.len());
        for (term, outcome) in &verdict.per_subterm {
            let status = if outcome.ok {
                "ok".to_string()
            } else {
                format!("{} witness(es)", outcome.witnesses)
            };
            let _ = writeln!(out, "  - {} on {term}: {status}", outcome.check);
        }
    }
    out
}

/// Writes DOT files for the requested stages into the output directory;
/// returns the written paths. Output is a pure function of the input
/// term, so repeated exports are byte-identical.
pub fn cmd_export(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let path = config.inputs.first().context("no input file given")?;
    let g = read_term(path)?;
    fs::create_dir_all(&config.out_dir)
        .with_context(|| format!("creating {}", config.out_dir.display()))?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("choreography")
        .to_string();
    let mut written = Vec::new();
    let mut emit = |name: String, contents: String| -> Result<()> {
        let target = config.out_dir.join(name);
        fs::write(&target, contents)
            .with_context(|| format!("writing {}", target.display()))?;
        written.push(target);
        Ok(())
    };
    for stage in &config.stages {
        match stage {
            ExportStage::Gchor => {
                emit(format!("{stem}.gchor.dot"), gchor_to_dot(&g))?;
            }
            ExportStage::Pomsets => {
                let sem = semantics(&g);
                let rs = sem
                    .pomsets()
                    .context("semantics is undefined; no pomsets to export")?;
                for (i, r) in rs.iter().enumerate() {
                    emit(format!("{stem}.pomset{i}.dot"), pomset_to_dot(r, &format!("pomset{i}")))?;
                }
            }
            ExportStage::Projections => {
                for a in participants(&g) {
                    let t = project(&g, &a);
                    emit(
                        format!("{stem}.proj.{a}.dot"),
                        gia_to_dot(&t.automaton, &format!("proj_{a}")),
                    )?;
                }
            }
            ExportStage::Product => {
                let product = stripped_product(&g)
                    .context("the term has no participants; nothing to compose")?;
                emit(format!("{stem}.product.dot"), gia_to_dot(&product, "product"))?;
            }
        }
    }
    Ok(written)
}

/// Aggregate counters of one corpus run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub instances: usize,
    pub well_formed: usize,
    pub agreement_failures: usize,
    pub language_failures: usize,
    pub executor_failures: usize,
    pub duplicate_arms: usize,
    pub duplicate_arm_failures: usize,
    pub triples_checked: usize,
    pub tensor_failures: usize,
}

impl CorpusStats {
    pub fn all_clean(&self) -> bool {
        self.agreement_failures == 0
            && self.language_failures == 0
            && self.executor_failures == 0
            && self.duplicate_arm_failures == 0
            && self.tensor_failures == 0
    }
}

/// Result of one corpus run: the printable report plus the counters and
/// minimized reproducers backing it.
#[derive(Debug, Clone)]
pub struct CorpusOutcome {
    pub report: String,
    pub stats: CorpusStats,
    pub failures: Vec<String>,
}

fn participant_pool(n: usize) -> Vec<Participant> {
    const NAMES: [&str; 8] = ["A", "B", "C", "D", "E", "F", "G", "H"];
    (0..n)
        .map(|i| {
            Participant::new(NAMES.get(i).map_or_else(|| format!("P{i}"), |s| s.to_string()))
        })
        .collect()
}

fn message_pool(n: usize) -> Vec<Message> {
    const NAMES: [&str; 6] = ["m", "n", "k", "x", "y", "z"];
    (0..n)
        .map(|i| Message::new(NAMES.get(i).map_or_else(|| format!("msg{i}"), |s| s.to_string())))
        .collect()
}

fn random_interaction(rng: &mut ChaCha8Rng, parts: &[Participant], msgs: &[Message]) -> GChor {
    let i = rng.gen_range(0..parts.len());
    let j = (i + 1 + rng.gen_range(0..parts.len() - 1)) % parts.len();
    let m = rng.gen_range(0..msgs.len());
    GChor::interaction(parts[i].clone(), parts[j].clone(), msgs[m].clone())
        .expect("endpoints are distinct by construction")
}

/// One random term within the bounds. Biased toward interactions and
/// shallow shapes so the exhaustive oracles stay cheap; occasionally
/// emits a choice with two identical arms, which can never be
/// well-formed once the arm communicates.
fn random_term(
    rng: &mut ChaCha8Rng,
    depth: usize,
    parts: &[Participant],
    msgs: &[Message],
) -> GChor {
    if depth == 0 {
        return if rng.gen_range(0..5) == 0 {
            GChor::Empty
        } else {
            random_interaction(rng, parts, msgs)
        };
    }
    match rng.gen_range(0..16) {
        0 => GChor::Empty,
        1..=6 => random_interaction(rng, parts, msgs),
        7..=9 => GChor::seq(
            random_term(rng, depth - 1, parts, msgs),
            random_term(rng, depth - 1, parts, msgs),
        ),
        10 | 11 => GChor::par(
            random_term(rng, depth - 1, parts, msgs),
            random_term(rng, depth - 1, parts, msgs),
        ),
        12..=14 => GChor::branch(
            random_term(rng, depth - 1, parts, msgs),
            random_term(rng, depth - 1, parts, msgs),
        ),
        _ => {
            let arm = random_term(rng, depth - 1, parts, msgs);
            GChor::branch(arm.clone(), arm)
        }
    }
}

fn communicates(g: &GChor) -> bool {
    match g {
        GChor::Empty => false,
        GChor::Interaction { .. } => true,
        GChor::Seq(a, b) | GChor::Par(a, b) | GChor::Branch(a, b) => {
            communicates(a) || communicates(b)
        }
    }
}

/// True when some choice subterm has syntactically identical arms that
/// actually communicate; such a choice leaves its decider without a way
/// to signal which arm was taken, so the term is never well-formed.
pub fn contains_duplicate_communicating_branch(g: &GChor) -> bool {
    match g {
        GChor::Empty | GChor::Interaction { .. } => false,
        GChor::Branch(a, b) => {
            (a == b && communicates(a))
                || contains_duplicate_communicating_branch(a)
                || contains_duplicate_communicating_branch(b)
        }
        GChor::Seq(a, b) | GChor::Par(a, b) => {
            contains_duplicate_communicating_branch(a)
                || contains_duplicate_communicating_branch(b)
        }
    }
}

/// Greedy structural minimization: repeatedly replaces the term with the
/// first strictly smaller variant that still fails the predicate.
pub fn shrink_failing(g: &GChor, fails: &dyn Fn(&GChor) -> bool) -> GChor {
    let mut current = g.clone();
    'outer: loop {
        for candidate in shrink_candidates(&current) {
            if fails(&candidate) {
                current = candidate;
                continue 'outer;
            }
        }
        return current;
    }
}

fn rebuild(shape: &GChor, a: GChor, b: GChor) -> GChor {
    match shape {
        GChor::Seq(..) => GChor::seq(a, b),
        GChor::Par(..) => GChor::par(a, b),
        GChor::Branch(..) => GChor::branch(a, b),
        _ => unreachable!("rebuild is only called on binary nodes"),
    }
}

/// Strictly smaller variants: each child, the node with one child
/// replaced by that child's own variants, and the empty term for a lone
/// interaction.
fn shrink_candidates(g: &GChor) -> Vec<GChor> {
    match g {
        GChor::Empty => Vec::new(),
        GChor::Interaction { .. } => vec![GChor::Empty],
        GChor::Seq(a, b) | GChor::Par(a, b) | GChor::Branch(a, b) => {
            let mut out = vec![(**a).clone(), (**b).clone()];
            for ca in shrink_candidates(a) {
                out.push(rebuild(g, ca, (**b).clone()));
            }
            for cb in shrink_candidates(b) {
                out.push(rebuild(g, (**a).clone(), cb));
            }
            out
        }
    }
}

fn triples(n: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                out.push((i, j, k));
            }
        }
    }
    out
}

fn tensor_laws_hold(a: &Gia, b: &Gia, c: &Gia) -> Result<bool, GiaError> {
    let ab = tensor(a, b)?;
    let ba = tensor(b, a)?;
    if !gia_isomorphic(&ab, &ba) {
        return Ok(false);
    }
    let left = tensor(&ab, c)?;
    let right = tensor(a, &tensor(b, c)?)?;
    Ok(gia_isomorphic(&left, &right))
}

/// Generates `count` seeded random terms and cross-checks every analysis
/// against its independent counterpart. The report is a pure function of
/// the configuration, so identical seeds give byte-identical reports.
pub fn run_corpus(config: &RunConfig) -> CorpusOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut stats = CorpusStats::default();
    let mut failures: Vec<String> = Vec::new();
    let cap = config.state_cap;
    for index in 0..config.count {
        let n_parts = rng.gen_range(2..=config.max_participants.max(2));
        let n_msgs = rng.gen_range(1..=config.max_messages.max(1));
        let parts = participant_pool(n_parts);
        let msgs = message_pool(n_msgs);
        let depth = rng.gen_range(0..=config.max_depth);
        let g = random_term(&mut rng, depth, &parts, &msgs);
        stats.instances += 1;
        if std::env::var_os("GCWF_CORPUS_TRACE").is_some() {
            eprintln!("instance {index}: {}", render_gchor(&g));
        }

        let verdict = check_well_formed_with_cap(&g, cap);
        let defined = verdict.oracle_well_formed;
        if verdict.well_formed {
            stats.well_formed += 1;
        }

        if verdict.well_formed != defined {
            stats.agreement_failures += 1;
            let minimal = shrink_failing(&g, &|h| {
                let v = check_well_formed_with_cap(h, cap);
                v.well_formed != v.oracle_well_formed
            });
            failures.push(format!(
                "instance {index}: analysis disagrees with the semantics oracle on: {}",
                render_gchor(&minimal)
            ));
        }

        let lang_broken = |h: &GChor| {
            participants(h).iter().any(|a| {
                let t = project(h, a);
                !language_equivalent(&t.automaton, &strip_tau(&t.automaton))
            })
        };
        if lang_broken(&g) {
            stats.language_failures += 1;
            let minimal = shrink_failing(&g, &lang_broken);
            failures.push(format!(
                "instance {index}: a projection changes language when stripped: {}",
                render_gchor(&minimal)
            ));
        }

        if verdict.well_formed
            && (verdict.buffered.deadlock_free != Some(true)
                || verdict.buffered.orphan_free != Some(true))
        {
            stats.executor_failures += 1;
            failures.push(format!(
                "instance {index}: well-formed term misbehaves under buffered execution: {}",
                render_gchor(&g)
            ));
        }

        if contains_duplicate_communicating_branch(&g) {
            stats.duplicate_arms += 1;
            if verdict.well_formed || defined {
                stats.duplicate_arm_failures += 1;
                failures.push(format!(
                    "instance {index}: duplicated branch arm slipped through: {}",
                    render_gchor(&g)
                ));
            }
        }

        let stripped = gcwf::analysis::stripped_projections(&g);
        let views: Vec<&Gia> = stripped.values().collect();
        for (i, j, k) in triples(views.len()) {
            let (a, b, c) = (views[i], views[j], views[k]);
            if !(composable(a, b) && composable(b, c) && composable(a, c)) {
                continue;
            }
            stats.triples_checked += 1;
            match tensor_laws_hold(a, b, c) {
                Ok(true) => {}
                Ok(false) => {
                    stats.tensor_failures += 1;
                    failures.push(format!(
                        "instance {index}: product law violated among projections of: {}",
                        render_gchor(&g)
                    ));
                }
                Err(e) => {
                    stats.tensor_failures += 1;
                    failures.push(format!(
                        "instance {index}: composable projections failed to compose ({e}): {}",
                        render_gchor(&g)
                    ));
                }
            }
        }
    }
    let report = render_corpus_report(config, &stats, &failures);
    CorpusOutcome { report, stats, failures }
}

fn render_corpus_report(config: &RunConfig, stats: &CorpusStats, failures: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "corpus seed={} count={}", config.seed, config.count);
    let _ = writeln!(
        out,
        "bounds: max-depth={} max-participants={} max-messages={} state-cap={}",
        config.max_depth, config.max_participants, config.max_messages, config.state_cap
    );
    let _ = writeln!(out, "instances: {}", stats.instances);
    let _ = writeln!(
        out,
        "well-formed: {} not-well-formed: {}",
        stats.well_formed,
        stats.instances - stats.well_formed
    );
    let _ = writeln!(out, "oracle-agreement failures: {}", stats.agreement_failures);
    let _ = writeln!(out, "projection-language failures: {}", stats.language_failures);
    let _ = writeln!(out, "executor-soundness failures: {}", stats.executor_failures);
    let _ = writeln!(
        out,
        "duplicate-arm terms: {} (escaped detection: {})",
        stats.duplicate_arms, stats.duplicate_arm_failures
    );
    let _ = writeln!(
        out,
        "product triples checked: {} law failures: {}",
        stats.triples_checked, stats.tensor_failures
    );
    if !failures.is_empty() {
        let _ = writeln!(out, "failures:");
        for f in failures {
            let _ = writeln!(out, "  - {f}");
        }
    }
    let _ = writeln!(out, "verdict: {}", if stats.all_clean() { "PASS" } else { "FAIL" });
    out
}

/// Runs the corpus and maps it to an exit status: 0 when every
/// cross-check passed, 1 otherwise.
pub fn cmd_corpus(config: &RunConfig) -> (u8, String) {
    let outcome = run_corpus(config);
    (u8::from(!outcome.stats.all_clean()), outcome.report)
}
