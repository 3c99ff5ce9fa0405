//! Randomized soundness check of the refinement engine: random class tables,
//! random walks of applicable steps, and the type checker as the oracle on
//! every completed method.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lattice::SecurityLattice;
use crate::pretty;
use crate::refiner::{Fault, Refinement, RefinementStep, RuleKind, Session, SessionOptions};
use crate::syntax::{
    ClassDecl, ClassName, ClassTable, FieldDecl, HoleSpec, MethodDef, MethodHeader, Modifier, Param, SifoType,
    TypingContext, BOOLEAN, INT, STRING, VOID,
};
use crate::typechecker::{field_arrow, raise_type};

#[derive(Debug, Clone)]
pub struct FuzzConfig {
    pub seed: u64,
    /// Number of completed sessions to check.
    pub iterations: usize,
    /// Step budget per session; walks that exceed it are abandoned.
    pub max_depth: usize,
    pub fault: Option<Fault>,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            seed: 1,
            iterations: 1000,
            max_depth: 60,
            fault: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FuzzFailure {
    pub attempt: usize,
    pub lattice: &'static str,
    pub program: String,
    pub class: String,
    pub method: String,
    pub allow_declassify: bool,
    /// Minimized step log that still reproduces the failure.
    pub log: Vec<RefinementStep>,
    pub error: String,
}

impl fmt::Display for FuzzFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "failure in attempt {} ({} lattice): {}", self.attempt, self.lattice, self.error)?;
        writeln!(f, "program:\n{}", self.program.trim_end())?;
        writeln!(f, "method {}.{}", self.class, self.method)?;
        if self.allow_declassify {
            writeln!(f, "option allow-declassify")?;
        }
        for step in &self.log {
            writeln!(f, "{step}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct FuzzReport {
    pub seed: u64,
    pub attempts: usize,
    pub completed: usize,
    pub abandoned: usize,
    pub steps: usize,
    pub failures: Vec<FuzzFailure>,
}

impl FuzzReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for FuzzReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "seed {}: {} completed sessions checked ({} attempts, {} abandoned at the depth bound, {} steps), {} failures",
            self.seed,
            self.completed,
            self.attempts,
            self.abandoned,
            self.steps,
            self.failures.len()
        )
    }
}

const CLASS_NAMES: [&str; 4] = ["A", "B", "C", "D"];
const BUILTINS: [&str; 4] = [INT, BOOLEAN, STRING, VOID];

fn random_type(rng: &mut ChaCha8Rng, lat: &SecurityLattice, classes: &[&str], modifiers: &[Modifier]) -> SifoType {
    let level = lat.levels().choose(rng).expect("lattice is non-empty").clone();
    let modifier = *modifiers.choose(rng).expect("modifier list is non-empty");
    let class = if rng.gen_bool(0.5) {
        *BUILTINS[..3].choose(rng).unwrap()
    } else {
        *classes.choose(rng).unwrap()
    };
    SifoType::new(level, modifier, class)
}

/// A random table of one to four classes with fields and bodiless methods.
pub fn random_class_table(rng: &mut ChaCha8Rng, lat: &SecurityLattice) -> (ClassTable, Vec<ClassDecl>) {
    loop {
        let n = rng.gen_range(1..=CLASS_NAMES.len());
        let names = &CLASS_NAMES[..n];
        let mut decls = Vec::new();
        for name in names {
            let mut d = ClassDecl::class(name);
            for i in 0..rng.gen_range(0..=3) {
                d.fields.push(FieldDecl {
                    ty: random_type(rng, lat, names, &[Modifier::Mut, Modifier::Imm]),
                    name: format!("f{}", i + 1),
                    span: Default::default(),
                });
            }
            for i in 0..rng.gen_range(1..=2) {
                let mut ret = random_type(rng, lat, names, &Modifier::ALL);
                if rng.gen_bool(0.3) {
                    ret = SifoType::new(ret.level, Modifier::Imm, VOID);
                }
                let params = (0..rng.gen_range(0..=2))
                    .map(|j| Param {
                        name: format!("p{}", j + 1),
                        ty: random_type(rng, lat, names, &Modifier::ALL),
                    })
                    .collect();
                d.methods.push(MethodDef {
                    header: MethodHeader {
                        receiver_level: lat.levels().choose(rng).unwrap().clone(),
                        receiver_modifier: *Modifier::ALL.choose(rng).unwrap(),
                        ret,
                        name: format!("m{}", i + 1),
                        params,
                        span: Default::default(),
                    },
                    body: None,
                });
            }
            decls.push(d);
        }
        if let Ok(ct) = ClassTable::build(lat, decls.clone()) {
            return (ct, decls);
        }
    }
}

fn is_structural(rule: RuleKind) -> bool {
    !matches!(
        rule,
        RuleKind::Variable | RuleKind::Subsumption | RuleKind::SecurityPromotion | RuleKind::ModifierPromotion
    )
}

type CostTable = HashMap<SifoType, usize>;

/// Estimated number of steps needed to close a hole, per typing context.
/// Computed as a least fixpoint over every type of the table, using the
/// rules that can end a branch: variables and literals, subsumption, both
/// promotions, constructors, and field accesses or assignments on
/// variables.
struct Closer {
    ct: Arc<ClassTable>,
    lat: Arc<SecurityLattice>,
    universe: Vec<SifoType>,
    tables: HashMap<TypingContext, Arc<CostTable>>,
}

impl Closer {
    fn new(ct: Arc<ClassTable>, lat: Arc<SecurityLattice>) -> Self {
        let mut universe = Vec::new();
        for c in ct.class_names() {
            for s in lat.levels() {
                for m in Modifier::ALL {
                    universe.push(SifoType::new(s.clone(), m, c.clone()));
                }
            }
        }
        Closer {
            ct,
            lat,
            universe,
            tables: HashMap::new(),
        }
    }

    fn estimate(&mut self, spec: &HoleSpec) -> Option<usize> {
        self.table(&spec.context).get(&spec.required).copied()
    }

    fn table(&mut self, ctx: &TypingContext) -> Arc<CostTable> {
        if let Some(t) = self.tables.get(ctx) {
            return t.clone();
        }
        let viewed = if ctx.has_mut() { Some(self.table(&ctx.mut_to_read())) } else { None };
        let mut cost: CostTable = HashMap::new();
        let bottom = self.lat.bottom().clone();
        loop {
            let mut changed = false;
            for t in &self.universe {
                let mut best: Option<usize> = None;
                let mut offer = |c: Option<usize>| {
                    if let Some(c) = c {
                        best = Some(best.map_or(c, |b| b.min(c)));
                    }
                };
                if ctx.iter().any(|(_, ty)| ty == t)
                    || (t.level == bottom && t.modifier == Modifier::Imm && BUILTINS.contains(&t.class.as_str()))
                {
                    offer(Some(1));
                }
                for m in Modifier::ALL {
                    for c in self.ct.subtypes(&t.class) {
                        if m.is_sub(t.modifier) && (m != t.modifier || c != &t.class) {
                            let sub = SifoType::new(t.level.clone(), m, c.clone());
                            offer(cost.get(&sub).map(|c| c + 1));
                        }
                    }
                }
                if t.modifier.is_promotable() {
                    for s in self.lat.below(&t.level) {
                        if s != t.level {
                            offer(cost.get(&t.with_level(s)).map(|c| c + 1));
                        }
                    }
                }
                if t.modifier == Modifier::Capsule {
                    let muts = t.with_modifier(Modifier::Mut);
                    let inner = match &viewed {
                        Some(v) => v.get(&muts).copied(),
                        None => cost.get(&muts).copied(),
                    };
                    offer(inner.map(|c| c + 1));
                }
                if t.modifier == Modifier::Mut && self.ct.is_constructible(&t.class) {
                    let mut total = Some(1);
                    for fd in self.ct.fields(&t.class) {
                        let field_cost = raise_type(&fd.ty, &t.level, &self.lat)
                            .ok()
                            .and_then(|ft| cost.get(&ft).copied());
                        total = total.zip(field_cost).map(|(a, b)| a + b);
                    }
                    offer(total);
                }
                for (_, recv) in ctx.iter() {
                    for fd in self.ct.fields(&recv.class) {
                        let Ok(level) = self.lat.lub(&recv.level, &fd.ty.level) else { continue };
                        if fd.ty.class == t.class
                            && level == t.level
                            && field_arrow(recv.modifier, fd.ty.modifier) == Some(t.modifier)
                        {
                            offer(Some(2));
                        }
                        if t.is_void() && recv.modifier == Modifier::Mut {
                            offer(cost.get(&fd.ty.with_level(level)).map(|c| c + 2));
                        }
                    }
                }
                if let Some(b) = best {
                    if cost.get(t).is_none_or(|old| b < *old) {
                        cost.insert(t.clone(), b);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let cost = Arc::new(cost);
        self.tables.insert(ctx.clone(), cost.clone());
        cost
    }

    /// Estimated remaining work after `step`, or `None` if it leaves a hole
    /// that cannot be closed.
    fn score(&mut self, session: &Session, step: &RefinementStep) -> Option<usize> {
        let next = session.apply(step).ok()?;
        let mut total = 0;
        for h in next.open_holes() {
            if session.hole(&h.id) != Some(h) {
                total += self.estimate(h)?;
            }
        }
        Some(total)
    }
}

struct Walk {
    session: Session,
    steps: usize,
}

fn random_walk(
    rng: &mut ChaCha8Rng,
    closer: &mut Closer,
    mut session: Session,
    max_depth: usize,
) -> Result<Walk, (Session, RefinementStep, String)> {
    let structural_phase = max_depth / 4;
    let mut fresh_names = 0usize;
    for depth in 0..max_depth {
        if session.is_complete() {
            return Ok(Walk { session, steps: depth });
        }
        let holes: Vec<HoleSpec> = session.open_holes().into_iter().cloned().collect();
        let remaining: Option<usize> = holes.iter().map(|h| closer.estimate(h)).sum();
        let Some(remaining) = remaining else {
            return Ok(Walk { session, steps: depth });
        };
        let structural = depth < structural_phase && holes.len() <= 4 && remaining + 8 < max_depth - depth;
        let spec = holes.choose(rng).expect("incomplete session has holes").clone();
        let mut candidates = session.applicable_rules(&spec.id).map_err(|e| {
            (
                session.clone(),
                RefinementStep::new(spec.id.as_str(), Refinement::ModifierPromotion),
                e.to_string(),
            )
        })?;
        if structural && rng.gen_bool(0.3) {
            fresh_names += 1;
            let pool: Vec<SifoType> = spec
                .context
                .iter()
                .map(|(_, t)| t.clone())
                .chain([spec.required.clone()])
                .collect();
            candidates.push(RefinementStep::new(
                spec.id.as_str(),
                Refinement::LocalDecl {
                    ty: pool.choose(rng).unwrap().clone(),
                    name: format!("v{fresh_names}"),
                },
            ));
        }
        // only steps that leave every new hole closable
        let scored: Vec<(usize, RefinementStep)> = candidates
            .into_iter()
            .filter_map(|c| closer.score(&session, &c).map(|cost| (cost, c)))
            .collect();
        if scored.is_empty() {
            return Ok(Walk { session, steps: depth });
        }
        let step = if structural {
            let weights: Vec<u32> = scored
                .iter()
                .map(|(_, c)| if is_structural(c.rule()) { 4 } else { 1 })
                .collect();
            let total: u32 = weights.iter().sum();
            let mut pick = rng.gen_range(0..total);
            let mut chosen = &scored[0].1;
            for ((_, c), w) in scored.iter().zip(&weights) {
                if pick < *w {
                    chosen = c;
                    break;
                }
                pick -= w;
            }
            chosen.clone()
        } else if rng.gen_bool(0.1) {
            scored.choose(rng).unwrap().1.clone()
        } else {
            let best = scored.iter().map(|(c, _)| *c).min().expect("nonempty");
            let ties: Vec<&RefinementStep> = scored.iter().filter(|(c, _)| *c == best).map(|(_, s)| s).collect();
            (*ties.choose(rng).expect("nonempty")).clone()
        };
        match session.apply(&step) {
            Ok(next) => session = next,
            Err(e) => return Err((session, step, format!("suggested step was rejected: {e}"))),
        }
    }
    let steps = session.log().len();
    Ok(Walk { session, steps })
}

fn failure_of(session: &Session) -> Option<String> {
    session.verify_soundness().err().map(|e| e.to_string())
}

/// Drops steps from `log` while the replayed session still completes and
/// still fails the oracle.
fn minimize(start: &Session, log: &[RefinementStep]) -> Vec<RefinementStep> {
    let replay = |steps: &[RefinementStep]| -> Option<Session> {
        let mut s = start.clone();
        for step in steps {
            s.apply_in_place(step).ok()?;
        }
        Some(s)
    };
    let mut current = log.to_vec();
    let mut i = current.len();
    while i > 0 {
        i -= 1;
        let mut candidate = current.clone();
        candidate.remove(i);
        if let Some(s) = replay(&candidate) {
            if s.is_complete() && failure_of(&s).is_some() {
                current = candidate;
            }
        }
    }
    current
}

pub fn run(config: &FuzzConfig) -> FuzzReport {
    let lattices: [(&'static str, Arc<SecurityLattice>); 2] = [
        ("two-level", Arc::new(SecurityLattice::two_level())),
        ("diamond", Arc::new(SecurityLattice::diamond())),
    ];
    let mut report = FuzzReport {
        seed: config.seed,
        ..Default::default()
    };
    let max_attempts = config.iterations.saturating_mul(50);
    while report.completed < config.iterations && report.attempts < max_attempts {
        let attempt = report.attempts;
        report.attempts += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(attempt as u64);
        let (lat_name, lat) = &lattices[attempt % 2];
        let (ct, decls) = random_class_table(&mut rng, lat);
        let ct = Arc::new(ct);
        let targets: Vec<(ClassName, String)> = decls
            .iter()
            .flat_map(|d| d.methods.iter().map(|m| (d.name.clone(), m.header.name.clone())))
            .collect();
        let (class, method) = targets.choose(&mut rng).expect("every class has a method").clone();
        let options = SessionOptions {
            allow_declassify: rng.gen_bool(0.3),
            fault: config.fault,
            ..Default::default()
        };
        let start = Session::start(ct.clone(), lat.clone(), class.as_str(), &method, options.clone())
            .expect("generated method exists");
        let fail = |log: &[RefinementStep], error: String| FuzzFailure {
            attempt,
            lattice: lat_name,
            program: pretty::program(&decls),
            class: class.to_string(),
            method: method.clone(),
            allow_declassify: options.allow_declassify,
            log: log.to_vec(),
            error,
        };
        let mut closer = Closer::new(ct.clone(), lat.clone());
        match random_walk(&mut rng, &mut closer, start.clone(), config.max_depth) {
            Ok(walk) => {
                report.steps += walk.steps;
                if !walk.session.is_complete() {
                    report.abandoned += 1;
                    continue;
                }
                report.completed += 1;
                if let Some(error) = failure_of(&walk.session) {
                    let log = minimize(&start, walk.session.log());
                    report.failures.push(fail(&log, error));
                }
            }
            Err((session, step, error)) => {
                let mut log = session.log().to_vec();
                log.push(step);
                report.failures.push(fail(&log, error));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_are_valid_and_small() {
        let lat = SecurityLattice::diamond();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let (ct, decls) = random_class_table(&mut rng, &lat);
            assert!((1..=4).contains(&decls.len()));
            assert_eq!(ct.user_decls().count(), decls.len());
        }
    }

    #[test]
    fn zero_iterations_pass_trivially() {
        let r = run(&FuzzConfig {
            iterations: 0,
            ..Default::default()
        });
        assert!(r.passed());
        assert_eq!(r.completed, 0);
    }

    #[test]
    fn short_run_is_clean_and_deterministic() {
        let cfg = FuzzConfig {
            seed: 3,
            iterations: 40,
            ..Default::default()
        };
        let a = run(&cfg);
        assert!(a.passed(), "{}", a.failures[0]);
        assert_eq!(a.completed, 40);
        let b = run(&cfg);
        assert_eq!((a.attempts, a.steps), (b.attempts, b.steps));
    }
}
