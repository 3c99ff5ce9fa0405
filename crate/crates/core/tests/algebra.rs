//! Order-theoretic and modifier laws, each checked against an oracle that
//! does not share code with the library.

mod common;

use std::collections::BTreeSet;

use common::{ctx, expr, load, ty};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sifo::diagnostics::TypeErrorCode;
use sifo::fuzz::random_class_table;
use sifo::lattice::{LatticeError, SecurityLattice, SecurityLevel};
use sifo::syntax::{Modifier, SifoType};
use sifo::typechecker::{field_arrow, meth_types, raise_type, Checker};

use Modifier::{Capsule, Imm, Mut, Read};

fn name(i: usize) -> String {
    format!("l{i}")
}

// ---------------------------------------------------------------------------
// lub laws over powerset sublattices

/// A family of subsets of {0,1,2} closed under union and containing the
/// empty set is a lattice of at most 8 levels whose lub is bitwise or.
fn union_closed(seeds: &[u8]) -> Vec<u8> {
    let mut family: BTreeSet<u8> = seeds.iter().map(|s| s & 7).collect();
    family.insert(0);
    loop {
        let extra: Vec<u8> = family
            .iter()
            .flat_map(|a| family.iter().map(move |b| a | b))
            .filter(|u| !family.contains(u))
            .collect();
        if extra.is_empty() {
            return family.into_iter().collect();
        }
        family.extend(extra);
    }
}

fn subset_lattice(family: &[u8]) -> SecurityLattice {
    let names: Vec<String> = family.iter().map(|&m| name(m as usize)).collect();
    let mut edges = Vec::new();
    for &a in family {
        for &b in family {
            if a != b && a & b == a {
                edges.push((name(a as usize), name(b as usize)));
            }
        }
    }
    SecurityLattice::build(names, edges).expect("union-closed families are lattices")
}

fn lvl(m: u8) -> SecurityLevel {
    SecurityLevel::new(name(m as usize))
}

proptest! {
    #[test]
    fn lub_laws_hold_exhaustively(seeds in proptest::collection::vec(0u8..8, 0..8)) {
        let family = union_closed(&seeds);
        prop_assert!(family.len() <= 8);
        let lat = subset_lattice(&family);
        prop_assert_eq!(lat.bottom(), &lvl(0));
        prop_assert_eq!(lat.top(), &lvl(family.iter().fold(0, |a, b| a | b)));
        for &a in &family {
            prop_assert_eq!(lat.lub(&lvl(a), &lvl(a)).unwrap(), lvl(a));
            prop_assert_eq!(lat.lub(&lvl(a), lat.bottom()).unwrap(), lvl(a));
            for &b in &family {
                let ab = lat.lub(&lvl(a), &lvl(b)).unwrap();
                prop_assert_eq!(&ab, &lvl(a | b));
                prop_assert_eq!(&ab, &lat.lub(&lvl(b), &lvl(a)).unwrap());
                prop_assert_eq!(lat.leq(&lvl(a), &lvl(b)).unwrap(), a & b == a);
                prop_assert!(lat.flows(&lvl(a), &ab) && lat.flows(&lvl(b), &ab));
                for &c in &family {
                    if lat.flows(&lvl(a), &lvl(c)) && lat.flows(&lvl(b), &lvl(c)) {
                        prop_assert!(lat.flows(&ab, &lvl(c)));
                    }
                    let left = lat.lub(&ab, &lvl(c)).unwrap();
                    let bc = lat.lub(&lvl(b), &lvl(c)).unwrap();
                    prop_assert_eq!(left, lat.lub(&lvl(a), &bc).unwrap());
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// buildLattice against a brute-force poset validator

#[derive(Debug, PartialEq)]
enum Verdict {
    Lattice { leq: Vec<Vec<bool>>, lub: Vec<Vec<usize>> },
    Cycle,
    NoLub,
    NoExtrema,
}

fn reaches(n: usize, edges: &[(usize, usize)], from: usize, to: usize) -> bool {
    let mut seen = vec![false; n];
    let mut stack = vec![from];
    while let Some(x) = stack.pop() {
        if x == to {
            return true;
        }
        if std::mem::replace(&mut seen[x], true) {
            continue;
        }
        stack.extend(edges.iter().filter(|(a, _)| *a == x).map(|(_, b)| *b));
    }
    false
}

fn brute_force(n: usize, edges: &[(usize, usize)]) -> Verdict {
    let leq: Vec<Vec<bool>> = (0..n).map(|a| (0..n).map(|b| reaches(n, edges, a, b)).collect()).collect();
    for a in 0..n {
        for b in 0..n {
            if a != b && leq[a][b] && leq[b][a] {
                return Verdict::Cycle;
            }
        }
    }
    let mut lub = vec![vec![0; n]; n];
    for a in 0..n {
        for b in 0..n {
            let ups: Vec<usize> = (0..n).filter(|&u| leq[a][u] && leq[b][u]).collect();
            let least: Vec<usize> = ups.iter().copied().filter(|&u| ups.iter().all(|&v| leq[u][v])).collect();
            if least.len() != 1 {
                return Verdict::NoLub;
            }
            lub[a][b] = least[0];
        }
    }
    if !(0..n).any(|b| (0..n).all(|x| leq[b][x])) {
        return Verdict::NoExtrema;
    }
    Verdict::Lattice { leq, lub }
}

fn library(n: usize, edges: &[(usize, usize)]) -> Verdict {
    let names: Vec<String> = (0..n).map(name).collect();
    let named = edges.iter().map(|&(a, b)| (name(a), name(b)));
    match SecurityLattice::build(&names, named) {
        Ok(lat) => {
            let l = |i: usize| SecurityLevel::new(name(i));
            let idx = |s: SecurityLevel| names.iter().position(|x| *x == s.as_str()).unwrap();
            Verdict::Lattice {
                leq: (0..n).map(|a| (0..n).map(|b| lat.leq(&l(a), &l(b)).unwrap()).collect()).collect(),
                lub: (0..n).map(|a| (0..n).map(|b| idx(lat.lub(&l(a), &l(b)).unwrap())).collect()).collect(),
            }
        }
        Err(LatticeError::Cycle(..)) => Verdict::Cycle,
        Err(LatticeError::NoLub(..)) => Verdict::NoLub,
        Err(LatticeError::NoExtrema(_)) => Verdict::NoExtrema,
        Err(e) => panic!("unexpected {e:?}"),
    }
}

fn graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1usize..=6).prop_flat_map(|n| (Just(n), proptest::collection::vec((0..n, 0..n), 0..12)))
}

fn dag() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    graph().prop_map(|(n, es)| {
        let es = es.into_iter().filter(|(a, b)| a < b).collect();
        (n, es)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn build_agrees_with_brute_force_on_dags((n, edges) in dag()) {
        prop_assert_eq!(library(n, &edges), brute_force(n, &edges));
    }

    #[test]
    fn build_agrees_with_brute_force_on_any_graph((n, edges) in graph()) {
        prop_assert_eq!(library(n, &edges), brute_force(n, &edges));
    }
}

#[test]
fn fixed_lattices() {
    let lat = SecurityLattice::two_level();
    assert_eq!((lat.bottom().as_str(), lat.top().as_str()), ("low", "high"));
    let one = SecurityLattice::build(["A"], Vec::<(&str, &str)>::new()).unwrap();
    assert_eq!(one.bottom(), one.top());
    let d = SecurityLattice::diamond();
    assert_eq!(d.lub(&"l".into(), &"r".into()).unwrap().as_str(), "top");
    assert!(!d.flows(&"l".into(), &"r".into()));
    let vee = SecurityLattice::build(["bot", "l", "r"], [("bot", "l"), ("bot", "r")]);
    assert!(matches!(vee, Err(LatticeError::NoLub(..))));
}

// ---------------------------------------------------------------------------
// modifiers

#[test]
fn modifier_subtyping_truth_table() {
    let expected: &[(Modifier, Modifier)] = &[
        (Mut, Mut),
        (Imm, Imm),
        (Capsule, Capsule),
        (Read, Read),
        (Capsule, Mut),
        (Capsule, Imm),
        (Capsule, Read),
        (Mut, Read),
        (Imm, Read),
    ];
    let mut count = 0;
    for a in Modifier::ALL {
        for b in Modifier::ALL {
            assert_eq!(a.is_sub(b), expected.contains(&(a, b)), "{a} <= {b}");
            count += a.is_sub(b) as usize;
        }
    }
    assert_eq!(count, 9);
}

#[test]
fn field_arrow_equations() {
    // mut > mdf = capsule > mdf = mdf; imm > mdf = mdf > imm = imm; read > mut = read
    for recv in Modifier::ALL {
        for field in [Mut, Imm] {
            let expected = match (recv, field) {
                (Mut | Capsule, f) => f,
                (Imm, _) | (_, Imm) => Imm,
                (Read, _) => Read,
            };
            assert_eq!(field_arrow(recv, field), Some(expected), "{recv} > {field}");
        }
        assert_eq!(field_arrow(recv, Capsule), None);
        assert_eq!(field_arrow(recv, Read), None);
    }
}

#[test]
fn raise_type_is_defined_exactly_on_comparable_levels() {
    for lat in [SecurityLattice::two_level(), SecurityLattice::diamond()] {
        for s in lat.levels() {
            for t_level in lat.levels() {
                for m in Modifier::ALL {
                    let t = SifoType::new(t_level.clone(), m, "C");
                    let comparable = lat.flows(s, t_level) || lat.flows(t_level, s);
                    match raise_type(&t, s, &lat) {
                        Ok(r) => {
                            assert!(comparable);
                            let expected = if lat.flows(s, t_level) { t_level } else { s };
                            assert_eq!(&r.level, expected);
                            assert_eq!((r.modifier, &r.class), (m, &t.class));
                        }
                        Err(e) => {
                            assert!(!comparable);
                            assert_eq!(e.code, TypeErrorCode::IncomparableLevels);
                        }
                    }
                }
            }
        }
    }
    let two = SecurityLattice::two_level();
    assert_eq!(raise_type(&ty("low imm int"), &"high".into(), &two).unwrap(), ty("high imm int"));
    assert_eq!(raise_type(&ty("high mut C"), two.bottom(), &two).unwrap(), ty("high mut C"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn meth_types_is_bounded_and_deduplicated(seed in any::<u64>(), diamond in any::<bool>()) {
        let lat = if diamond { SecurityLattice::diamond() } else { SecurityLattice::two_level() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (table, _) = random_class_table(&mut rng, &lat);
        for decl in table.user_decls() {
            for m in table.method_names(&decl.name) {
                let sigs = meth_types(&table, &lat, &decl.name, &m).unwrap();
                prop_assert!(!sigs.is_empty());
                prop_assert!(sigs.len() <= lat.len() * 3);
                let unique: BTreeSet<String> = sigs.iter().map(|s| s.to_string()).collect();
                prop_assert_eq!(unique.len(), sigs.len());
                let h = table.header(&decl.name, &m).unwrap();
                let declared_first = &sigs[0];
                if lat.flows(lat.bottom(), &h.receiver_level) {
                    prop_assert_eq!(&declared_first.receiver, &h.receiver_type(&decl.name));
                    prop_assert_eq!(&declared_first.ret, &h.ret);
                }
            }
        }
    }
}

#[test]
fn setter_has_a_high_signature() {
    let p = load("two_level.lat", &["card.sifo"]);
    let sigs = meth_types(&p.table, &p.lattice, &"Card".into(), "setNumber").unwrap();
    assert!(sigs.iter().any(|s| s.receiver == ty("high mut Card")
        && s.params == vec![ty("high imm int")]
        && s.ret == ty("high imm void")));
    assert!(sigs.iter().any(|s| s.receiver == ty("low capsule Card")));
}

// ---------------------------------------------------------------------------
// contexts and promotion

fn any_type() -> impl Strategy<Value = SifoType> {
    (
        prop::sample::select(vec!["bot", "l", "r", "top"]),
        prop::sample::select(Modifier::ALL.to_vec()),
        prop::sample::select(vec!["A", "B"]),
    )
        .prop_map(|(l, m, c)| SifoType::new(l, m, c))
}

proptest! {
    #[test]
    fn restrict_mut_is_idempotent_and_only_demotes_mut(
        types in proptest::collection::vec(any_type(), 0..6),
        s in prop::sample::select(vec!["bot", "l", "r", "top"]),
    ) {
        let lat = SecurityLattice::diamond();
        let mut gamma = sifo::syntax::TypingContext::new();
        for (i, t) in types.iter().enumerate() {
            gamma.push(format!("x{i}"), t.clone());
        }
        let s = SecurityLevel::new(s);
        let once = gamma.restrict_mut(&lat, &s);
        prop_assert_eq!(&once.restrict_mut(&lat, &s), &once);
        prop_assert_eq!(once.len(), gamma.len());
        for ((n0, t0), (n1, t1)) in gamma.iter().zip(once.iter()) {
            prop_assert_eq!(n0, n1);
            prop_assert_eq!(&t0.level, &t1.level);
            prop_assert_eq!(&t0.class, &t1.class);
            let demoted = t0.modifier == Mut && !lat.flows(&s, &t0.level);
            prop_assert_eq!(t1.modifier, if demoted { Read } else { t0.modifier });
        }
        prop_assert_eq!(&gamma.restrict_mut(&lat, lat.bottom()), &gamma);
        let viewed = gamma.mut_to_read();
        prop_assert_eq!(&viewed.mut_to_read(), &viewed);
        prop_assert!(!viewed.has_mut());
    }
}

#[test]
fn security_promotion_skips_mut_and_read() {
    let p = load("two_level.lat", &["card.sifo"]);
    let checker = Checker::new(&p.table, &p.lattice);
    for m in Modifier::ALL {
        let gamma = ctx(&[("x", &format!("low {m} Balance"))]);
        for target in Modifier::ALL {
            let required = SifoType::new("high", target, "Balance");
            let ok = checker.check_against(&gamma, &expr("x"), &required).is_ok();
            let promotable = matches!(m, Imm | Capsule) && m.is_sub(target);
            assert_eq!(ok, promotable, "low {m} Balance as {required}");
        }
    }
}

#[test]
fn high_receiver_with_low_result_is_rejected_at_the_call() {
    let lat = sifo::program::SourceFile::new("l.lat", "level low high\nflow low -> high\n");
    let src = sifo::program::SourceFile::new(
        "leak.sifo",
        "class Vault { high imm int code;\n  high mut method low imm int peek() { this.code; } }\n\
         class Spy { low imm int seen;\n  low mut method low imm void look(high mut Vault v) { this.seen = v.peek(); } }",
    );
    let ds = sifo::program::load_and_check(&lat, &[src]);
    assert!(ds.iter().any(|d| d.rule.as_deref() == Some("Call")), "{ds:#?}");
}
