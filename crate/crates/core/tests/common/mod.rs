#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use sifo::lattice::SecurityLattice;
use sifo::parser::{parse_expr, parse_type};
use sifo::program::{self, Program, SourceFile};
use sifo::syntax::{SifoType, TypingContext};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture(name: &str) -> SourceFile {
    let path = fixture_path(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    SourceFile::new(name, text)
}

pub fn load(lattice: &str, sources: &[&str]) -> Program {
    let srcs: Vec<_> = sources.iter().map(|s| fixture(s)).collect();
    program::load(&fixture(lattice), &srcs).unwrap_or_else(|ds| panic!("{ds:?}"))
}

pub fn two_level() -> Arc<SecurityLattice> {
    Arc::new(SecurityLattice::two_level())
}

pub fn ty(text: &str) -> SifoType {
    parse_type(text).unwrap_or_else(|e| panic!("{text}: {e:?}"))
}

/// A context from `name: type` pairs, in order.
pub fn ctx(bindings: &[(&str, &str)]) -> TypingContext {
    let mut c = TypingContext::new();
    for (n, t) in bindings {
        assert!(c.push(*n, ty(t)));
    }
    c
}

pub fn expr(text: &str) -> sifo::syntax::Expr {
    parse_expr(text).unwrap_or_else(|e| panic!("{text}: {e:?}"))
}

/// A workspace directory holding the card, signature and wallet programs
/// over the two-level lattice.
pub fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("lattice.lat"), fixture("two_level.lat").text).unwrap();
    std::fs::create_dir(dir.path().join("src")).unwrap();
    for name in ["card.sifo", "signature.sifo", "wallet.sifo"] {
        std::fs::write(dir.path().join("src").join(name), fixture(name).text).unwrap();
    }
    dir
}

pub fn script(name: &str) -> Vec<sifo::refiner::RefinementStep> {
    sifo::parser::parse_script(&fixture(name).text)
        .unwrap()
        .into_iter()
        .map(|s| s.step)
        .collect()
}

/// Minimal HTTP/1.1 client: one request per connection.
pub fn http(addr: &str, method: &str, path: &str, body: Option<&serde_json::Value>) -> (u16, serde_json::Value) {
    use std::io::{Read, Write};
    let mut stream = std::net::TcpStream::connect(addr).unwrap();
    let payload = body.map(|b| b.to_string()).unwrap_or_default();
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{payload}",
        payload.len()
    )
    .unwrap();
    let mut raw = String::new();
    stream.read_to_string(&mut raw).unwrap();
    let (head, body) = raw.split_once("\r\n\r\n").expect("http response");
    let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!(body.ends_with('\n'), "response body must end with a newline: {body:?}");
    (status, serde_json::from_str(body).unwrap_or_else(|e| panic!("{e}: {body}")))
}
