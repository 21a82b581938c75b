//! Shared test helpers: brute-force oracles and a stub chat-completion server.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use edutag::preprocess::CleanAttempt;
use edutag::{AbilityDomain, KnowledgeArea};

// ---------------------------------------------------------------- tagging

fn level_of(a: &CleanAttempt) -> usize {
    a.difficulty as usize - 1
}

fn area_of(a: &CleanAttempt) -> usize {
    KnowledgeArea::ALL.iter().position(|k| *k == a.knowledge).unwrap()
}

fn domain_of(a: &CleanAttempt) -> usize {
    AbilityDomain::ALL.iter().position(|d| *d == a.ability).unwrap()
}

/// +1 above 65%, -1 below 55%, 0 in between, with exact rational comparison.
fn side(correct: u64, attempts: u64) -> i8 {
    if 20 * correct > 13 * attempts {
        1
    } else if 20 * correct < 11 * attempts {
        -1
    } else {
        0
    }
}

/// Speed class per student at one level: 'F', 'S' or 'N'.
///
/// Means are compared as exact fractions, which assumes integer durations.
pub fn oracle_speed(means: &BTreeMap<String, (u64, u64)>) -> BTreeMap<String, char> {
    let n = means.len();
    let faster = |a: (&String, &(u64, u64)), b: (&String, &(u64, u64))| {
        let (sa, ca) = *a.1;
        let (sb, cb) = *b.1;
        let (lhs, rhs) = (u128::from(sa) * u128::from(cb), u128::from(sb) * u128::from(ca));
        lhs < rhs || (lhs == rhs && a.0 < b.0)
    };
    means
        .iter()
        .map(|me| {
            let rank = 1 + means.iter().filter(|other| faster(*other, me)).count();
            let class = if n <= 40 {
                if rank <= n.div_ceil(2) {
                    'F'
                } else {
                    'S'
                }
            } else {
                let k = n.div_ceil(4);
                if rank <= k {
                    'F'
                } else if rank > n - k {
                    'S'
                } else {
                    'N'
                }
            };
            (me.0.clone(), class)
        })
        .collect()
}

/// Naive tagger with default thresholds. Returns tag names per student.
pub fn oracle_tags(attempts: &[CleanAttempt]) -> BTreeMap<String, BTreeSet<String>> {
    let mut by_student: BTreeMap<String, Vec<&CleanAttempt>> = BTreeMap::new();
    for a in attempts {
        by_student.entry(a.student_id.as_str().to_owned()).or_default().push(a);
    }
    let students: Vec<String> = by_student.keys().cloned().collect();
    let of = |s: &str| by_student[s].iter().copied();

    let mut speed: Vec<BTreeMap<String, char>> = Vec::new();
    for level in 0..3 {
        let mut means = BTreeMap::new();
        for s in &students {
            let rows: Vec<_> = of(s).filter(|a| level_of(a) == level).collect();
            if !rows.is_empty() {
                let total: u64 = rows.iter().map(|a| a.duration as u64).sum();
                means.insert(s.clone(), (total, rows.len() as u64));
            }
        }
        speed.push(oracle_speed(&means));
    }

    let mut out = BTreeMap::new();
    for s in &students {
        let mut tags = BTreeSet::new();
        let count = |pred: &dyn Fn(&CleanAttempt) -> bool| {
            let rows: Vec<_> = of(s).filter(|a| pred(a)).collect();
            (rows.iter().filter(|a| a.correct).count() as u64, rows.len() as u64)
        };
        for (level, classes) in speed.iter().enumerate() {
            let (c, n) = count(&|a| level_of(a) == level);
            if n < 3 {
                continue;
            }
            let slow = match classes.get(s) {
                Some('F') => 0,
                Some('S') => 1,
                _ => continue,
            };
            let neg = match side(c, n) {
                1 => 0,
                -1 => 1,
                _ => continue,
            };
            tags.insert(format!("Tag_1_{}", 1 + level + 3 * (2 * neg + slow)));
        }
        for area in 0..5 {
            let (c, n) = count(&|a| area_of(a) == area);
            match (n >= 3, side(c, n)) {
                (true, 1) => tags.insert(format!("Tag_2_{}", 1 + area)),
                (true, -1) => tags.insert(format!("Tag_2_{}", 6 + area)),
                _ => false,
            };
        }
        for dom in 0..6 {
            let (c, n) = count(&|a| domain_of(a) == dom);
            match (n >= 3, side(c, n)) {
                (true, 1) => tags.insert(format!("Tag_3_{}", 1 + dom)),
                (true, -1) => tags.insert(format!("Tag_3_{}", 7 + dom)),
                _ => false,
            };
        }
        out.insert(s.clone(), tags);
    }
    out
}

// ---------------------------------------------------------------- survey

fn insertion_sorted(values: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values {
        let pos = out.iter().position(|x| *x > v).unwrap_or(out.len());
        out.insert(pos, v);
    }
    out
}

/// Median by peeling the extremes off both ends.
pub fn peel_median(values: &[f64]) -> f64 {
    let mut v = insertion_sorted(values);
    while v.len() > 2 {
        v.remove(0);
        v.pop();
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Hinges: the median of what is left after removing the top (bottom)
/// ceil(n/2) observations. A single observation is its own hinge.
pub fn peel_hinges(values: &[f64]) -> (f64, f64) {
    if values.len() == 1 {
        return (values[0], values[0]);
    }
    let drop = values.len().div_ceil(2);
    let mut low = insertion_sorted(values);
    let mut high = low.clone();
    for _ in 0..drop {
        low.pop();
        high.remove(0);
    }
    (peel_median(&low), peel_median(&high))
}

// ---------------------------------------------------------------- http stub

#[derive(Clone)]
pub struct StubResponse {
    pub status: u16,
    pub body: String,
    pub headers: Vec<(String, String)>,
}

impl StubResponse {
    pub fn ok(text: &str) -> Self {
        let body = serde_json::json!({
            "id": "stub",
            "object": "chat.completion",
            "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
            "usage": {"prompt_tokens": 10, "completion_tokens": 5, "total_tokens": 15}
        });
        StubResponse { status: 200, body: body.to_string(), headers: Vec::new() }
    }

    pub fn status(status: u16, body: &str) -> Self {
        StubResponse { status, body: body.to_owned(), headers: Vec::new() }
    }

    pub fn with_header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.to_owned(), value.to_owned()));
        self
    }
}

#[derive(Debug, Clone)]
pub struct CapturedRequest {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl CapturedRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

/// Minimal HTTP/1.1 server answering from a script, one request per
/// connection. When the script runs out it answers with `fallback`.
pub struct StubServer {
    pub url: String,
    requests: Arc<Mutex<Vec<CapturedRequest>>>,
    _handle: JoinHandle<()>,
}

impl StubServer {
    pub fn start(script: Vec<StubResponse>, fallback: StubResponse) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let script = Arc::new(Mutex::new(VecDeque::from(script)));
        let captured = Arc::clone(&requests);
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let Some(req) = read_request(&stream) else { continue };
                captured.lock().unwrap().push(req);
                let resp = script.lock().unwrap().pop_front().unwrap_or_else(|| fallback.clone());
                write_response(stream, &resp);
            }
        });
        StubServer { url, requests, _handle: handle }
    }

    pub fn requests(&self) -> Vec<CapturedRequest> {
        self.requests.lock().unwrap().clone()
    }
}

fn read_request(stream: &TcpStream) -> Option<CapturedRequest> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let mut parts = line.split_whitespace();
    let method = parts.next()?.to_owned();
    let path = parts.next()?.to_owned();
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            headers.push((k.trim().to_owned(), v.trim().to_owned()));
        }
    }
    let len: usize = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(0);
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).ok()?;
    Some(CapturedRequest { method, path, headers, body: String::from_utf8(body).ok()? })
}

fn write_response(mut stream: TcpStream, resp: &StubResponse) {
    let mut head = format!(
        "HTTP/1.1 {} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n",
        resp.status,
        resp.body.len()
    );
    for (k, v) in &resp.headers {
        head.push_str(&format!("{k}: {v}\r\n"));
    }
    head.push_str("\r\n");
    let _ = stream.write_all(head.as_bytes());
    let _ = stream.write_all(resp.body.as_bytes());
    let _ = stream.flush();
}
