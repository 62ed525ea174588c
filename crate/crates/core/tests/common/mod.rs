//! Helpers shared by the integration tests: a scripted chat-completions
//! stub, independent numerical oracles and small run configs.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread;

use conformity::runner::{AgentSpec, Experiment, RunConfig};
use conformity::{SyntheticAgentParams, TaskKind};

/// One scripted reply of the stub server.
#[derive(Debug, Clone)]
pub struct Scripted {
    pub status: u16,
    pub body: String,
}

impl Scripted {
    pub fn ok(body: impl Into<String>) -> Self {
        Self { status: 200, body: body.into() }
    }

    pub fn status(status: u16, body: impl Into<String>) -> Self {
        Self { status, body: body.into() }
    }
}

/// Local HTTP server answering POSTs from a queue; the last entry repeats.
pub struct StubServer {
    pub base_url: String,
    pub requests: Arc<Mutex<Vec<String>>>,
}

impl StubServer {
    pub fn start(script: Vec<Scripted>) -> Self {
        assert!(!script.is_empty());
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub");
        let addr = listener.local_addr().unwrap();
        let requests = Arc::new(Mutex::new(Vec::new()));
        let seen = Arc::clone(&requests);
        thread::spawn(move || {
            let mut served = 0usize;
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let reply = script[served.min(script.len() - 1)].clone();
                served += 1;
                if let Some(body) = handle(stream, &reply) {
                    seen.lock().unwrap().push(body);
                }
            }
        });
        Self { base_url: format!("http://{addr}/v1"), requests }
    }

    pub fn request_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

fn handle(stream: TcpStream, reply: &Scripted) -> Option<String> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body).ok()?;
    let reason = match reply.status {
        200 => "OK",
        429 => "Too Many Requests",
        _ => "Error",
    };
    let response = format!(
        "HTTP/1.1 {} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        reply.status,
        reply.body.len(),
        reply.body
    );
    let mut stream = stream;
    stream.write_all(response.as_bytes()).ok()?;
    stream.flush().ok()?;
    Some(String::from_utf8_lossy(&body).into_owned())
}

/// A chat-completions payload whose first token carries the given
/// `(token, logprob)` alternatives.
pub fn logprobs_payload(alternatives: &[(&str, f64)]) -> String {
    let top: Vec<serde_json::Value> = alternatives
        .iter()
        .map(|(t, lp)| serde_json::json!({ "token": t, "logprob": lp, "bytes": t.as_bytes() }))
        .collect();
    let (first, first_lp) = alternatives[0];
    serde_json::json!({
        "id": "cmpl-stub",
        "object": "chat.completion",
        "model": "stub",
        "choices": [{
            "index": 0,
            "message": { "role": "assistant", "content": first },
            "logprobs": { "content": [{ "token": first, "logprob": first_lp, "top_logprobs": top }] },
            "finish_reason": "length",
        }],
    })
    .to_string()
}

/// A payload from an endpoint that ignores the logprobs request.
pub fn payload_without_logprobs() -> String {
    serde_json::json!({
        "id": "cmpl-stub",
        "object": "chat.completion",
        "choices": [{
            "index": 0,
            "message": { "role": "assistant", "content": "A" },
            "finish_reason": "length",
        }],
    })
    .to_string()
}

/// Ranks by direct counting: 1 + #smaller + half of the other ties.
pub fn brute_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&xi| {
            let below = x.iter().filter(|&&v| v < xi).count() as f64;
            let ties = x.iter().filter(|&&v| v == xi).count() as f64 - 1.0;
            1.0 + below + ties / 2.0
        })
        .collect()
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

pub fn brute_spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&brute_ranks(x), &brute_ranks(y))
}

/// OLS through the normal equations solved by Gauss-Jordan elimination.
/// Returns `(coefficients, standard errors)` with the intercept first.
pub fn normal_equations(y: &[f64], columns: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = y.len();
    let p = columns.len() + 1;
    let row = |i: usize| -> Vec<f64> {
        std::iter::once(1.0).chain(columns.iter().map(|c| c[i])).collect()
    };
    // Augmented [X'X | X'y | I].
    let width = 2 * p + 1;
    let mut m = vec![vec![0.0; width]; p];
    for i in 0..n {
        let r = row(i);
        for a in 0..p {
            for b in 0..p {
                m[a][b] += r[a] * r[b];
            }
            m[a][p] += r[a] * y[i];
        }
    }
    for (a, line) in m.iter_mut().enumerate() {
        line[p + 1 + a] = 1.0;
    }
    for col in 0..p {
        let pivot = (col..p).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, pivot);
        let d = m[col][col];
        for v in m[col].iter_mut() {
            *v /= d;
        }
        for r in 0..p {
            if r != col {
                let f = m[r][col];
                let src = m[col].clone();
                for (v, s) in m[r].iter_mut().zip(src) {
                    *v -= f * s;
                }
            }
        }
    }
    let beta: Vec<f64> = (0..p).map(|a| m[a][p]).collect();
    let rss: f64 = (0..n)
        .map(|i| {
            let fit: f64 = row(i).iter().zip(&beta).map(|(x, b)| x * b).sum();
            (y[i] - fit).powi(2)
        })
        .sum();
    let sigma2 = rss / (n - p) as f64;
    let se = (0..p).map(|a| (sigma2 * m[a][p + 1 + a]).sqrt()).collect();
    (beta, se)
}

/// Upper tail of Student's t by Simpson quadrature of the density after
/// the substitution `x = tan(u)`; the normalizing constant is integrated
/// the same way, so no gamma function is involved.
pub fn student_sf_quadrature(t: f64, df: f64) -> f64 {
    let g = |u: f64| {
        let x = u.tan();
        let c = u.cos();
        (1.0 + x * x / df).powf(-(df + 1.0) / 2.0) / (c * c)
    };
    let simpson = |a: f64, b: f64, steps: usize| {
        let h = (b - a) / steps as f64;
        let mut s = g(a) + g(b);
        for k in 1..steps {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * g(a + k as f64 * h);
        }
        s * h / 3.0
    };
    let half = std::f64::consts::FRAC_PI_2;
    // Endpoints where the density vanishes are clamped just inside.
    let edge = half - 1e-9;
    let total = 2.0 * simpson(0.0, edge, 200_000);
    let tail = simpson(t.atan(), edge, 200_000);
    tail / total
}

/// A synthetic-agent config writing into `dir`.
pub fn synthetic_config(dir: &Path, task: TaskKind, experiment: Experiment) -> RunConfig {
    RunConfig {
        task,
        experiment,
        agent: AgentSpec::Synthetic(SyntheticAgentParams::default()),
        trials_per_n: 8,
        pool_size: 20,
        normative_pairs: 10,
        difficulty_per_level: 5,
        difficulty_trials_per_n: Some(1),
        output_dir: dir.to_path_buf(),
        parallelism: 4,
        ..RunConfig::default()
    }
}
