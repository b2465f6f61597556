//! Upload/download latency per file size, reported as medians.
//!
//! Absolute times depend on the machine; only the ordering across sizes is
//! meaningful.

use std::time::{Duration, Instant};

use serde::Serialize;

use super::{Deployment, HarnessError};
use crate::client::Client;
use crate::crypto::rsa_generate;

/// 1, 4, 7, 9, 14 and 17 KB.
pub const DEFAULT_SIZES: [usize; 6] = [1024, 4 * 1024, 7 * 1024, 9 * 1024, 14 * 1024, 17 * 1024];

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub size: usize,
    pub upload_median_us: u64,
    pub download_median_us: u64,
    pub upload_samples_us: Vec<u64>,
    pub download_samples_us: Vec<u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchTable {
    pub trials: usize,
    pub rows: Vec<BenchRow>,
}

pub fn median(samples: &[u64]) -> u64 {
    let mut v = samples.to_vec();
    v.sort_unstable();
    match v.len() {
        0 => 0,
        n if n % 2 == 1 => v[n / 2],
        n => (v[n / 2 - 1] + v[n / 2]) / 2,
    }
}

/// Number of adjacent pairs where the larger size has the smaller median.
pub fn inversions(medians: &[u64]) -> usize {
    medians.windows(2).filter(|w| w[1] < w[0]).count()
}

fn size_label(size: usize) -> String {
    if size.is_multiple_of(1024) {
        format!("{} KB", size / 1024)
    } else {
        format!("{size} B")
    }
}

fn ms(us: u64) -> String {
    format!("{:.3} ms", us as f64 / 1000.0)
}

impl BenchTable {
    pub fn upload_medians(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.upload_median_us).collect()
    }

    pub fn download_medians(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.download_median_us).collect()
    }

    pub fn upload_inversions(&self) -> usize {
        inversions(&self.upload_medians())
    }

    /// Two tables in the person / file size / time layout, one row per size.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for (title, pick) in [
            ("Execution time for uploading file", true),
            ("Execution time for downloading file", false),
        ] {
            out.push_str(&format!("{title} (median of {} trials)\n", self.trials));
            out.push_str(&format!(
                "{:<8}{:<12}{:>14}\n",
                "Person", "File size", "Time"
            ));
            for (i, r) in self.rows.iter().enumerate() {
                let t = if pick {
                    r.upload_median_us
                } else {
                    r.download_median_us
                };
                out.push_str(&format!(
                    "{:<8}{:<12}{:>14}\n",
                    i + 1,
                    size_label(r.size),
                    ms(t)
                ));
            }
            out.push('\n');
        }
        out
    }
}

/// Times `trials` uploads and downloads per size for one logged-in user.
/// Sizes are interleaved within each trial so drift hits all of them alike.
pub fn timing_benchmark(
    dep: &dyn Deployment,
    sizes: &[usize],
    trials: usize,
) -> Result<BenchTable, HarnessError> {
    let client = Client::new(
        dep.system_addr(),
        dep.system_public_key(),
        rsa_generate(1024)?,
    );
    let mail = format!("bench-{}@mail.test", std::process::id());
    let user = format!("bench-{}", std::process::id());
    client.register(&user, &mail)?;
    let otp = dep
        .latest_mail(&mail)?
        .ok_or_else(|| HarnessError::Unexpected("no OTP for benchmark user".into()))?;
    let token = client.login(&user, &otp)?;

    let payloads: Vec<Vec<u8>> = sizes
        .iter()
        .map(|&s| (0..s).map(|i| (i * 31 % 251) as u8).collect())
        .collect();
    // One untimed round to warm connections and caches.
    for (i, p) in payloads.iter().enumerate() {
        client.upload(&token, &format!("warmup-{i}"), p)?;
        client.download(&token, &format!("warmup-{i}"))?;
    }
    let mut up = vec![Vec::with_capacity(trials); sizes.len()];
    let mut down = vec![Vec::with_capacity(trials); sizes.len()];
    let micros = |d: Duration| d.as_micros() as u64;
    for t in 0..trials {
        for (i, p) in payloads.iter().enumerate() {
            let label = format!("bench-{}-{t}", sizes[i]);
            let start = Instant::now();
            client.upload(&token, &label, p)?;
            up[i].push(micros(start.elapsed()));
            let start = Instant::now();
            let back = client.download(&token, &label)?;
            down[i].push(micros(start.elapsed()));
            if back != *p {
                return Err(HarnessError::Unexpected(format!(
                    "{label} came back altered"
                )));
            }
        }
    }
    client.logout(&token)?;
    Ok(BenchTable {
        trials,
        rows: sizes
            .iter()
            .enumerate()
            .map(|(i, &size)| BenchRow {
                size,
                upload_median_us: median(&up[i]),
                download_median_us: median(&down[i]),
                upload_samples_us: up[i].clone(),
                download_samples_us: down[i].clone(),
            })
            .collect(),
    })
}
