//! CSV readers and writers for every interchange format.
//!
//! Formats (headers are literal):
//! - sweep: `current_mA,p1,p2`, 9 significant digits per field
//! - mesh program: `layer,mode_a,mode_b,theta_rad,phi_ext_rad`, then one
//!   `output_phase,<mode>,<phase_rad>` row per mode, 17 significant digits
//! - time tags: `# seed=<u64> attempts=<u64> config_sha256=<hex>`, then
//!   `channel,attempt,t_ns` with t_ns at 3 decimal places, rows sorted by
//!   (attempt, t_ns, channel)
//! - histogram: `bin_start_ns,counts,sigma`
//! - splitting report: `current_mA,s1,s2,sigma,model_s1,pull`
//! - matrix: one row per matrix row, `re,im` pair per entry, 17
//!   significant digits
//!
//! Parse errors carry 1-based line numbers.

use num_complex::Complex;

use crate::analysis::{Histogram, PullPoint, SplittingEstimate};
use crate::calib::{SweepCurve, SweepPoint};
use crate::error::{Error, Result};
use crate::mesh::{MeshProgram, MziSetting};
use crate::source::{TimeTagEvent, TimeTagStream};
use crate::xfer::TransferMatrix;

fn sig9(x: f64) -> String {
    format!("{x:.8e}")
}

fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn field<T: std::str::FromStr>(s: &str, line: usize, name: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| parse_err(line, format!("bad {name}: {s:?}")))
}

fn split_n(row: &str, n: usize, line: usize) -> Result<Vec<&str>> {
    let fields: Vec<&str> = row.split(',').collect();
    if fields.len() != n {
        return Err(parse_err(
            line,
            format!("expected {n} fields, found {}", fields.len()),
        ));
    }
    Ok(fields)
}

fn expect_header(got: Option<(usize, &str)>, want: &str) -> Result<()> {
    match got {
        Some((_, line)) if line.trim() == want => Ok(()),
        Some((n, line)) => Err(parse_err(n, format!("expected header {want:?}, found {line:?}"))),
        None => Err(parse_err(1, format!("empty file, expected header {want:?}"))),
    }
}

/// Numbered, non-empty lines of a CSV body.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

pub fn write_sweep_csv(curve: &SweepCurve<f64>) -> String {
    let mut out = String::from("current_mA,p1,p2\n");
    for p in &curve.points {
        out.push_str(&format!(
            "{},{},{}\n",
            sig9(p.current_ma),
            sig9(p.p1),
            sig9(p.p2)
        ));
    }
    out
}

pub fn read_sweep_csv(text: &str) -> Result<SweepCurve<f64>> {
    let mut it = lines(text);
    expect_header(it.next(), "current_mA,p1,p2")?;
    let mut points = Vec::new();
    for (n, row) in it {
        let f = split_n(row, 3, n)?;
        points.push(SweepPoint {
            current_ma: field(f[0], n, "current_mA")?,
            p1: field(f[1], n, "p1")?,
            p2: field(f[2], n, "p2")?,
        });
    }
    if points.is_empty() {
        return Err(parse_err(1, "sweep file has no data rows"));
    }
    Ok(SweepCurve { points })
}

pub fn write_mesh_program_csv(program: &MeshProgram<f64>) -> String {
    let mut out = String::from("layer,mode_a,mode_b,theta_rad,phi_ext_rad\n");
    for s in &program.settings {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.layer,
            s.mode_a,
            s.mode_b(),
            sig17(s.theta),
            sig17(s.phi_ext)
        ));
    }
    for (mode, &phase) in program.output_phases.iter().enumerate() {
        out.push_str(&format!("output_phase,{mode},{}\n", sig17(phase)));
    }
    out
}

pub fn read_mesh_program_csv(text: &str) -> Result<MeshProgram<f64>> {
    let mut it = lines(text);
    expect_header(it.next(), "layer,mode_a,mode_b,theta_rad,phi_ext_rad")?;
    let mut settings = Vec::new();
    let mut output_phases = Vec::new();
    for (n, row) in it {
        if row.starts_with("output_phase") {
            let f = split_n(row, 3, n)?;
            let mode: usize = field(f[1], n, "mode")?;
            if mode != output_phases.len() {
                return Err(parse_err(
                    n,
                    format!("output_phase rows out of order at mode {mode}"),
                ));
            }
            output_phases.push(field(f[2], n, "phase_rad")?);
            continue;
        }
        if !output_phases.is_empty() {
            return Err(parse_err(n, "MZI row after output_phase rows"));
        }
        let f = split_n(row, 5, n)?;
        let mode_a: usize = field(f[1], n, "mode_a")?;
        let mode_b: usize = field(f[2], n, "mode_b")?;
        if mode_b != mode_a + 1 {
            return Err(parse_err(
                n,
                format!("mode_b must equal mode_a + 1, got ({mode_a}, {mode_b})"),
            ));
        }
        settings.push(MziSetting {
            layer: field(f[0], n, "layer")?,
            mode_a,
            theta: field(f[3], n, "theta_rad")?,
            phi_ext: field(f[4], n, "phi_ext_rad")?,
        });
    }
    let n_modes = output_phases.len();
    if n_modes == 0 {
        return Err(parse_err(1, "mesh program has no output_phase rows"));
    }
    Ok(MeshProgram { n: n_modes, settings, output_phases })
}

pub fn write_time_tag_csv(stream: &TimeTagStream) -> String {
    let mut out = format!(
        "# seed={} attempts={} config_sha256={}\nchannel,attempt,t_ns\n",
        stream.seed, stream.attempts, stream.config_sha256
    );
    for e in &stream.events {
        out.push_str(&format!("{},{},{:.3}\n", e.channel, e.attempt, e.t_ns));
    }
    out
}

pub fn read_time_tag_csv(text: &str) -> Result<TimeTagStream> {
    let mut it = lines(text);
    let (mn, meta) = it
        .next()
        .ok_or_else(|| parse_err(1, "empty file, expected metadata line"))?;
    let meta = meta
        .strip_prefix('#')
        .ok_or_else(|| parse_err(mn, "metadata line must start with '#'"))?;
    let (mut seed, mut attempts, mut config_sha256) = (None, None, None);
    for token in meta.split_whitespace() {
        match token.split_once('=') {
            Some(("seed", v)) => seed = Some(field(v, mn, "seed")?),
            Some(("attempts", v)) => attempts = Some(field(v, mn, "attempts")?),
            Some(("config_sha256", v)) => config_sha256 = Some(v.to_string()),
            _ => return Err(parse_err(mn, format!("unknown metadata token {token:?}"))),
        }
    }
    let (seed, attempts, config_sha256) = match (seed, attempts, config_sha256) {
        (Some(s), Some(a), Some(h)) => (s, a, h),
        _ => return Err(parse_err(mn, "metadata needs seed, attempts, config_sha256")),
    };
    expect_header(it.next(), "channel,attempt,t_ns")?;
    let mut events = Vec::new();
    for (n, row) in it {
        let f = split_n(row, 3, n)?;
        let e = TimeTagEvent {
            channel: field(f[0], n, "channel")?,
            attempt: field(f[1], n, "attempt")?,
            t_ns: field(f[2], n, "t_ns")?,
        };
        if e.channel > 2 {
            return Err(parse_err(n, format!("channel must be 0..=2, got {}", e.channel)));
        }
        if e.attempt >= attempts {
            return Err(parse_err(
                n,
                format!("attempt {} beyond declared count {attempts}", e.attempt),
            ));
        }
        events.push(e);
    }
    Ok(TimeTagStream { events, seed, attempts, config_sha256 })
}

pub fn write_histogram_csv(h: &Histogram) -> String {
    let mut out = String::from("bin_start_ns,counts,sigma\n");
    for (k, (&c, &v)) in h.counts.iter().zip(&h.variance).enumerate() {
        out.push_str(&format!(
            "{},{},{}\n",
            sig9(h.t_start_ns + k as f64 * h.bin_width_ns),
            sig17(c),
            sig17(v.sqrt())
        ));
    }
    out
}

pub fn read_histogram_csv(text: &str) -> Result<Histogram> {
    let mut it = lines(text);
    expect_header(it.next(), "bin_start_ns,counts,sigma")?;
    let mut starts: Vec<f64> = Vec::new();
    let mut counts = Vec::new();
    let mut variance = Vec::new();
    for (n, row) in it {
        let f = split_n(row, 3, n)?;
        starts.push(field(f[0], n, "bin_start_ns")?);
        counts.push(field(f[1], n, "counts")?);
        let sigma: f64 = field(f[2], n, "sigma")?;
        variance.push(sigma * sigma);
    }
    if starts.len() < 2 {
        return Err(parse_err(1, "histogram needs at least two bins"));
    }
    let bin_width = starts[1] - starts[0];
    if !(bin_width > 0.0) {
        return Err(parse_err(2, "bin starts must increase"));
    }
    for (k, w) in starts.windows(2).enumerate() {
        if (w[1] - w[0] - bin_width).abs() > 1e-6 * bin_width {
            return Err(parse_err(k + 3, "bins are not uniform"));
        }
    }
    Ok(Histogram {
        bin_width_ns: bin_width,
        t_start_ns: starts[0],
        counts,
        variance,
    })
}

pub fn write_splitting_report_csv(
    rows: &[(f64, SplittingEstimate)],
    pulls: &[PullPoint],
) -> String {
    let mut out = String::from("current_mA,s1,s2,sigma,model_s1,pull\n");
    for (&(current, est), p) in rows.iter().zip(pulls) {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            sig9(current),
            sig9(est.s1),
            sig9(est.s2),
            sig9(est.sigma1),
            sig9(p.model_s1),
            sig9(p.pull)
        ));
    }
    out
}

pub fn write_matrix_csv(m: &TransferMatrix<f64>) -> String {
    let mut out = String::new();
    for row in 0..m.dim() {
        let cells: Vec<String> = (0..m.dim())
            .map(|col| {
                let z = m.get(row, col);
                format!("{},{}", sig17(z.re), sig17(z.im))
            })
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn read_matrix_csv(text: &str) -> Result<TransferMatrix<f64>> {
    let rows: Vec<(usize, &str)> = lines(text).collect();
    let dim = rows.len();
    if dim == 0 {
        return Err(parse_err(1, "matrix file is empty"));
    }
    let mut entries = Vec::with_capacity(dim * dim);
    for &(n, row) in &rows {
        let f = split_n(row, 2 * dim, n)?;
        for pair in f.chunks(2) {
            entries.push(Complex::new(
                field(pair[0], n, "re")?,
                field(pair[1], n, "im")?,
            ));
        }
    }
    TransferMatrix::from_entries(dim, entries)
}

/// Parse a permutation like "2,0,1": output mode per input mode.
pub fn parse_permutation(text: &str) -> Result<Vec<usize>> {
    let perm: Vec<usize> = text
        .trim()
        .split(',')
        .map(|s| field(s, 1, "permutation entry"))
        .collect::<Result<_>>()?;
    let n = perm.len();
    let mut seen = vec![false; n];
    for &p in &perm {
        if p >= n || seen[p] {
            return Err(parse_err(1, format!("not a permutation of 0..{n}")));
        }
        seen[p] = true;
    }
    if n == 0 {
        return Err(parse_err(1, "empty permutation"));
    }
    Ok(perm)
}
