use std::fmt::Write as _;
use std::path::Path;

use taylorcast_core::Tensor;

use crate::CliError;

/// Binary PGM (one channel) or PPM (three channels) from a `[C, H, W]` frame
/// in `[0, 1]`.
pub fn encode_image(frame: &Tensor) -> Result<Vec<u8>, CliError> {
    let s = frame.shape();
    if s.len() != 3 || !(s[0] == 1 || s[0] == 3) {
        return Err(CliError::Runtime(format!(
            "cannot write a {s:?} frame as an image"
        )));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    let level = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round_ties_even() as u8;
    let magic = if c == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    let plane = h * w;
    for p in 0..plane {
        for ch in 0..c {
            out.push(level(frame.data()[ch * plane + p]));
        }
    }
    Ok(out)
}

pub fn write_image(path: &Path, frame: &Tensor) -> Result<(), CliError> {
    write_file(path, &encode_image(frame)?)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// `pred_t+1.30.pgm` style names; negative offsets read `t-0.50`.
pub fn tau_file_name(prefix: &str, tau: f64, ext: &str) -> String {
    let sign = if tau < 0.0 { '-' } else { '+' };
    format!("{prefix}_t{sign}{:.2}.{ext}", tau.abs())
}

/// Comma-separated table with a header row and LF line endings.
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            text: format!("{}\n", header.join(",")),
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns);
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        write_file(path, self.text.as_bytes())
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Runs `f(0..n)` on up to `threads` workers; results keep index order.
pub fn parallel_map<T, F>(n: usize, threads: usize, f: F) -> Result<Vec<T>, CliError>
where
    T: Send,
    F: Fn(usize) -> Result<T, CliError> + Sync,
{
    let threads = threads.clamp(1, n.max(1));
    if threads == 1 {
        return (0..n).map(&f).collect();
    }
    let f = &f;
    let mut slots: Vec<Option<Result<T, CliError>>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                scope.spawn(move || {
                    (w..n)
                        .step_by(threads)
                        .map(|i| (i, f(i)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every index visited"))
        .collect()
}
