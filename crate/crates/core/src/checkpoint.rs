//! Versioned plain-text checkpoints.
//!
//! ```text
//! mlgcn-checkpoint 1
//! seed <u64>
//! step <u64>
//! config <json>
//! shape <json>
//! activation <kind> <leak>
//! layer <l> unit <p> = <ŵ values>          # 1-based, one line per unit
//! theta <layer> <channel> <filter> = <θ_0 ... θ_{K-1}>
//! weight <row> = <classifier row>
//! bias = <classifier bias>
//! end
//! ```
//!
//! Floats use Rust's shortest round-trip exponent form, so save followed by
//! load reproduces every parameter bit for bit. Lines are matched strictly
//! in order.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{MlgcnError, Result};
use crate::model::{ModelConfig, ModelShape, ModelState};
use crate::multilap::{Activation, ActivationKind};

pub const CHECKPOINT_MAGIC: &str = "mlgcn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

fn push_values<'a>(out: &mut String, values: impl IntoIterator<Item = &'a f64>) {
    out.push_str(" =");
    for v in values {
        let _ = write!(out, " {v:e}");
    }
    out.push('\n');
}

pub fn to_text(state: &ModelState) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}");
    let _ = writeln!(out, "seed {}", state.seed);
    let _ = writeln!(out, "step {}", state.step);
    let _ = writeln!(out, "config {}", serde_json::to_string(&state.config).expect("config serializes"));
    let _ = writeln!(out, "shape {}", serde_json::to_string(&state.shape).expect("shape serializes"));
    let act = state.multilap.activation();
    let _ = writeln!(out, "activation {} {:e}", act.kind.as_str(), act.leak);
    for (l, layer) in state.multilap.raw().iter().enumerate() {
        for (p, unit) in layer.rows().into_iter().enumerate() {
            let _ = write!(out, "layer {} unit {}", l + 1, p + 1);
            push_values(&mut out, unit.iter());
        }
    }
    for (i, bank) in state.conv.iter().enumerate() {
        for c in 0..bank.in_channels() {
            for f in 0..bank.filters() {
                let _ = write!(out, "theta {} {} {}", i + 1, c + 1, f + 1);
                push_values(&mut out, bank.theta.slice(ndarray::s![c, f, ..]).iter());
            }
        }
    }
    for (r, row) in state.classifier_weight.rows().into_iter().enumerate() {
        let _ = write!(out, "weight {}", r + 1);
        push_values(&mut out, row.iter());
    }
    out.push_str("bias");
    push_values(&mut out, state.classifier_bias.iter());
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    origin: &'a Path,
    last: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, detail: impl Into<String>) -> MlgcnError {
        MlgcnError::Parse {
            path: self.origin.to_path_buf(),
            line: self.last,
            detail: detail.into(),
        }
    }

    /// Next line, which must start with `key`; returns the remainder.
    fn expect(&mut self, key: &str) -> Result<&'a str> {
        let (i, line) = self.iter.next().ok_or_else(|| self.err(format!("missing `{key}` line")))?;
        self.last = i + 1;
        line.strip_prefix(key)
            .map(str::trim)
            .ok_or_else(|| self.err(format!("expected `{key}`, found `{}`", line.chars().take(40).collect::<String>())))
    }

    /// Parses `<key> = v1 v2 ...` with exactly `count` values.
    fn values(&mut self, key: &str, count: usize) -> Result<Vec<f64>> {
        let rest = self.expect(key)?;
        let body = rest.strip_prefix('=').ok_or_else(|| self.err(format!("`{key}` line lacks `=`")))?;
        let values = body
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| self.err(format!("bad value `{t}`: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != count {
            return Err(self.err(format!("`{key}` has {} values, expected {count}", values.len())));
        }
        Ok(values)
    }
}

pub fn from_text(text: &str, origin: &Path) -> Result<ModelState> {
    let mut lines = Lines {
        iter: text.lines().enumerate(),
        origin,
        last: 0,
    };
    let version = lines.expect(CHECKPOINT_MAGIC)?;
    if version != CHECKPOINT_VERSION.to_string() {
        return Err(lines.err(format!("unsupported checkpoint version `{version}`")));
    }
    let seed: u64 = lines.expect("seed")?.parse().map_err(|e| lines.err(format!("bad seed: {e}")))?;
    let step: u64 = lines.expect("step")?.parse().map_err(|e| lines.err(format!("bad step: {e}")))?;
    let config: ModelConfig =
        serde_json::from_str(lines.expect("config")?).map_err(|e| lines.err(format!("bad config: {e}")))?;
    let shape: ModelShape = serde_json::from_str(lines.expect("shape")?).map_err(|e| lines.err(format!("bad shape: {e}")))?;
    let activation_line = lines.expect("activation")?;
    let (kind, leak) = activation_line
        .split_once(' ')
        .ok_or_else(|| lines.err("activation line needs a kind and a leak"))?;
    let kind = ActivationKind::parse(kind).ok_or_else(|| lines.err(format!("unknown activation `{kind}`")))?;
    let leak: f64 = leak.trim().parse().map_err(|e| lines.err(format!("bad leak: {e}")))?;
    let activation = Activation::new(kind, leak)?;
    if activation != config.activation()? {
        return Err(lines.err("activation line disagrees with the config"));
    }

    // seed only fixes the shapes here; every value is overwritten
    let mut state = ModelState::new(config, shape, seed).map_err(|e| lines.err(e.to_string()))?;
    state.step = step;
    for l in 0..state.multilap.raw().len() {
        let (units, fan_in) = state.multilap.raw()[l].dim();
        for p in 0..units {
            let values = lines.values(&format!("layer {} unit {}", l + 1, p + 1), fan_in)?;
            state.multilap.raw_mut()[l].row_mut(p).assign(&ndarray::Array1::from(values));
        }
    }
    for i in 0..state.conv.len() {
        let (channels, filters, order) = state.conv[i].theta.dim();
        for c in 0..channels {
            for f in 0..filters {
                let values = lines.values(&format!("theta {} {} {}", i + 1, c + 1, f + 1), order)?;
                state.conv[i].theta.slice_mut(ndarray::s![c, f, ..]).assign(&ndarray::Array1::from(values));
            }
        }
    }
    let (rows, cols) = state.classifier_weight.dim();
    for r in 0..rows {
        let values = lines.values(&format!("weight {}", r + 1), cols)?;
        state.classifier_weight.row_mut(r).assign(&ndarray::Array1::from(values));
    }
    state.classifier_bias = ndarray::Array1::from(lines.values("bias", cols)?);
    lines.expect("end")?;
    Ok(state)
}

pub fn save(state: &ModelState, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(state)).map_err(|e| MlgcnError::io(path, e))
}

pub fn load(path: &Path) -> Result<ModelState> {
    let text = std::fs::read_to_string(path).map_err(|e| MlgcnError::io(path, e))?;
    from_text(&text, path)
}
