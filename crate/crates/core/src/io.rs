//! Checkpoints, CSV formatting and atomic file writes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::network::{check_len, NetworkSpec};

/// Float with 17 significant digits; parses back to the same bits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Write through a sibling temporary file and rename into place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// CSV text from a header and rows of already formatted cells.
pub fn csv<I, R>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.into_iter().collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub seed: u64,
    pub epoch: usize,
    pub theta: Vec<f64>,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let spec = serde_json::to_string(&self.spec).expect("spec serializes");
        let theta: Vec<String> = self.theta.iter().map(|&v| fmt_f64(v)).collect();
        format!(
            "{{\"spec\":{spec},\"seed\":{},\"epoch\":{},\"theta\":[{}]}}\n",
            self.seed,
            self.epoch,
            theta.join(",")
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Parse(format!("checkpoint: {e}")))?;
        c.spec.validate()?;
        check_len(&c.spec, &c.theta)
            .map_err(|_| Error::Config(format!(
                "checkpoint theta has {} entries but spec needs {}",
                c.theta.len(),
                c.spec.param_count()
            )))?;
        Ok(c)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("refusing to checkpoint non-finite parameters".into()));
        }
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
