//! JSON-lines scenario files: a header object, then one object per scenario
//! with `delta` as `[re, im]` pairs.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ScenarioSet, UncertaintyError, UncertaintyVector};

const FORMAT: &str = "ccopf-scenarios";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    seed: u64,
    model_hash: String,
    count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    index: u64,
    delta: Vec<Complex64>,
}

pub fn write_jsonl<W: Write>(set: &ScenarioSet, mut w: W) -> std::io::Result<()> {
    let header = Header {
        format: FORMAT.into(),
        version: 1,
        seed: set.seed,
        model_hash: set.model_hash.clone(),
        count: set.scenarios.len(),
        eps: set.eps,
        beta: set.beta,
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for s in &set.scenarios {
        serde_json::to_writer(
            &mut w,
            &Record {
                index: s.index,
                delta: s.delta.clone(),
            },
        )?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<ScenarioSet, UncertaintyError> {
    let mut lines = r
        .lines()
        .enumerate()
        .filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
    let parse = |line: usize, e: serde_json::Error| UncertaintyError::Parse {
        line: line + 1,
        message: e.to_string(),
    };
    let (hl, text) = lines.next().ok_or(UncertaintyError::Parse {
        line: 1,
        message: "empty scenario file".into(),
    })?;
    let header: Header = serde_json::from_str(&text?).map_err(|e| parse(hl, e))?;
    if header.format != FORMAT || header.version != 1 {
        return Err(UncertaintyError::Parse {
            line: hl + 1,
            message: format!("unsupported format {} v{}", header.format, header.version),
        });
    }
    let mut scenarios = Vec::with_capacity(header.count);
    let mut dim = None;
    for (ln, text) in lines {
        let rec: Record = serde_json::from_str(&text?).map_err(|e| parse(ln, e))?;
        if !rec.delta.len().is_multiple_of(2)
            || *dim.get_or_insert(rec.delta.len()) != rec.delta.len()
        {
            return Err(UncertaintyError::Parse {
                line: ln + 1,
                message: format!("delta has {} entries", rec.delta.len()),
            });
        }
        scenarios.push(UncertaintyVector {
            delta: rec.delta,
            seed: header.seed,
            index: rec.index,
        });
    }
    if scenarios.len() != header.count {
        return Err(UncertaintyError::Parse {
            line: hl + 1,
            message: format!(
                "header declares {} scenarios, found {}",
                header.count,
                scenarios.len()
            ),
        });
    }
    Ok(ScenarioSet {
        seed: header.seed,
        model_hash: header.model_hash,
        eps: header.eps,
        beta: header.beta,
        scenarios,
    })
}
