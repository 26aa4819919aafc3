use serde::Serialize;
use serde_json::{json, Value};

use crate::{Common, Format};

/// Envelope shared by every report.
pub fn envelope(command: &str, common: &Common, result: impl Serialize) -> Value {
    json!({
        "tool": "posmap",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": common.seed,
        "tol": common.tol,
        "eps": common.eps,
        "max_iter": common.max_iter,
        "result": result,
    })
}

pub fn render(value: &Value, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(value).expect("reports serialise") + "\n",
        Format::Table => table(value),
    }
}

fn table(value: &Value) -> String {
    let mut rows = Vec::new();
    flatten("", value, &mut rows);
    let width = rows.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        out.push_str(&format!("{k:<width$}  {v}\n"));
    }
    out
}

/// Matrices appear as `{rows, cols, data}`; they are summarised rather than expanded.
fn matrix_summary(v: &Value) -> Option<String> {
    let obj = v.as_object()?;
    let (rows, cols) = (obj.get("rows")?.as_u64()?, obj.get("cols")?.as_u64()?);
    obj.get("data")?;
    Some(format!("<{rows}x{cols} matrix>"))
}

fn flatten(prefix: &str, v: &Value, rows: &mut Vec<(String, String)>) {
    if let Some(s) = matrix_summary(v) {
        rows.push((prefix.to_string(), s));
        return;
    }
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                flatten(&key(k), x, rows);
            }
        }
        Value::Array(items) if items.iter().all(|x| x.is_number()) => {
            let parts: Vec<String> = items.iter().map(|x| x.to_string()).collect();
            rows.push((prefix.to_string(), format!("[{}]", parts.join(", "))));
        }
        Value::Array(items) if items.len() > 16 => {
            rows.push((prefix.to_string(), format!("<{} entries>", items.len())));
        }
        Value::Array(items) => {
            for (i, x) in items.iter().enumerate() {
                flatten(&key(&i.to_string()), x, rows);
            }
        }
        Value::String(s) => rows.push((prefix.to_string(), s.clone())),
        other => rows.push((prefix.to_string(), other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_flattens_and_summarises_matrices() {
        let v = json!({
            "a": 1,
            "b": {"rows": 2, "cols": 2, "data": [[1.0, 0.0]]},
            "c": {"d": "x", "e": [1, 2]},
        });
        let t = table(&v);
        assert_eq!(t, "a    1\nb    <2x2 matrix>\nc.d  x\nc.e  [1, 2]\n");
    }
}
