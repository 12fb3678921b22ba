//! Text rendering of a JSON report. Numbers are printed from the same
//! `serde_json::Value` as the JSON output, so both renderings agree.

use serde_json::Value;

/// Rounds every float to 10 significant digits.
pub fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            let r: f64 = format!("{x:.9e}").parse().expect("formatted float parses");
            if let Some(m) = serde_json::Number::from_f64(r) {
                *n = m;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_floats),
        Value::Object(o) => o.values_mut().for_each(round_floats),
        _ => {}
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".to_string(),
        other => other.to_string(),
    }
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

pub fn render_text(v: &Value) -> String {
    let mut out = String::new();
    render(v, 0, &mut out);
    out
}

fn render(v: &Value, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    match v {
        Value::Object(map) => {
            for (k, val) in map {
                match val {
                    Value::Object(_) => {
                        out.push_str(&format!("{pad}{k}:\n"));
                        render(val, depth + 1, out);
                    }
                    Value::Array(items) if items.iter().all(is_scalar) => {
                        let joined: Vec<String> = items.iter().map(scalar).collect();
                        out.push_str(&format!("{pad}{k}: {}\n", joined.join(", ")));
                    }
                    Value::Array(items) => {
                        out.push_str(&format!("{pad}{k}:\n"));
                        table(items, depth + 1, out);
                    }
                    _ => out.push_str(&format!("{pad}{k}: {}\n", scalar(val))),
                }
            }
        }
        Value::Array(items) => table(items, depth, out),
        other => out.push_str(&format!("{pad}{}\n", scalar(other))),
    }
}

/// Arrays of objects become aligned tables; nested values are inlined as
/// compact JSON.
fn table(items: &[Value], depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    let mut columns: Vec<String> = Vec::new();
    for item in items {
        match item {
            Value::Object(map) => {
                for k in map.keys() {
                    if !columns.contains(k) {
                        columns.push(k.clone());
                    }
                }
            }
            other => {
                out.push_str(&format!("{pad}- {}\n", if is_scalar(other) { scalar(other) } else { other.to_string() }));
            }
        }
    }
    if columns.is_empty() {
        return;
    }
    let cell = |item: &Value, col: &str| match item.get(col) {
        None => String::new(),
        Some(v) if is_scalar(v) => scalar(v),
        Some(v) => v.to_string(),
    };
    let rows: Vec<Vec<String>> = items.iter().filter(|i| i.is_object()).map(|i| columns.iter().map(|c| cell(i, c)).collect()).collect();
    let widths: Vec<usize> =
        columns.iter().enumerate().map(|(j, c)| rows.iter().map(|r| r[j].len()).chain([c.len()]).max().unwrap_or(0)).collect();
    let line = |cells: &[String]| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("{pad}{}\n", parts.join("  ").trim_end())
    };
    out.push_str(&line(&columns));
    for r in &rows {
        out.push_str(&line(r));
    }
}
