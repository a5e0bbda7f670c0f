//! Bench rows: run, certify and compare one corpus item, then render the
//! table as JSON (source of truth), CSV, or a text table.
//!
//! CSV columns, in order: `id, m, variant, mode, gd_total, dual_objective,
//! opt_value, opt_method, ratio_vs_dual, ratio_vs_opt, certified, error`,
//! followed by `wall_time_ms` when timing is on.

use std::time::Instant;

use delay_match::instance::{AnyInstance, Instance, ParseOptions};
use delay_match::opt::{opt_brute, opt_hungarian, OptError, OptSolution, BRUTE_MAX_REQUESTS};
use delay_match::{certify, ratio_report, run, Scalar, Variant};
use serde_json::{json, Value};

use crate::corpus::Item;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OptChoice {
    /// Hungarian for mbpmd, brute force for small mpmd, nothing otherwise.
    Auto,
    Brute,
    Hungarian,
    None,
}

/// Runs the selected oracle. `Ok(None)` when no oracle applies.
pub fn solve_opt<S: Scalar>(inst: &Instance<S>, choice: OptChoice) -> Result<Option<OptSolution<S>>, OptError> {
    match choice {
        OptChoice::None => Ok(None),
        OptChoice::Brute => opt_brute(inst).map(Some),
        OptChoice::Hungarian => opt_hungarian(inst).map(Some),
        OptChoice::Auto if inst.variant() == Variant::Mbpmd => opt_hungarian(inst).map(Some),
        OptChoice::Auto if inst.len() <= BRUTE_MAX_REQUESTS => opt_brute(inst).map(Some),
        OptChoice::Auto => Ok(None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Ok,
    InputError,
    Violation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub id: String,
    pub m: Option<usize>,
    pub variant: Option<Variant>,
    pub mode: Option<&'static str>,
    pub gd_total: Option<Value>,
    pub dual_objective: Option<Value>,
    pub opt_value: Option<Value>,
    pub opt_method: Option<&'static str>,
    pub ratio_vs_dual: Option<Value>,
    pub ratio_vs_opt: Option<Value>,
    pub ratio_vs_dual_f64: Option<f64>,
    pub ratio_vs_opt_f64: Option<f64>,
    pub certified: bool,
    pub error: Option<String>,
    pub status: Status,
    pub wall_time_ms: Option<f64>,
}

impl Row {
    fn failed(id: &str, status: Status, error: String) -> Self {
        Row {
            id: id.to_string(),
            m: None,
            variant: None,
            mode: None,
            gd_total: None,
            dual_objective: None,
            opt_value: None,
            opt_method: None,
            ratio_vs_dual: None,
            ratio_vs_opt: None,
            ratio_vs_dual_f64: None,
            ratio_vs_opt_f64: None,
            certified: false,
            error: Some(error),
            status,
            wall_time_ms: None,
        }
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "id": self.id,
            "m": self.m,
            "variant": self.variant.map(|v| v.as_str()),
            "mode": self.mode,
            "gd_total": self.gd_total,
            "dual_objective": self.dual_objective,
            "opt_value": self.opt_value,
            "opt_method": self.opt_method,
            "ratio_vs_dual": self.ratio_vs_dual,
            "ratio_vs_opt": self.ratio_vs_opt,
            "certified": self.certified,
            "error": self.error,
        });
        if let Some(ms) = self.wall_time_ms {
            v["wall_time_ms"] = json!(ms);
        }
        v
    }
}

fn evaluate_in<S: Scalar>(id: &str, inst: &Instance<S>, choice: OptChoice) -> Row {
    let result = run(inst);
    let mut row = Row::failed(id, Status::Ok, String::new());
    row.error = None;
    row.m = Some(inst.m());
    row.variant = Some(inst.variant());
    row.mode = Some(S::MODE.as_str());
    row.gd_total = Some(result.summary.total_cost.to_json());
    row.dual_objective = Some(result.summary.dual_objective.to_json());
    if let Err(v) = certify(inst, &result) {
        row.status = Status::Violation;
        row.error = Some(v.to_string());
        return row;
    }
    row.certified = true;
    let opt = match solve_opt(inst, choice) {
        Ok(opt) => opt,
        Err(e) => {
            row.status = Status::InputError;
            row.error = Some(e.to_string());
            None
        }
    };
    if let Some(sol) = &opt {
        row.opt_value = Some(sol.value.to_json());
        row.opt_method = Some(sol.method.as_str());
    }
    match ratio_report(inst, &result, opt.map(|o| o.value)) {
        Ok(r) => {
            row.ratio_vs_dual_f64 = Some(r.ratio_vs_dual.to_f64());
            row.ratio_vs_dual = Some(r.ratio_vs_dual.to_json());
            row.ratio_vs_opt_f64 = r.ratio_vs_opt.as_ref().map(Scalar::to_f64);
            row.ratio_vs_opt = r.ratio_vs_opt.as_ref().map(Scalar::to_json);
        }
        Err(v) => {
            row.certified = false;
            row.status = Status::Violation;
            row.error = Some(v.to_string());
        }
    }
    row
}

pub fn evaluate(item: &Item, opts: ParseOptions, choice: OptChoice, timing: bool) -> Row {
    let start = Instant::now();
    let mut row = match item.load(opts) {
        Err(e) => Row::failed(&item.id, Status::InputError, e),
        Ok(AnyInstance::Exact(inst)) => evaluate_in(&item.id, &inst, choice),
        Ok(AnyInstance::Float(inst)) => evaluate_in(&item.id, &inst, choice),
    };
    if timing {
        row.wall_time_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    row
}

/// Largest value of `pick` over the rows, with the first row attaining it.
fn max_by(rows: &[Row], pick: impl Fn(&Row) -> Option<f64>) -> Option<(f64, &str)> {
    let mut best: Option<(f64, &str)> = None;
    for r in rows {
        if let Some(x) = pick(r) {
            if best.map_or(true, |(b, _)| x > b) {
                best = Some((x, &r.id));
            }
        }
    }
    best
}

pub fn aggregate(rows: &[Row]) -> Value {
    let max = |pick: fn(&Row) -> Option<f64>| match max_by(rows, pick) {
        Some((x, id)) => json!({ "value": x, "id": id }),
        None => Value::Null,
    };
    json!({
        "instances": rows.len(),
        "certified": rows.iter().filter(|r| r.certified).count(),
        "errors": rows.iter().filter(|r| r.error.is_some()).count(),
        "max_ratio_vs_dual": max(|r| r.ratio_vs_dual_f64),
        "max_ratio_vs_opt": max(|r| r.ratio_vs_opt_f64),
    })
}

pub fn to_json(rows: &[Row]) -> String {
    let doc = json!({
        "rows": rows.iter().map(Row::to_json).collect::<Vec<_>>(),
        "aggregate": aggregate(rows),
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
    s.push('\n');
    s
}

fn cell(v: &Option<Value>) -> String {
    match v {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    }
}

pub fn to_csv(rows: &[Row], timing: bool) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "id",
        "m",
        "variant",
        "mode",
        "gd_total",
        "dual_objective",
        "opt_value",
        "opt_method",
        "ratio_vs_dual",
        "ratio_vs_opt",
        "certified",
        "error",
    ];
    if timing {
        header.push("wall_time_ms");
    }
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        let mut rec = vec![
            r.id.clone(),
            r.m.map(|m| m.to_string()).unwrap_or_default(),
            r.variant.map(|v| v.to_string()).unwrap_or_default(),
            r.mode.unwrap_or_default().to_string(),
            cell(&r.gd_total),
            cell(&r.dual_objective),
            cell(&r.opt_value),
            r.opt_method.unwrap_or_default().to_string(),
            cell(&r.ratio_vs_dual),
            cell(&r.ratio_vs_opt),
            r.certified.to_string(),
            r.error.clone().unwrap_or_default(),
        ];
        if timing {
            rec.push(r.wall_time_ms.map(|t| format!("{t:.3}")).unwrap_or_default());
        }
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

fn decimal(v: &Option<Value>) -> String {
    match v {
        None | Some(Value::Null) => "-".into(),
        Some(Value::Number(n)) => format!("{:.6}", n.as_f64().unwrap_or(f64::NAN)),
        Some(Value::String(s)) => match delay_match::scalar::parse_rational(s) {
            Ok(q) => format!("{:.6}", q.to_f64()),
            Err(_) => s.clone(),
        },
        Some(other) => other.to_string(),
    }
}

pub fn to_table(rows: &[Row]) -> String {
    let header = ["id", "m", "variant", "gd_total", "dual", "opt", "ratio_dual", "ratio_opt", "certified"];
    let mut lines: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for r in rows {
        let status = match (&r.error, r.certified) {
            (None, _) => "yes".to_string(),
            (Some(e), true) => format!("yes ({e})"),
            (Some(e), false) => format!("NO ({e})"),
        };
        lines.push(vec![
            r.id.clone(),
            r.m.map(|m| m.to_string()).unwrap_or_else(|| "-".into()),
            r.variant.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
            decimal(&r.gd_total),
            decimal(&r.dual_objective),
            decimal(&r.opt_value),
            decimal(&r.ratio_vs_dual),
            decimal(&r.ratio_vs_opt),
            status,
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for line in &lines {
        let cells: Vec<String> = line
            .iter()
            .enumerate()
            .map(|(c, s)| if c + 1 == line.len() { s.clone() } else { format!("{s:<w$}", w = widths[c]) })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    let agg = aggregate(rows);
    let describe = |key: &str| match &agg[key] {
        Value::Null => "-".to_string(),
        v => format!("{:.6} ({})", v["value"].as_f64().unwrap_or(f64::NAN), v["id"].as_str().unwrap_or("")),
    };
    out.push_str(&format!(
        "instances: {}  certified: {}  max ratio_vs_dual: {}  max ratio_vs_opt: {}\n",
        agg["instances"],
        agg["certified"],
        describe("max_ratio_vs_dual"),
        describe("max_ratio_vs_opt")
    ));
    out
}

/// Worst status over all rows.
pub fn status(rows: &[Row]) -> Status {
    rows.iter().map(|r| r.status).max().unwrap_or(Status::Ok)
}
