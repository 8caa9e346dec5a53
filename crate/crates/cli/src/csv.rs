//! Trace CSV emission.

use std::path::Path;

use sobo::telemetry::TraceRecord;

use crate::error::Result;
use crate::output::write_atomic;

pub const CSV_HEADER: &str =
    "t,step_norm,grad_est_norm,pi_t,K_t1,K_t2,grad_calls,hvp_calls,hess_block_calls,total_cost,wall_time";

/// C's `%.12g`.
pub fn fmt_g12(x: f64) -> String {
    fmt_g(x, 12)
}

pub fn fmt_g(x: f64, precision: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let p = precision.max(1);
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", strip_zeros(mantissa), exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn trace_csv(trace: &[TraceRecord], with_wall_time: bool) -> String {
    let mut out = String::with_capacity(64 * (trace.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in trace {
        let wall = if with_wall_time { r.wall_time } else { 0.0 };
        let fields = [
            r.t.to_string(),
            fmt_g12(r.step_norm),
            fmt_g12(r.grad_est_norm),
            r.pi_t.to_string(),
            r.k_t1.to_string(),
            r.k_t2.to_string(),
            r.grad_calls.to_string(),
            r.hvp_calls.to_string(),
            r.hess_block_calls.to_string(),
            fmt_g12(r.total_cost),
            fmt_g12(wall),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn emit_csv(trace: &[TraceRecord], path: &Path, with_wall_time: bool) -> Result<()> {
    write_atomic(path, trace_csv(trace, with_wall_time).as_bytes())
}
