use super::{Knot, PiecewiseLinear, TradeoffCurve};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use std::fmt::Write as _;

/// Writes knots as `alpha,beta` CSV with 17 significant digits.
pub fn write_csv(knots: &[Knot]) -> String {
    let mut s = String::with_capacity(knots.len() * 48 + 16);
    s.push_str("alpha,beta\n");
    for k in knots {
        let _ = writeln!(s, "{:.16e},{:.16e}", k.alpha, k.beta);
    }
    s
}

/// Parses `alpha,beta` CSV into knots.
pub fn read_csv(text: &str) -> Result<Vec<Knot>> {
    let mut lines = text.lines();
    match lines.next().map(str::trim) {
        Some("alpha,beta") => {}
        other => {
            return Err(Error::InvalidCurve(format!(
                "expected header `alpha,beta`, found {other:?}"
            )))
        }
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| Error::InvalidCurve(format!("row {}: missing comma", n + 2)))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidCurve(format!("row {}: {e}", n + 2)))
        };
        out.push(Knot::new(parse(a)?, parse(b)?));
    }
    Ok(out)
}

/// JSON form `{"variant": ..., "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveJson {
    pub variant: String,
    pub params: Map<String, Value>,
}

impl From<&TradeoffCurve> for CurveJson {
    fn from(c: &TradeoffCurve) -> Self {
        let (variant, params) = match c {
            TradeoffCurve::Perfect => ("perfect", json!({})),
            TradeoffCurve::Gaussian { mu } => ("gaussian", json!({ "mu": mu })),
            TradeoffCurve::EpsDelta { eps, delta } => {
                ("eps_delta", json!({ "eps": eps, "delta": delta }))
            }
            TradeoffCurve::PiecewiseLinear(pl) => {
                let knots: Vec<[f64; 2]> = pl.knots().iter().map(|k| [k.alpha, k.beta]).collect();
                ("piecewise_linear", json!({ "knots": knots }))
            }
        };
        CurveJson {
            variant: variant.to_string(),
            params: params.as_object().cloned().unwrap_or_default(),
        }
    }
}

impl TryFrom<CurveJson> for TradeoffCurve {
    type Error = Error;

    fn try_from(j: CurveJson) -> Result<Self> {
        let num = |k: &str| {
            j.params
                .get(k)
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::InvalidCurve(format!("missing numeric param `{k}`")))
        };
        match j.variant.as_str() {
            "perfect" => Ok(TradeoffCurve::Perfect),
            "gaussian" => TradeoffCurve::gaussian(num("mu")?),
            "eps_delta" => TradeoffCurve::eps_delta(num("eps")?, num("delta")?),
            "piecewise_linear" => {
                let knots: Vec<[f64; 2]> = j
                    .params
                    .get("knots")
                    .cloned()
                    .map(serde_json::from_value)
                    .transpose()
                    .map_err(|e| Error::InvalidCurve(e.to_string()))?
                    .ok_or_else(|| Error::InvalidCurve("missing `knots`".into()))?;
                let pl = PiecewiseLinear::from_knots(
                    knots.into_iter().map(|[a, b]| Knot::new(a, b)).collect(),
                );
                TradeoffCurve::piecewise(pl.knots().to_vec())
            }
            other => Err(Error::InvalidCurve(format!("unknown variant `{other}`"))),
        }
    }
}
