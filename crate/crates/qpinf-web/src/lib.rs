//! Three workbench operations exported to the browser page in `www/`.

use qpinf::cli::{self, Command, RunConfig};
use qpinf::projective::normalize;
use qpinf::rat;
use wasm_bindgen::prelude::*;

fn run(cfg: RunConfig) -> Result<String, String> {
    let job = cli::resolve(&cfg).map_err(|e| e.to_string())?;
    let rows = cli::execute(&job).map_err(|e| e.to_string())?;
    Ok(cli::to_jsonl(&rows))
}

/// Normal form and level of a comma separated coordinate list such as `2, 4/3, 0`; the leading nonzero coordinate becomes 1.
pub fn normal_form(coords: &str) -> Result<String, String> {
    let raw = coords.split(',').map(|c| rat::parse(c.trim())).collect::<Result<Vec<_>, _>>()?;
    let p = normalize(&raw).map_err(|e| e.to_string())?;
    Ok(serde_json::json!({ "point": p, "display": p.to_string(), "level": p.level() }).to_string())
}

/// Skeleton suite for one named space, as JSONL.
pub fn verify(source: &str, samples: usize, seed: u64) -> Result<String, String> {
    run(RunConfig {
        command: Some(Command::Verify),
        source: Some(source.to_string()),
        samples: Some(samples),
        seed: Some(seed),
        ..RunConfig::default()
    })
}

/// Radical-multiples campaign for every progression with modulus up to `modulus`.
pub fn golomb(modulus: u64, horizon: u64) -> Result<String, String> {
    run(RunConfig {
        command: Some(Command::Golomb),
        modulus: Some(modulus),
        horizon: Some(horizon),
        ..RunConfig::default()
    })
}

#[wasm_bindgen(js_name = normalForm)]
pub fn normal_form_js(coords: &str) -> Result<String, JsValue> {
    normal_form(coords).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = verify)]
pub fn verify_js(source: &str, samples: usize, seed: u64) -> Result<String, JsValue> {
    verify(source, samples, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = golomb)]
pub fn golomb_js(modulus: u64, horizon: u64) -> Result<String, JsValue> {
    golomb(modulus, horizon).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_form_scales_the_leading_coordinate() {
        let out: serde_json::Value = serde_json::from_str(&normal_form("2, 4, 0").unwrap()).unwrap();
        assert_eq!(out["display"], "(1, 2)");
        assert_eq!(out["level"], qpinf::projective::ProjPoint::from_ints(&[1, 2]).unwrap().level());
        assert!(normal_form("0, 0").is_err());
        assert!(normal_form("x").is_err());
    }

    #[test]
    fn small_golomb_campaign_passes() {
        let rows = golomb(4, 200).unwrap();
        assert!(rows.lines().count() > 1);
        assert!(!rows.contains("\"fail\""));
    }
}
