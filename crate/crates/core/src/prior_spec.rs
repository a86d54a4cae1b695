//! Prior specification files.
//!
//! A spec is a TOML document with a `kind` key and the parameters of that
//! kind. `sigma2` may be given to fix the noise variance alongside the prior.
//!
//! ```toml
//! kind = "atoms"            # atoms | gaussian | two-point | sphere
//! points = [-2.0, 0.0, 2.0]
//! probs = [0.25, 0.5, 0.25] # optional, uniform when omitted
//! sigma2 = 1.0              # optional
//! ```
//!
//! `gaussian` takes `mean` (default 0) and `variance`; `two-point` takes `p`,
//! the probability of `+1`; `sphere` takes `radius` and `dim`.

use serde::Deserialize;

use crate::channel::Prior;
use crate::error::{CmeError, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    kind: String,
    points: Option<Vec<f64>>,
    probs: Option<Vec<f64>>,
    mean: Option<f64>,
    variance: Option<f64>,
    p: Option<f64>,
    radius: Option<f64>,
    dim: Option<usize>,
    sigma2: Option<f64>,
}

/// Parsed prior plus the optional noise variance carried by the file.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub prior: Prior,
    pub sigma2: Option<f64>,
}

fn missing(kind: &str, key: &str) -> CmeError {
    CmeError::Argument(format!("prior kind '{kind}' requires key '{key}'"))
}

pub fn parse_prior_spec(text: &str) -> Result<PriorSpec> {
    let raw: RawSpec =
        toml::from_str(text).map_err(|e| CmeError::Argument(format!("prior spec: {e}")))?;
    let kind = raw.kind.as_str();
    let prior = match kind {
        "atoms" => {
            let points = raw.points.ok_or_else(|| missing(kind, "points"))?;
            match raw.probs {
                Some(probs) => Prior::atoms(points, probs)?,
                None => Prior::uniform_atoms(points)?,
            }
        }
        "gaussian" => Prior::gaussian(
            raw.mean.unwrap_or(0.0),
            raw.variance.ok_or_else(|| missing(kind, "variance"))?,
        )?,
        "two-point" => Prior::two_point(raw.p.ok_or_else(|| missing(kind, "p"))?)?,
        "sphere" => Prior::sphere(
            raw.radius.ok_or_else(|| missing(kind, "radius"))?,
            raw.dim.ok_or_else(|| missing(kind, "dim"))?,
        )?,
        other => {
            return Err(CmeError::Argument(format!(
                "unknown prior kind '{other}' (expected atoms, gaussian, two-point or sphere)"
            )))
        }
    };
    if let Some(s) = raw.sigma2 {
        if !(s > 0.0) || !s.is_finite() {
            return Err(CmeError::Argument(format!("sigma2 must be > 0, got {s}")));
        }
    }
    Ok(PriorSpec {
        prior,
        sigma2: raw.sigma2,
    })
}

pub fn read_prior_spec(path: &std::path::Path) -> Result<PriorSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CmeError::Argument(format!("cannot read {}: {e}", path.display())))?;
    parse_prior_spec(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_each_kind() {
        let s = parse_prior_spec("kind = \"atoms\"\npoints = [-2.0, 0.0, 2.0]\nsigma2 = 1.0\n")
            .unwrap();
        assert_eq!(s.sigma2, Some(1.0));
        assert_eq!(s.prior, Prior::uniform_atoms(vec![-2.0, 0.0, 2.0]).unwrap());
        let s = parse_prior_spec("kind = \"gaussian\"\nvariance = 2.0").unwrap();
        assert_eq!(s.prior, Prior::gaussian(0.0, 2.0).unwrap());
        let s = parse_prior_spec("kind = \"two-point\"\np = 0.3").unwrap();
        assert_eq!(s.prior, Prior::two_point(0.3).unwrap());
        let s = parse_prior_spec("kind = \"sphere\"\nradius = 1.5\ndim = 3").unwrap();
        assert_eq!(s.prior, Prior::sphere(1.5, 3).unwrap());
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(parse_prior_spec("kind = \"atoms\"").is_err());
        assert!(parse_prior_spec("kind = \"cauchy\"").is_err());
        assert!(parse_prior_spec("kind = \"two-point\"\np = 0.3\nfoo = 1").is_err());
        assert!(
            parse_prior_spec("kind = \"atoms\"\npoints = [0.0, 1.0]\nprobs = [0.2, 0.2]").is_err()
        );
        assert!(parse_prior_spec("kind = \"two-point\"\np = 0.3\nsigma2 = -1.0").is_err());
    }
}
