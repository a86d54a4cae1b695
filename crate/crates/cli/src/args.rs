//! Parsers for the compact flag syntaxes.

use std::fmt;
use std::str::FromStr;

/// Uniform grid `lo:hi:points`, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| self.lo + step * i as f64)
            .collect()
    }

    /// Geometric spacing between the endpoints, both of which must be positive.
    pub fn geometric(&self) -> Vec<f64> {
        let (a, b) = (self.lo.ln(), self.hi.ln());
        if self.points == 1 {
            return vec![self.lo];
        }
        (0..self.points)
            .map(|i| (a + (b - a) * i as f64 / (self.points - 1) as f64).exp())
            .collect()
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("grid '{s}' is not of the form lo:hi:points"));
        }
        let num = |t: &str| -> Result<f64, String> {
            let v: f64 = t
                .trim()
                .parse()
                .map_err(|_| format!("bad number '{t}' in grid"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("grid bound '{t}' is not finite"))
            }
        };
        let lo = num(parts[0])?;
        let hi = num(parts[1])?;
        let points: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| format!("bad point count '{}' in grid", parts[2]))?;
        if points == 0 {
            return Err("grid needs at least one point".into());
        }
        if points > 1 && hi <= lo {
            return Err(format!(
                "grid upper bound {hi} must exceed lower bound {lo}"
            ));
        }
        Ok(Grid { lo, hi, points })
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.points)
    }
}

/// Inclusive order range `a..b`, or a single order `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Orders {
    pub first: usize,
    pub last: usize,
}

impl Orders {
    pub fn iter(&self) -> impl Iterator<Item = usize> {
        self.first..=self.last
    }
}

impl FromStr for Orders {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |t: &str| -> Result<usize, String> {
            t.trim().parse().map_err(|_| format!("bad order '{t}'"))
        };
        let (first, last) = match s.split_once("..") {
            Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?),
            None => {
                let k = parse(s)?;
                (k, k)
            }
        };
        if first == 0 || last < first {
            return Err(format!("order range '{s}' must satisfy 1 <= first <= last"));
        }
        Ok(Orders { first, last })
    }
}

impl fmt::Display for Orders {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.first, self.last)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g: Grid = "-5:5:201".parse().unwrap();
        let v = g.values();
        assert_eq!(v.len(), 201);
        assert_eq!(v[0], -5.0);
        assert!((v[100]).abs() < 1e-15);
        assert!((v[200] - 5.0).abs() < 1e-15);
        assert!("5:-5:3".parse::<Grid>().is_err());
        assert!("0:1".parse::<Grid>().is_err());
        assert!("0:1:0".parse::<Grid>().is_err());
        assert!("0:inf:3".parse::<Grid>().is_err());
        assert_eq!("2:2:1".parse::<Grid>().unwrap().values(), vec![2.0]);
    }

    #[test]
    fn geometric_grid() {
        let g: Grid = "0.01:100:5".parse().unwrap();
        let v = g.geometric();
        for (a, b) in v.iter().zip([0.01, 0.1, 1.0, 10.0, 100.0]) {
            assert!((a / b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn order_parsing() {
        let k: Orders = "1..4".parse().unwrap();
        assert_eq!(k.iter().collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        assert_eq!("1..=3".parse::<Orders>().unwrap().last, 3);
        assert_eq!("3".parse::<Orders>().unwrap(), Orders { first: 3, last: 3 });
        assert!("0..2".parse::<Orders>().is_err());
        assert!("4..2".parse::<Orders>().is_err());
    }
}
