//! Right-hand sides: global polynomials or arbitrary closures.

use std::fmt;
use std::sync::Arc;

use crate::error::{Result, SatError};

/// `c x^i y^j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    pub px: u32,
    pub py: u32,
}

#[derive(Clone)]
enum Kind {
    Poly(Vec<Monomial>),
    Func { f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>, quad_degree: usize },
}

/// Source term `f`.
#[derive(Clone)]
pub struct Source {
    kind: Kind,
    label: String,
}

impl fmt::Debug for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Source({})", self.label)
    }
}

impl Source {
    pub fn constant(c: f64) -> Self {
        Self::polynomial(vec![Monomial { coeff: c, px: 0, py: 0 }])
    }

    pub fn polynomial(terms: Vec<Monomial>) -> Self {
        let label = format!("poly:{}", format_terms(&terms));
        Self { kind: Kind::Poly(terms), label }
    }

    /// A non-polynomial source, integrated with rules exact to
    /// `quad_degree` extra degrees.
    pub fn from_fn<F>(label: &str, quad_degree: usize, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self { kind: Kind::Func { f: Arc::new(f), quad_degree }, label: label.to_string() }
    }

    /// Parses `poly:<expr>` where `<expr>` is a sum of terms like `3`,
    /// `-2*x^2*y`, `0.5*y^3`.
    pub fn parse(spec: &str) -> Result<Self> {
        let body = spec
            .strip_prefix("poly:")
            .ok_or_else(|| SatError::InvalidArgument(format!("source '{spec}' must start with 'poly:'")))?;
        let mut terms = Vec::new();
        let cleaned: String = body.chars().filter(|c| !c.is_whitespace()).collect();
        if cleaned.is_empty() {
            return Err(SatError::InvalidArgument("empty polynomial".into()));
        }
        // split before every sign that is not at the start or after '^' or 'e'
        let mut parts = Vec::new();
        let mut cur = String::new();
        let mut prev: Option<char> = None;
        for ch in cleaned.chars() {
            if (ch == '+' || ch == '-') && !cur.is_empty() && !matches!(prev, Some('^') | Some('e') | Some('E') | Some('*')) {
                parts.push(std::mem::take(&mut cur));
            }
            cur.push(ch);
            prev = Some(ch);
        }
        parts.push(cur);
        for part in parts {
            terms.push(parse_term(&part)?);
        }
        let mut s = Self::polynomial(terms);
        s.label = spec.to_string();
        Ok(s)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match &self.kind {
            Kind::Poly(t) => t.iter().map(|m| m.coeff * x.powi(m.px as i32) * y.powi(m.py as i32)).sum(),
            Kind::Func { f, .. } => f(x, y),
        }
    }

    /// Total degree for polynomials, `None` otherwise.
    pub fn degree(&self) -> Option<usize> {
        match &self.kind {
            Kind::Poly(t) => Some(
                t.iter()
                    .filter(|m| m.coeff != 0.0)
                    .map(|m| (m.px + m.py) as usize)
                    .max()
                    .unwrap_or(0),
            ),
            Kind::Func { .. } => None,
        }
    }

    /// Degree used when integrating `f` times polynomials.
    pub fn quadrature_degree(&self) -> usize {
        match &self.kind {
            Kind::Poly(_) => self.degree().unwrap_or(0),
            Kind::Func { quad_degree, .. } => *quad_degree,
        }
    }
}

fn parse_term(s: &str) -> Result<Monomial> {
    let bad = || SatError::InvalidArgument(format!("cannot parse polynomial term '{s}'"));
    let (sign, rest) = match s.strip_prefix('-') {
        Some(r) => (-1.0, r),
        None => (1.0, s.strip_prefix('+').unwrap_or(s)),
    };
    let mut coeff = sign;
    let (mut px, mut py) = (0u32, 0u32);
    for factor in rest.split('*') {
        if factor.is_empty() {
            return Err(bad());
        }
        let (base, exp) = match factor.split_once('^') {
            Some((b, e)) => (b, e.parse::<u32>().map_err(|_| bad())?),
            None => (factor, 1),
        };
        match base {
            "x" => px += exp,
            "y" => py += exp,
            num => coeff *= num.parse::<f64>().map_err(|_| bad())?.powi(exp as i32),
        }
    }
    Ok(Monomial { coeff, px, py })
}

fn format_terms(t: &[Monomial]) -> String {
    t.iter()
        .map(|m| {
            let mut s = format!("{}", m.coeff);
            if m.px > 0 {
                s.push_str(&format!("*x^{}", m.px));
            }
            if m.py > 0 {
                s.push_str(&format!("*y^{}", m.py));
            }
            s
        })
        .collect::<Vec<_>>()
        .join("+")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_polynomials() {
        let s = Source::parse("poly:1").unwrap();
        assert_eq!(s.eval(0.3, 0.7), 1.0);
        assert_eq!(s.degree(), Some(0));
        let s = Source::parse("poly: 2*x^2*y - 3*y + 0.5").unwrap();
        assert!((s.eval(2.0, 3.0) - (24.0 - 9.0 + 0.5)).abs() < 1e-14);
        assert_eq!(s.degree(), Some(3));
        let s = Source::parse("poly:-x").unwrap();
        assert_eq!(s.eval(2.0, 0.0), -2.0);
        assert!(Source::parse("poly:2*z").is_err());
        assert!(Source::parse("1").is_err());
    }
}
