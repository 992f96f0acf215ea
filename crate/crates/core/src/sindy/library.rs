//! Candidate-function libraries.
//!
//! A library is an ordered list of monomial terms over named data channels.
//! Term names are the canonical product form, e.g. `1`, `u_tr1`, `xdot^2`,
//! `xdot*ydot`, `p*Omega_r`; [`Term::parse`] inverts [`Term::name`].

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::SnapshotSet;

/// Data channels a term may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    ThrustX,
    ThrustY,
    ThrustZ,
    Xdot,
    Ydot,
    Zdot,
    P,
    Q,
    R,
    L,
    M,
    N,
    RotorSpeed,
}

impl Channel {
    pub const ALL: [Channel; 13] = [
        Channel::ThrustX,
        Channel::ThrustY,
        Channel::ThrustZ,
        Channel::Xdot,
        Channel::Ydot,
        Channel::Zdot,
        Channel::P,
        Channel::Q,
        Channel::R,
        Channel::L,
        Channel::M,
        Channel::N,
        Channel::RotorSpeed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::ThrustX => "u_tr1",
            Channel::ThrustY => "u_tr2",
            Channel::ThrustZ => "u_tr3",
            Channel::Xdot => "xdot",
            Channel::Ydot => "ydot",
            Channel::Zdot => "zdot",
            Channel::P => "p",
            Channel::Q => "q",
            Channel::R => "r",
            Channel::L => "L",
            Channel::M => "M",
            Channel::N => "N",
            Channel::RotorSpeed => "Omega_r",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Channel::ALL
            .into_iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| Error::UnknownChannel(name.to_string()))
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Column of `set` holding this channel, if logged.
    fn column<'a>(self, set: &'a SnapshotSet) -> Option<nalgebra::DVectorView<'a, f64>> {
        let col = |m: &'a DMatrix<f64>, j: usize| Some(m.column(j));
        match self {
            Channel::ThrustX => col(&set.thrust_input, 0),
            Channel::ThrustY => col(&set.thrust_input, 1),
            Channel::ThrustZ => col(&set.thrust_input, 2),
            Channel::Xdot => col(&set.velocity, 0),
            Channel::Ydot => col(&set.velocity, 1),
            Channel::Zdot => col(&set.velocity, 2),
            Channel::P => col(&set.rates, 0),
            Channel::Q => col(&set.rates, 1),
            Channel::R => col(&set.rates, 2),
            Channel::L => col(&set.moments, 0),
            Channel::M => col(&set.moments, 1),
            Channel::N => col(&set.moments, 2),
            Channel::RotorSpeed => set.rotor_speed.as_ref().map(|r| r.column(0)),
        }
    }
}

/// Product of channel powers. The empty product is the constant `1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Term {
    factors: Vec<(Channel, u32)>,
}

impl Term {
    pub fn constant() -> Self {
        Term { factors: Vec::new() }
    }

    pub fn channel(c: Channel) -> Self {
        Term::product(&[(c, 1)])
    }

    /// Canonical product: factors sorted by channel and repeated channels merged.
    pub fn product(factors: &[(Channel, u32)]) -> Self {
        let mut merged: Vec<(Channel, u32)> = Vec::new();
        let mut sorted = factors.to_vec();
        sorted.sort_by_key(|f| f.0);
        for (c, e) in sorted {
            if e == 0 {
                continue;
            }
            match merged.last_mut() {
                Some(last) if last.0 == c => last.1 += e,
                _ => merged.push((c, e)),
            }
        }
        Term { factors: merged }
    }

    pub fn factors(&self) -> &[(Channel, u32)] {
        &self.factors
    }

    pub fn degree(&self) -> u32 {
        self.factors.iter().map(|f| f.1).sum()
    }

    pub fn name(&self) -> String {
        if self.factors.is_empty() {
            return "1".to_string();
        }
        self.factors
            .iter()
            .map(|&(c, e)| {
                if e == 1 {
                    c.name().to_string()
                } else {
                    format!("{}^{e}", c.name())
                }
            })
            .collect::<Vec<_>>()
            .join("*")
    }

    pub fn parse(name: &str) -> Result<Self> {
        let name = name.trim();
        if name == "1" {
            return Ok(Term::constant());
        }
        let mut factors = Vec::new();
        for part in name.split('*') {
            let (channel, exp) = match part.split_once('^') {
                Some((c, e)) => {
                    let e = e
                        .parse::<u32>()
                        .map_err(|_| Error::UnknownChannel(part.to_string()))?;
                    (c, e)
                }
                None => (part, 1),
            };
            factors.push((Channel::from_name(channel.trim())?, exp));
        }
        let term = Term::product(&factors);
        if term.factors.is_empty() {
            return Err(Error::UnknownChannel(name.to_string()));
        }
        Ok(term)
    }

    /// Value given all channel values indexed by [`Channel::index`].
    pub fn evaluate(&self, channels: &[f64; 13]) -> f64 {
        self.factors
            .iter()
            .map(|&(c, e)| channels[c.index()].powi(e as i32))
            .product()
    }

    /// Partial derivatives with respect to each channel.
    pub fn gradient(&self, channels: &[f64; 13]) -> [f64; 13] {
        let mut grad = [0.0; 13];
        for (k, &(c, e)) in self.factors.iter().enumerate() {
            let mut g = f64::from(e) * channels[c.index()].powi(e as i32 - 1);
            for (m, &(c2, e2)) in self.factors.iter().enumerate() {
                if m != k {
                    g *= channels[c2.index()].powi(e2 as i32);
                }
            }
            grad[c.index()] = g;
        }
        grad
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl Serialize for Term {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        Term::parse(&name).map_err(serde::de::Error::custom)
    }
}

/// Monomials of `channels` from degree 0 up to `degree`.
///
/// Within each degree, pure powers come first, then mixed products. Mixed
/// quadratics follow the cyclic order (a·b, b·c, a·c).
fn polynomial_terms(channels: [Channel; 3], degree: u32) -> Vec<Term> {
    let mut terms = vec![Term::constant()];
    for d in 1..=degree {
        terms.extend(channels.iter().map(|&c| Term::product(&[(c, d)])));
        if d == 2 {
            let [a, b, c] = channels;
            terms.push(Term::product(&[(a, 1), (b, 1)]));
            terms.push(Term::product(&[(b, 1), (c, 1)]));
            terms.push(Term::product(&[(a, 1), (c, 1)]));
        } else if d > 2 {
            for i in 0..=d {
                for j in 0..=(d - i) {
                    let k = d - i - j;
                    if [i, j, k].iter().filter(|&&e| e > 0).count() > 1 {
                        terms.push(Term::product(&[(channels[0], i), (channels[1], j), (channels[2], k)]));
                    }
                }
            }
        }
    }
    terms
}

/// Ordered candidate terms for one block of the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibrarySpec {
    pub terms: Vec<Term>,
    /// Polynomial degree used when the library was generated.
    pub poly_degree: u32,
}

impl LibrarySpec {
    pub fn new(terms: Vec<Term>, poly_degree: u32) -> Result<Self> {
        let spec = LibrarySpec { terms, poly_degree };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.poly_degree < 1 {
            return Err(Error::InvalidParameter("poly_degree must be >= 1".into()));
        }
        for (i, t) in self.terms.iter().enumerate() {
            if self.terms[..i].contains(t) {
                return Err(Error::InvalidParameter(format!("duplicate library term `{t}`")));
            }
        }
        Ok(())
    }

    /// Thrust inputs followed by a polynomial in the inertial velocities.
    ///
    /// Degree 2 gives `[u_tr1, u_tr2, u_tr3, 1, xdot, ydot, zdot, xdot^2,
    /// ydot^2, zdot^2, xdot*ydot, ydot*zdot, xdot*zdot]`.
    pub fn translational(poly_degree: u32) -> Self {
        let mut terms: Vec<Term> = [Channel::ThrustX, Channel::ThrustY, Channel::ThrustZ]
            .into_iter()
            .map(Term::channel)
            .collect();
        terms.extend(polynomial_terms([Channel::Xdot, Channel::Ydot, Channel::Zdot], poly_degree));
        LibrarySpec { terms, poly_degree }
    }

    /// Moments, Euler-equation couplings, and rotor-gyroscopic products
    /// followed by a polynomial in the body rates (couplings not repeated).
    ///
    /// Degree 2 gives `[L, M, N, p*q, q*r, p*r, p*Omega_r, q*Omega_r, 1, p, q,
    /// r, p^2, q^2, r^2]`.
    pub fn rotational(poly_degree: u32) -> Self {
        use Channel::*;
        let mut terms = vec![
            Term::channel(L),
            Term::channel(M),
            Term::channel(N),
            Term::product(&[(P, 1), (Q, 1)]),
            Term::product(&[(Q, 1), (R, 1)]),
            Term::product(&[(P, 1), (R, 1)]),
            Term::product(&[(P, 1), (RotorSpeed, 1)]),
            Term::product(&[(Q, 1), (RotorSpeed, 1)]),
        ];
        for t in polynomial_terms([P, Q, R], poly_degree) {
            if !terms.contains(&t) {
                terms.push(t);
            }
        }
        LibrarySpec { terms, poly_degree }
    }

    pub fn names(&self) -> Vec<String> {
        self.terms.iter().map(Term::name).collect()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.name() == name)
    }
}

/// Evaluated library matrix Ψ (one column per term).
#[derive(Debug, Clone, PartialEq)]
pub struct Library {
    pub matrix: DMatrix<f64>,
    pub names: Vec<String>,
}

pub fn build_library(set: &SnapshotSet, spec: &LibrarySpec) -> Result<Library> {
    let w = set.len();
    let mut matrix = DMatrix::from_element(w, spec.len(), 1.0);
    for (j, term) in spec.terms.iter().enumerate() {
        for &(channel, exp) in term.factors() {
            let column = channel
                .column(set)
                .ok_or_else(|| Error::UnknownChannel(channel.name().to_string()))?;
            for i in 0..w {
                matrix[(i, j)] *= column[i].powi(exp as i32);
            }
        }
    }
    Ok(Library {
        matrix,
        names: spec.names(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{RigidBodyState, Wrench};
    use crate::sim::SnapshotRecorder;
    use nalgebra::Vector3;

    const TRANSLATIONAL_ROWS: [&str; 13] = [
        "u_tr1", "u_tr2", "u_tr3", "1", "xdot", "ydot", "zdot", "xdot^2", "ydot^2", "zdot^2",
        "xdot*ydot", "ydot*zdot", "xdot*zdot",
    ];
    const ROTATIONAL_ROWS: [&str; 15] = [
        "L", "M", "N", "p*q", "q*r", "p*r", "p*Omega_r", "q*Omega_r", "1", "p", "q", "r", "p^2",
        "q^2", "r^2",
    ];

    fn small_set(rows: usize) -> SnapshotSet {
        let mut rec = SnapshotRecorder::default();
        for i in 0..rows {
            let k = i as f64;
            let mut s = RigidBodyState::at_rest(Vector3::zeros(), 0.0);
            s.velocity = Vector3::new(k, 2.0 * k, -k);
            s.body_rates = Vector3::new(1.0 + k, 2.0, 3.0);
            rec.push(0.01 * k, &s, &Wrench::new(-10.0, 0.1 * k, 0.2, 0.3), 50.0);
        }
        rec.finish().unwrap()
    }

    #[test]
    fn default_libraries_match_table_layout() {
        assert_eq!(LibrarySpec::translational(2).names(), TRANSLATIONAL_ROWS);
        assert_eq!(LibrarySpec::rotational(2).names(), ROTATIONAL_ROWS);
    }

    #[test]
    fn higher_degree_adds_cubic_terms() {
        let lib = LibrarySpec::translational(3);
        assert!(lib.index_of("xdot^3").is_some());
        assert!(lib.index_of("xdot*ydot*zdot").is_some());
        assert!(lib.index_of("xdot^2*zdot").is_some());
        // 3 inputs + 1 + 3 + 6 + 10 monomials.
        assert_eq!(lib.len(), 23);
        lib.validate().unwrap();
    }

    #[test]
    fn names_round_trip_through_parse() {
        for spec in [LibrarySpec::translational(3), LibrarySpec::rotational(3)] {
            for t in &spec.terms {
                assert_eq!(&Term::parse(&t.name()).unwrap(), t);
            }
        }
        assert!(matches!(Term::parse("w*p"), Err(Error::UnknownChannel(_))));
    }

    #[test]
    fn built_columns() {
        let set = small_set(5);
        let lib = build_library(&set, &LibrarySpec::translational(2)).unwrap();
        assert_eq!((lib.matrix.nrows(), lib.matrix.ncols()), (5, 13));
        assert!(lib.matrix.column(3).iter().all(|&v| v == 1.0));
        // xdot*ydot at row 3: 3 * 6
        assert_eq!(lib.matrix[(3, 10)], 18.0);

        let rot = build_library(&set, &LibrarySpec::rotational(2)).unwrap();
        // q*r with q = 2, r = 3
        assert_eq!(rot.matrix[(0, 4)], 6.0);
        assert_eq!(rot.matrix[(1, 6)], 2.0 * 50.0);
    }

    #[test]
    fn missing_rotor_speed_is_unknown_channel() {
        let mut set = small_set(4);
        set.rotor_speed = None;
        assert!(matches!(
            build_library(&set, &LibrarySpec::rotational(2)),
            Err(Error::UnknownChannel(c)) if c == "Omega_r"
        ));
    }

    #[test]
    fn term_gradient_matches_product_rule() {
        let t = Term::product(&[(Channel::P, 2), (Channel::RotorSpeed, 1)]);
        let mut ch = [0.0; 13];
        ch[Channel::P.index()] = 3.0;
        ch[Channel::RotorSpeed.index()] = 5.0;
        assert_eq!(t.evaluate(&ch), 45.0);
        let g = t.gradient(&ch);
        assert_eq!(g[Channel::P.index()], 30.0);
        assert_eq!(g[Channel::RotorSpeed.index()], 9.0);
    }

    #[test]
    fn duplicate_terms_are_rejected() {
        let t = Term::channel(Channel::P);
        assert!(LibrarySpec::new(vec![t.clone(), t], 1).is_err());
    }
}
