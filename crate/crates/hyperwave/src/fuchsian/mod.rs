//! Cocompact Fuchsian groups given by side-pairing generators of a Dirichlet
//! domain centred at `i`, together with their finite covers.
//!
//! Enumeration walks the tiling: tiles `hD` and `hgD` are adjacent for every
//! generator letter `g`, so a breadth-first search over right
//! multiplications that keeps tiles whose centre `h·i` lies within
//! `t + R` of the base point (with `R` the circumradius of `D`) reaches every
//! element `δ` with `d(x, δy) ≤ t` for `x, y ∈ D`.

mod cover;
mod file;

pub use cover::{CoverDescriptor, LatticeBall, Perm, SurfacePoint};
pub use file::{CoverSpec, SurfaceFile};

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use rand::Rng;

use crate::error::{Error, Result};
use crate::hypgeo::{ball_volume, dist, point_to_polar, HPoint, Moebius};

/// Default hard cap on enumeration radii.
pub const DEFAULT_CAP: f64 = 14.0;

const QUANTUM: f64 = 1e-7;
const TIE: f64 = 1e-10;
const RELATOR_TOL: f64 = 1e-8;

/// One letter of a word: generator index and whether it is inverted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Letter {
    pub generator: usize,
    pub inverse: bool,
}

impl Letter {
    fn index(self) -> usize {
        2 * self.generator + usize::from(self.inverse)
    }
}

/// A node of the tiling search: the element, its parent and the letter
/// appended on the right.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Node {
    pub m: Moebius,
    pub parent: u32,
    pub letter: u8,
}

#[derive(Debug, Clone)]
pub struct FuchsianGroup {
    labels: Vec<String>,
    generators: Vec<Moebius>,
    relator: Vec<Letter>,
    letters: Vec<Moebius>,
    domain_radius: f64,
    probe: Vec<(Moebius, Vec<u8>)>,
    cap: f64,
}

impl FuchsianGroup {
    /// Build and validate a group from labelled generators and a relator word.
    ///
    /// Labels must start with a lowercase letter; in the relator a leading
    /// capital denotes the inverse (`A1` is `a1⁻¹`).
    pub fn new(labels: Vec<String>, generators: Vec<Moebius>, relator: &str) -> Result<Self> {
        if labels.len() != generators.len() || labels.is_empty() {
            return Err(Error::InvalidParams("labels and generators differ in length".into()));
        }
        for l in &labels {
            if !l.chars().next().is_some_and(|c| c.is_lowercase()) {
                return Err(Error::InvalidParams(format!("label {l:?} must start lowercase")));
            }
        }
        for (l, g) in labels.iter().zip(&generators) {
            if !g.is_hyperbolic() {
                return Err(Error::InvalidParams(format!(
                    "generator {l} is not hyperbolic (trace {})",
                    g.trace()
                )));
            }
        }
        let relator = parse_word(&labels, relator)?;
        let mut letters = Vec::with_capacity(2 * generators.len());
        for g in &generators {
            letters.push(*g);
            letters.push(g.inverse());
        }
        let mut group = FuchsianGroup {
            labels,
            generators,
            relator,
            letters,
            domain_radius: 0.0,
            probe: Vec::new(),
            cap: DEFAULT_CAP,
        };
        let defect = group.word(&group.relator).identity_defect();
        if defect > RELATOR_TOL {
            return Err(Error::RelatorViolated { defect });
        }
        group.domain_radius = group.side_polygon_radius()?;
        let reach = 3.0 * group.domain_radius;
        let nodes = group.tiles(HPoint::I, reach);
        let limit = 2.0 * group.domain_radius + TIE;
        group.probe = nodes
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, n)| n.m.displacement_at_i() <= limit)
            .map(|(k, n)| (n.m, word_of(&nodes, k)))
            .collect();
        Ok(group)
    }

    pub fn with_cap(mut self, cap: f64) -> Self {
        self.cap = cap;
        self
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn generators(&self) -> &[Moebius] {
        &self.generators
    }

    pub fn relator(&self) -> &[Letter] {
        &self.relator
    }

    pub fn relator_text(&self) -> String {
        self.relator
            .iter()
            .map(|l| {
                let s = &self.labels[l.generator];
                if l.inverse {
                    let mut c = s.chars();
                    let first = c.next().unwrap_or_default().to_uppercase();
                    format!("{first}{}", c.as_str())
                } else {
                    s.clone()
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Genus from the number of generators (2g side pairings).
    pub fn genus(&self) -> usize {
        self.generators.len() / 2
    }

    /// Gauss–Bonnet area `4π(g − 1)`.
    pub fn area(&self) -> f64 {
        4.0 * PI * (self.genus() as f64 - 1.0)
    }

    /// Circumradius of the Dirichlet domain about `i` (a slight overestimate).
    pub fn domain_radius(&self) -> f64 {
        self.domain_radius
    }

    /// Product of a word, left to right.
    pub fn word(&self, w: &[Letter]) -> Moebius {
        w.iter().fold(Moebius::IDENTITY, |acc, l| acc * self.letters[l.index()])
    }

    /// Entrywise deviation of the relator product from ±identity.
    pub fn relator_defect(&self) -> f64 {
        self.word(&self.relator).identity_defect()
    }

    // Circumradius of the polygon cut out by the letters' bisectors. The
    // Dirichlet domain is contained in it, so this bounds R from above once
    // the sampling margin is added.
    fn side_polygon_radius(&self) -> Result<f64> {
        let faces: Vec<(f64, f64)> = self
            .letters
            .iter()
            .map(|g| {
                let p = g.apply(HPoint::I);
                let d = dist(HPoint::I, p);
                let (_, phi) = point_to_polar(HPoint::I, 0.0, p);
                ((0.5 * d).tanh(), phi)
            })
            .collect();
        let samples = 5760;
        let mut worst: f64 = 0.0;
        for k in 0..samples {
            let theta = TAU * k as f64 / samples as f64;
            let mut best = f64::INFINITY;
            for &(th, phi) in &faces {
                let c = (theta - phi).cos();
                if c > th {
                    let s = (th / c).atanh();
                    best = best.min(s);
                }
            }
            if !best.is_finite() {
                return Err(Error::InvalidParams(
                    "generators do not bound a compact polygon around i".into(),
                ));
            }
            worst = worst.max(best);
        }
        Ok(worst + 0.02)
    }

    /// Breadth-first search over tiles `hD` with `d(x0, h·i) ≤ reach`.
    pub(crate) fn tiles(&self, x0: HPoint, reach: f64) -> Vec<Node> {
        let mut nodes = vec![Node { m: Moebius::IDENTITY, parent: u32::MAX, letter: u8::MAX }];
        let mut seen: HashMap<[i64; 4], u32> = HashMap::new();
        seen.insert(quantize(&Moebius::IDENTITY), 0);
        let mut head = 0;
        while head < nodes.len() {
            let h = nodes[head].m;
            for l in 0..self.letters.len() {
                let m = h * self.letters[l];
                if dist(x0, m.apply(HPoint::I)) > reach + TIE {
                    continue;
                }
                if lookup(&seen, &m).is_some() {
                    continue;
                }
                seen.insert(quantize(&m), nodes.len() as u32);
                nodes.push(Node { m, parent: head as u32, letter: l as u8 });
            }
            head += 1;
        }
        nodes
    }

    /// Greedy reduction into the Dirichlet domain.
    ///
    /// Returns `(z0, p, word)` with `z0 = p·z` in the closed domain (boundary
    /// points resolved by the tie-break) and `p` the product of `word` read
    /// right to left, i.e. `p = w[k−1]·…·w[0]`.
    pub fn reduce(&self, z: HPoint) -> (HPoint, Moebius, Vec<u8>) {
        let mut z = z;
        let mut p = Moebius::IDENTITY;
        let mut word = Vec::new();
        loop {
            let d0 = dist(HPoint::I, z);
            let mut best: Option<(f64, usize)> = None;
            for (l, g) in self.letters.iter().enumerate() {
                let d = dist(HPoint::I, g.apply(z));
                if d < d0 - 1e-13 * (1.0 + d0) && best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, l));
                }
            }
            if let Some((_, l)) = best {
                let g = self.letters[l];
                z = g.apply(z);
                p = g * p;
                word.push(l as u8);
                continue;
            }
            if d0 > self.domain_radius {
                // Letters alone stalled outside the domain: fall back to the probe ball.
                if let Some((g, w)) = self
                    .probe
                    .iter()
                    .filter(|(g, _)| dist(HPoint::I, g.apply(z)) < d0 - 1e-13 * (1.0 + d0))
                    .min_by(|a, b| {
                        dist(HPoint::I, a.0.apply(z)).total_cmp(&dist(HPoint::I, b.0.apply(z)))
                    })
                {
                    z = g.apply(z);
                    p = *g * p;
                    word.extend(w.iter().rev());
                    continue;
                }
            }
            break;
        }
        for _ in 0..8 {
            match self.tie_break_move(z) {
                Some(k) => {
                    let (g, w) = &self.probe[k];
                    z = g.apply(z);
                    p = *g * p;
                    word.extend(w.iter().rev());
                }
                None => break,
            }
        }
        (z, p, word)
    }

    // Among probe elements tying with the identity at z, one whose entries
    // compare below those of its inverse signals that z is not the canonical
    // representative.
    fn tie_break_move(&self, z: HPoint) -> Option<usize> {
        let d0 = dist(HPoint::I, z);
        self.probe.iter().position(|(g, _)| {
            let d = dist(HPoint::I, g.apply(z));
            (d - d0).abs() <= TIE && lex_less(g, &g.inverse())
        })
    }

    /// Dirichlet domain membership using the precomputed probe ball
    /// (all nontrivial elements moving `i` by at most twice the circumradius).
    pub fn dirichlet_contains(&self, z: HPoint) -> bool {
        let d0 = dist(HPoint::I, z);
        if d0 > self.domain_radius {
            return false;
        }
        let mut tied = false;
        for (g, _) in &self.probe {
            let d = dist(HPoint::I, g.apply(z));
            if d < d0 - TIE {
                return false;
            }
            if d <= d0 + TIE && lex_less(g, &g.inverse()) {
                tied = true;
            }
        }
        !tied
    }

    /// Membership test against an explicitly enumerated probe ball.
    pub fn dirichlet_domain_membership(&self, z: HPoint, probe_radius: f64) -> Result<bool> {
        if probe_radius > self.cap {
            return Err(Error::CapExceeded { radius: probe_radius, cap: self.cap });
        }
        let d0 = dist(HPoint::I, z);
        let nodes = self.tiles(HPoint::I, probe_radius + self.domain_radius);
        for n in nodes.iter().skip(1) {
            if n.m.displacement_at_i() > probe_radius {
                continue;
            }
            let d = dist(HPoint::I, n.m.apply(z));
            if d < d0 - TIE || (d <= d0 + TIE && lex_less(&n.m, &n.m.inverse())) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Uniform point in the Dirichlet domain for the hyperbolic area measure.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> HPoint {
        loop {
            let z = self.disc_point(rng.random::<f64>(), rng.random::<f64>());
            if self.dirichlet_contains(z) {
                return z;
            }
        }
    }

    /// Maps `(u, v) ∈ [0,1)²` area-uniformly onto the disc of radius R about `i`.
    pub fn disc_point(&self, u: f64, v: f64) -> HPoint {
        let r = disc_radius(self.domain_radius, u);
        crate::hypgeo::polar_to_point(HPoint::I, 0.0, r, TAU * v)
    }

    /// Area of the disc that [`FuchsianGroup::disc_point`] covers.
    pub fn disc_area(&self) -> f64 {
        ball_volume(self.domain_radius).unwrap_or(f64::NAN)
    }
}

fn disc_radius(big_r: f64, u: f64) -> f64 {
    // cosh r − 1 = u (cosh R − 1), written with sinh² to stay accurate near 0.
    let s = (0.5 * big_r).sinh() * u.sqrt();
    2.0 * s.asinh()
}

/// The Bolza surface: the regular octagon with angles π/4.
///
/// Generators are `γ_k = R_k γ₀ R_k⁻¹` for rotations `R_k` about `i` by
/// `kπ/4`, `k = 0..3`, labelled `a1, b1, a2, b2`. The opposite side pairing
/// `γ_{k+4}` equals `γ_k⁻¹`. With these labels the octagon relation reads
/// `a1 B1 a2 B2 A1 b1 A2 b2`.
pub fn bolza_group() -> FuchsianGroup {
    let s2 = 2f64.sqrt();
    let q = (2.0 + 2.0 * s2).sqrt();
    let g0 = Moebius::new(1.0 + s2, q, q, 1.0 + s2).expect("unimodular");
    let gens = (0..4)
        .map(|k| {
            let r = Moebius::rotation(k as f64 * PI / 4.0);
            r * g0 * r.inverse()
        })
        .collect();
    let labels = ["a1", "b1", "a2", "b2"].map(String::from).to_vec();
    FuchsianGroup::new(labels, gens, BOLZA_RELATOR).expect("Bolza group is valid")
}

pub const BOLZA_RELATOR: &str = "a1 B1 a2 B2 A1 b1 A2 b2";

/// Parse a whitespace-separated word; a capitalised label is the inverse.
pub fn parse_word(labels: &[String], text: &str) -> Result<Vec<Letter>> {
    text.split_whitespace()
        .map(|tok| {
            let mut chars = tok.chars();
            let first = chars.next().unwrap_or_default();
            let inverse = first.is_uppercase();
            let lower: String = first.to_lowercase().chain(chars).collect();
            labels
                .iter()
                .position(|l| *l == lower)
                .map(|generator| Letter { generator, inverse })
                .ok_or_else(|| Error::InvalidParams(format!("unknown letter {tok:?} in word")))
        })
        .collect()
}

pub(crate) fn word_of(nodes: &[Node], mut k: usize) -> Vec<u8> {
    let mut w = Vec::new();
    while k != 0 {
        w.push(nodes[k].letter);
        k = nodes[k].parent as usize;
    }
    w.reverse();
    w
}

fn quantize(m: &Moebius) -> [i64; 4] {
    m.entries().map(|e| (e / QUANTUM).round() as i64)
}

/// Lookup tolerant of entries that straddle a quantization boundary.
pub(crate) fn lookup(seen: &HashMap<[i64; 4], u32>, m: &Moebius) -> Option<u32> {
    let e = m.entries();
    let q = e.map(|v| v / QUANTUM);
    let base = q.map(|v| v.round() as i64);
    if let Some(&k) = seen.get(&base) {
        return Some(k);
    }
    let alt: Vec<Option<i64>> = (0..4)
        .map(|i| {
            let f = q[i] - base[i] as f64;
            if f.abs() > 0.499 {
                Some(base[i] + f.signum() as i64)
            } else {
                None
            }
        })
        .collect();
    for mask in 1u8..16 {
        let mut key = base;
        let mut ok = true;
        for i in 0..4 {
            if mask & (1 << i) != 0 {
                match alt[i] {
                    Some(a) => key[i] = a,
                    None => ok = false,
                }
            }
        }
        if ok {
            if let Some(&k) = seen.get(&key) {
                return Some(k);
            }
        }
    }
    // Sign normalization is ambiguous when the leading entry is near zero.
    if e[0].abs() < 1e-6 {
        let neg = e.map(|v| (-v / QUANTUM).round() as i64);
        if let Some(&k) = seen.get(&neg) {
            return Some(k);
        }
    }
    None
}

fn lex_less(g: &Moebius, h: &Moebius) -> bool {
    let (a, b) = (g.entries(), h.entries());
    for i in 0..4 {
        if (a[i] - b[i]).abs() > 1e-9 {
            return a[i] < b[i];
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bolza_relator_and_traces() {
        let g = bolza_group();
        assert!(g.relator_defect() < 1e-8);
        let s2 = 2f64.sqrt();
        assert_abs_diff_eq!(g.generators()[0].trace(), 2.0 * (1.0 + s2), epsilon = 1e-12);
        for m in g.generators() {
            assert_abs_diff_eq!(m.trace().abs(), 4.8284, epsilon = 1e-4);
        }
        assert_eq!(g.relator_text(), BOLZA_RELATOR);
    }

    #[test]
    fn bolza_circumradius() {
        let g = bolza_group();
        let s2 = 2f64.sqrt();
        let exact = ((1.0 + s2) * (1.0 + s2)).acosh();
        assert!(g.domain_radius() >= exact);
        assert!(g.domain_radius() < exact + 0.05);
    }

    #[test]
    fn rejects_bad_relator() {
        let g = bolza_group();
        let r = FuchsianGroup::new(g.labels().to_vec(), g.generators().to_vec(), "a1 b1 A1 B1 a2 b2 A2 B2");
        assert!(matches!(r, Err(Error::RelatorViolated { .. })));
    }

    #[test]
    fn membership_examples() {
        let g = bolza_group();
        assert!(g.dirichlet_contains(HPoint::I));
        let img = g.generators()[0].apply(HPoint::I);
        assert!(!g.dirichlet_contains(img));
        assert!(g.dirichlet_domain_membership(HPoint::I, 5.0).unwrap());
        assert!(!g.dirichlet_domain_membership(img, 5.0).unwrap());
    }

    #[test]
    fn reduction_lands_in_domain() {
        let g = bolza_group();
        let z = HPoint::new(3.7, 0.002).unwrap();
        let (z0, p, _) = g.reduce(z);
        assert!(g.dirichlet_contains(z0));
        let back = p.apply(z);
        assert_abs_diff_eq!(dist(back, z0), 0.0, epsilon = 1e-8);
    }
}
