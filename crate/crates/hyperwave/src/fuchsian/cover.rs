use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FuchsianGroup, Node};
use crate::error::{Error, Result};
use crate::hypgeo::{dist, HPoint, Moebius};
use crate::Estimate;

/// A permutation of `{0..m−1}`; composition `(p∘q)(s) = p(q(s))`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Perm(Vec<u32>);

impl Perm {
    pub fn identity(m: usize) -> Self {
        Perm((0..m as u32).collect())
    }

    pub fn from_images(images: Vec<usize>) -> Result<Self> {
        let m = images.len();
        let mut hit = vec![false; m];
        for &s in &images {
            if s >= m || hit[s] {
                return Err(Error::InvalidParams(format!("{images:?} is not a permutation")));
            }
            hit[s] = true;
        }
        Ok(Perm(images.into_iter().map(|s| s as u32).collect()))
    }

    /// The cyclic shift `s ↦ s + k mod m`.
    pub fn shift(m: usize, k: usize) -> Self {
        Perm((0..m).map(|s| ((s + k) % m) as u32).collect())
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn apply(&self, s: usize) -> usize {
        self.0[s] as usize
    }

    pub fn images(&self) -> Vec<usize> {
        self.0.iter().map(|&s| s as usize).collect()
    }

    pub fn compose(&self, q: &Perm) -> Perm {
        Perm(q.0.iter().map(|&s| self.0[s as usize]).collect())
    }

    pub fn inverse(&self) -> Perm {
        let mut inv = vec![0u32; self.0.len()];
        for (s, &t) in self.0.iter().enumerate() {
            inv[t as usize] = s as u32;
        }
        Perm(inv)
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(s, &t)| s as u32 == t)
    }

    pub fn has_fixed_point(&self) -> bool {
        self.0.iter().enumerate().any(|(s, &t)| s as u32 == t)
    }
}

/// A point of the cover: a base-domain representative and a sheet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub z: HPoint,
    pub sheet: usize,
}

impl SurfacePoint {
    pub fn new(z: HPoint, sheet: usize) -> Self {
        SurfacePoint { z, sheet }
    }
}

/// All elements `γ` with `d(x, γy) ≤ t`, each with its sheet permutation.
#[derive(Debug, Clone)]
pub struct LatticeBall {
    pub x: HPoint,
    pub y: HPoint,
    pub t: f64,
    pub elements: Vec<(Moebius, Perm)>,
}

impl LatticeBall {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Elements carrying sheet `from` of `y` to sheet `to` of `x`.
    pub fn connecting(&self, to: usize, from: usize) -> impl Iterator<Item = &(Moebius, Perm)> {
        self.elements.iter().filter(move |(_, p)| p.apply(from) == to)
    }
}

type Neighborhood = Arc<Vec<(Moebius, Perm)>>;

/// A finite cover `Γ'\ℍ` of the base surface, described by the permutation
/// action of the base generators on the sheets. Points of the cover are
/// pairs `(z, s)` modulo `γ·(z, s) = (γz, σ(γ)s)`.
#[derive(Debug)]
pub struct CoverDescriptor {
    base: Arc<FuchsianGroup>,
    perms: Vec<Perm>,
    letter_perms: Vec<Perm>,
    neighborhoods: RwLock<HashMap<u64, Neighborhood>>,
}

impl Clone for CoverDescriptor {
    fn clone(&self) -> Self {
        CoverDescriptor {
            base: self.base.clone(),
            perms: self.perms.clone(),
            letter_perms: self.letter_perms.clone(),
            neighborhoods: RwLock::new(HashMap::new()),
        }
    }
}

impl CoverDescriptor {
    /// Validate a permutation assignment and build the cover.
    pub fn new(base: Arc<FuchsianGroup>, perms: Vec<Perm>) -> Result<Self> {
        if perms.len() != base.generators().len() {
            return Err(Error::InvalidParams("one permutation per generator required".into()));
        }
        let m = perms[0].degree();
        if m == 0 || perms.iter().any(|p| p.degree() != m) {
            return Err(Error::InvalidParams("permutations must share a positive degree".into()));
        }
        let mut letter_perms = Vec::with_capacity(2 * perms.len());
        for p in &perms {
            letter_perms.push(p.clone());
            letter_perms.push(p.inverse());
        }
        let cover = CoverDescriptor { base, perms, letter_perms, neighborhoods: RwLock::new(HashMap::new()) };
        let image = cover
            .base
            .relator()
            .iter()
            .fold(Perm::identity(m), |acc, l| acc.compose(&cover.letter_perms[l.index()]));
        if !image.is_identity() {
            return Err(Error::RelatorViolated { defect: 1.0 });
        }
        let orbit = cover.orbit_size();
        if orbit != m {
            return Err(Error::NotTransitive { orbit, degree: m });
        }
        Ok(cover)
    }

    /// Build from a label → images map.
    pub fn from_map(base: Arc<FuchsianGroup>, degree: usize, map: &BTreeMap<String, Vec<usize>>) -> Result<Self> {
        let perms = base
            .labels()
            .iter()
            .map(|l| match map.get(l) {
                Some(images) if images.len() == degree => Perm::from_images(images.clone()),
                Some(_) => Err(Error::InvalidParams(format!("permutation for {l} has wrong length"))),
                None => Ok(Perm::identity(degree)),
            })
            .collect::<Result<Vec<_>>>()?;
        for k in map.keys() {
            if !base.labels().contains(k) {
                return Err(Error::InvalidParams(format!("unknown label {k:?} in cover")));
            }
        }
        Self::new(base, perms)
    }

    pub fn trivial(base: Arc<FuchsianGroup>) -> Self {
        let n = base.generators().len();
        Self::new(base, vec![Perm::identity(1); n]).expect("trivial cover is valid")
    }

    /// Cyclic `Z/m` cover: the first generator shifts sheets, the rest act trivially.
    pub fn cyclic(base: Arc<FuchsianGroup>, m: usize) -> Result<Self> {
        let n = base.generators().len();
        let mut perms = vec![Perm::identity(m); n];
        perms[0] = Perm::shift(m, 1);
        Self::new(base, perms)
    }

    /// Regular cover with deck group `G = ⟨g, h⟩` acting on itself by left
    /// multiplication: `a1 ↦ g, b1 ↦ h, a2 ↦ h, b2 ↦ g`.
    pub fn regular(base: Arc<FuchsianGroup>, g: &Perm, h: &Perm) -> Result<Self> {
        if base.generators().len() != 4 {
            return Err(Error::InvalidParams("regular recipe is defined for genus 2".into()));
        }
        let elements = generated_group(g, h);
        let index: HashMap<&Perm, usize> = elements.iter().enumerate().map(|(k, p)| (p, k)).collect();
        let left = |x: &Perm| -> Perm {
            let images = elements.iter().map(|e| index[&x.compose(e)] as u32).collect();
            Perm(images)
        };
        let (lg, lh) = (left(g), left(h));
        Self::new(base, vec![lg.clone(), lh.clone(), lh, lg])
    }

    pub fn base(&self) -> &FuchsianGroup {
        &self.base
    }

    pub fn base_arc(&self) -> Arc<FuchsianGroup> {
        self.base.clone()
    }

    pub fn degree(&self) -> usize {
        self.perms[0].degree()
    }

    pub fn perms(&self) -> &[Perm] {
        &self.perms
    }

    /// Riemann–Hurwitz for unramified covers: `m(g − 1) + 1`.
    pub fn genus(&self) -> usize {
        self.degree() * (self.base.genus() - 1) + 1
    }

    pub fn volume(&self) -> f64 {
        self.degree() as f64 * self.base.area()
    }

    pub fn cap(&self) -> f64 {
        self.base.cap()
    }

    fn orbit_size(&self) -> usize {
        let m = self.degree();
        let mut seen = vec![false; m];
        seen[0] = true;
        let mut stack = vec![0];
        while let Some(s) = stack.pop() {
            for p in &self.letter_perms {
                let t = p.apply(s);
                if !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        seen.iter().filter(|&&b| b).count()
    }

    // Reduction words are stored rightmost-first.
    fn reduction_perm(&self, word: &[u8]) -> Perm {
        word.iter()
            .fold(Perm::identity(self.degree()), |acc, &l| self.letter_perms[l as usize].compose(&acc))
    }

    fn node_perms(&self, nodes: &[Node]) -> Vec<Perm> {
        let mut out: Vec<Perm> = Vec::with_capacity(nodes.len());
        out.push(Perm::identity(self.degree()));
        for n in &nodes[1..] {
            let p = out[n.parent as usize].compose(&self.letter_perms[n.letter as usize]);
            out.push(p);
        }
        out
    }

    /// Reduce a point of ℍ with a sheet label to the base domain.
    pub fn reduce(&self, p: SurfacePoint) -> (SurfacePoint, Moebius, Perm) {
        let (z0, g, word) = self.base.reduce(p.z);
        let sigma = self.reduction_perm(&word);
        (SurfacePoint { z: z0, sheet: sigma.apply(p.sheet) }, g, sigma)
    }

    /// Every `γ` with `d(x, γy) ≤ t`, with its permutation.
    pub fn enumerate_ball(&self, x: HPoint, y: HPoint, t: f64) -> Result<LatticeBall> {
        if !(t >= 0.0) {
            return Err(Error::InvalidParams(format!("radius must be >= 0, got {t}")));
        }
        if t > self.cap() {
            return Err(Error::CapExceeded { radius: t, cap: self.cap() });
        }
        let (x0, p, pw) = self.base.reduce(x);
        let (y0, q, qw) = self.base.reduce(y);
        let nodes = self.base.tiles(x0, t + self.base.domain_radius());
        let perms = self.node_perms(&nodes);
        let (sp_inv, sq) = (self.reduction_perm(&pw).inverse(), self.reduction_perm(&qw));
        let p_inv = p.inverse();
        let mut elements = Vec::new();
        for (n, s) in nodes.iter().zip(perms) {
            if dist(x0, n.m.apply(y0)) <= t {
                // d(x, γy) = d(x0, pγq⁻¹y0) so γ = p⁻¹ δ q.
                let g = p_inv * n.m * q;
                elements.push((g, sp_inv.compose(&s).compose(&sq)));
            }
        }
        Ok(LatticeBall { x, y, t, elements })
    }

    /// Half the shortest nontrivial loop through `p` on the cover, found by
    /// doubling the search radius until a sheet-preserving element appears.
    pub fn injectivity_radius(&self, p: SurfacePoint) -> Result<f64> {
        let mut t: f64 = 1.0;
        loop {
            let t_eff = t.min(self.cap());
            let ball = self.enumerate_ball(p.z, p.z, t_eff)?;
            let best = ball
                .elements
                .iter()
                .filter(|(g, s)| g.identity_defect() > 1e-7 && s.apply(p.sheet) == p.sheet)
                .map(|(g, _)| dist(p.z, g.apply(p.z)))
                .fold(f64::INFINITY, f64::min);
            if best.is_finite() {
                return Ok(0.5 * best);
            }
            if t_eff >= self.cap() {
                return Err(Error::CapExceeded { radius: 2.0 * t, cap: self.cap() });
            }
            t *= 2.0;
        }
    }

    /// Length of the shortest closed geodesic of the cover.
    ///
    /// A conjugacy class of `Γ'` has a representative whose axis meets the
    /// base domain, and such a representative moves `i` by at most
    /// `ℓ + 2R`; the search radius grows until that bound is covered.
    pub fn systole(&self) -> Result<f64> {
        let r2 = 2.0 * self.base.domain_radius();
        let mut t = r2 + 1.0;
        loop {
            let t_eff = t.min(self.cap());
            let nodes = self.base.tiles(HPoint::I, t_eff + self.base.domain_radius());
            let perms = self.node_perms(&nodes);
            let best = nodes
                .iter()
                .zip(&perms)
                .skip(1)
                .filter(|(n, s)| n.m.displacement_at_i() <= t_eff && s.has_fixed_point())
                .map(|(n, _)| n.m.translation_length())
                .fold(f64::INFINITY, f64::min);
            if best.is_finite() && best + r2 <= t_eff {
                return Ok(best);
            }
            if t_eff >= self.cap() {
                return if best.is_finite() {
                    Ok(best)
                } else {
                    Err(Error::CapExceeded { radius: t, cap: self.cap() })
                };
            }
            t = if best.is_finite() { best + r2 } else { t + 2.0 };
        }
    }

    /// Distance on the cover, or `+∞` if no lift lies within `cutoff`.
    pub fn quotient_dist(&self, p: SurfacePoint, q: SurfacePoint, cutoff: f64) -> Result<f64> {
        let ball = self.enumerate_ball(p.z, q.z, cutoff)?;
        Ok(ball
            .connecting(p.sheet, q.sheet)
            .map(|(g, _)| dist(p.z, g.apply(q.z)))
            .fold(f64::INFINITY, f64::min))
    }

    /// Elements moving `i` by at most `radius`, shared between callers.
    pub fn neighborhood(&self, radius: f64) -> Result<Neighborhood> {
        if radius > self.cap() {
            return Err(Error::CapExceeded { radius, cap: self.cap() });
        }
        let key = radius.to_bits();
        if let Some(n) = self.neighborhoods.read().expect("cache lock").get(&key) {
            return Ok(n.clone());
        }
        let nodes = self.base.tiles(HPoint::I, radius + self.base.domain_radius());
        let perms = self.node_perms(&nodes);
        let list: Vec<(Moebius, Perm)> = nodes
            .iter()
            .zip(perms)
            .filter(|(n, _)| n.m.displacement_at_i() <= radius)
            .map(|(n, p)| (n.m, p))
            .collect();
        let arc = Arc::new(list);
        self.neighborhoods.write().expect("cache lock").insert(key, arc.clone());
        Ok(arc)
    }

    /// Neighbourhood lists computed so far, by radius.
    pub fn cached_neighborhoods(&self) -> Vec<(f64, Vec<(Moebius, Perm)>)> {
        let map = self.neighborhoods.read().expect("cache lock");
        let mut out: Vec<_> = map.iter().map(|(&k, v)| (f64::from_bits(k), v.as_ref().clone())).collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }

    /// Install a neighbourhood list computed elsewhere, e.g. read from disk.
    pub fn preload_neighborhood(&self, radius: f64, list: Vec<(Moebius, Perm)>) -> Result<()> {
        let m = self.degree();
        if list.iter().any(|(_, p)| p.degree() != m) {
            return Err(Error::InvalidParams("cached neighbourhood has the wrong degree".into()));
        }
        self.neighborhoods.write().expect("cache lock").insert(radius.to_bits(), Arc::new(list));
        Ok(())
    }

    /// Sparse quotient distances `d(p_i, p_j) ≤ cutoff` for `i < j`, with all
    /// points already in the base domain.
    pub fn pair_distances(&self, points: &[SurfacePoint], cutoff: f64) -> Result<Vec<(usize, usize, f64)>> {
        let big_r = self.base.domain_radius();
        let hood = self.neighborhood(2.0 * big_r + cutoff)?;
        let m = self.degree();
        let mut by_sheet: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (k, p) in points.iter().enumerate() {
            by_sheet[p.sheet].push(k);
        }
        let mut out = Vec::new();
        let mut best: HashMap<usize, f64> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            best.clear();
            for (g, s) in hood.iter() {
                if dist(p.z, g.apply(HPoint::I)) > big_r + cutoff {
                    continue;
                }
                // σ(γ) must carry the sheet of q to the sheet of p.
                let sheet_q = s.inverse().apply(p.sheet);
                for &j in &by_sheet[sheet_q] {
                    if j <= i {
                        continue;
                    }
                    let d = dist(p.z, g.apply(points[j].z));
                    if d <= cutoff {
                        let e = best.entry(j).or_insert(f64::INFINITY);
                        if d < *e {
                            *e = d;
                        }
                    }
                }
            }
            let mut row: Vec<(usize, f64)> = best.iter().map(|(&j, &d)| (j, d)).collect();
            row.sort_by_key(|&(j, _)| j);
            out.extend(row.into_iter().map(|(j, d)| (i, j, d)));
        }
        Ok(out)
    }

    /// Uniform point on the cover.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> SurfacePoint {
        let z = self.base.sample_point(rng);
        let sheet = rng.random_range(0..self.degree());
        SurfacePoint { z, sheet }
    }

    /// Monte Carlo estimate of `Vol{x : InjRad(x) ≤ threshold} / Vol(X)`.
    pub fn thin_part_volume_fraction(&self, threshold: f64, samples: usize, seed: u64) -> Result<Estimate> {
        if samples == 0 {
            return Err(Error::InvalidParams("samples must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hits = 0usize;
        for _ in 0..samples {
            let p = self.sample_point(&mut rng);
            if self.injectivity_radius(p)? <= threshold {
                hits += 1;
            }
        }
        let f = hits as f64 / samples as f64;
        Ok(Estimate { value: f, stderr: (f * (1.0 - f) / samples as f64).sqrt() })
    }
}

fn generated_group(g: &Perm, h: &Perm) -> Vec<Perm> {
    let id = Perm::identity(g.degree());
    let mut elements = vec![id.clone()];
    let mut seen: HashMap<Perm, ()> = HashMap::from([(id, ())]);
    let mut head = 0;
    while head < elements.len() {
        let x = elements[head].clone();
        for s in [g, h] {
            let y = x.compose(s);
            if seen.insert(y.clone(), ()).is_none() {
                elements.push(y);
            }
        }
        head += 1;
    }
    elements
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuchsian::bolza_group;

    #[test]
    fn recipes_and_genus() {
        let base = Arc::new(bolza_group());
        assert_eq!(CoverDescriptor::trivial(base.clone()).genus(), 2);
        assert_eq!(CoverDescriptor::cyclic(base.clone(), 2).unwrap().genus(), 3);
        let g = Perm::from_images(vec![1, 0, 2]).unwrap();
        let h = Perm::from_images(vec![1, 2, 0]).unwrap();
        let s3 = CoverDescriptor::regular(base.clone(), &g, &h).unwrap();
        assert_eq!(s3.degree(), 6);
        assert_eq!(s3.genus(), 7);
        assert!((s3.volume() - 6.0 * 4.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn rejects_disconnected_and_ramified() {
        let base = Arc::new(bolza_group());
        let id = Perm::identity(2);
        let r = CoverDescriptor::new(base.clone(), vec![id.clone(); 4]);
        assert!(matches!(r, Err(Error::NotTransitive { .. })));
        // a1 shifts, b1 swaps on three sheets: relator image is a commutator-free mess.
        let a = Perm::shift(3, 1);
        let b = Perm::from_images(vec![1, 0, 2]).unwrap();
        let r = CoverDescriptor::new(base, vec![a, b, Perm::identity(3), Perm::identity(3)]);
        assert!(matches!(r, Err(Error::RelatorViolated { .. })));
    }

    #[test]
    fn perm_algebra() {
        let p = Perm::from_images(vec![2, 0, 1]).unwrap();
        let q = Perm::from_images(vec![1, 0, 2]).unwrap();
        assert_eq!(p.compose(&q).images(), vec![0, 2, 1]);
        assert!(p.compose(&p.inverse()).is_identity());
        assert!(Perm::from_images(vec![0, 0]).is_err());
    }
}
