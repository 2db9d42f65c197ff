//! Site/bond graphs for the supported lattice families.
//!
//! A lattice is a graph of *sites*. Every site holds one physical qubit per
//! inter-site bond incident on it, so a site of degree `d` carries `d`
//! qubits joined by an intra-site Ising cycle. Open boundaries shrink edge
//! sites to their reduced degree instead of padding them.
//!
//! Qubit numbering is global and contiguous: sites in index order, and within
//! a site the qubits follow the intra-site cycle order. Inter bonds store the
//! endpoint with the lower site index first.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub type SiteId = usize;
pub type QubitId = usize;

/// `(site, slot)` where `slot` indexes into the site's ordered qubit list.
pub type BondEnd = (SiteId, usize);
pub type InterBond = (BondEnd, BondEnd);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeFamily {
    SquareCavo,
    HexStar,
    Ring,
    Line,
    Cubic,
}

impl LatticeFamily {
    pub fn name(self) -> &'static str {
        match self {
            LatticeFamily::SquareCavo => "square_cavo",
            LatticeFamily::HexStar => "hex_star",
            LatticeFamily::Ring => "ring",
            LatticeFamily::Line => "line",
            LatticeFamily::Cubic => "cubic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    Open,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeGraph {
    pub family: LatticeFamily,
    pub n_sites: usize,
    /// Global qubit ids per site, in intra-site cycle order.
    pub site_qubits: Vec<Vec<QubitId>>,
    /// Per-site intra bonds as pairs of slot indices.
    pub intra_bonds: Vec<Vec<(usize, usize)>>,
    pub inter_bonds: Vec<InterBond>,
    pub boundary: Boundary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoubledBond {
    pub sites: (SiteId, SiteId),
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<String>,
    pub doubled_bonds: Vec<DoubledBond>,
}

/// Collects ports and bonds before qubit numbering is fixed.
struct Assembler {
    /// Per site, the port labels in use. Ports are sorted by label at the end,
    /// and label order is the cycle order.
    ports: Vec<Vec<u8>>,
    bonds: Vec<((SiteId, u8), (SiteId, u8))>,
}

impl Assembler {
    fn new(n_sites: usize) -> Self {
        Self {
            ports: vec![Vec::new(); n_sites],
            bonds: Vec::new(),
        }
    }

    fn bond(&mut self, a: (SiteId, u8), b: (SiteId, u8)) -> Result<()> {
        if a.0 == b.0 {
            return Err(Error::InvalidDimensions(format!(
                "site {} would be bonded to itself",
                a.0
            )));
        }
        for &(site, port) in &[a, b] {
            if self.ports[site].contains(&port) {
                return Err(Error::InvalidGraph(format!(
                    "port {port} of site {site} used twice"
                )));
            }
            self.ports[site].push(port);
        }
        self.bonds.push((a, b));
        Ok(())
    }

    fn finish(mut self, family: LatticeFamily, boundary: Boundary) -> Result<LatticeGraph> {
        let n_sites = self.ports.len();
        let mut site_qubits = Vec::with_capacity(n_sites);
        let mut intra_bonds = Vec::with_capacity(n_sites);
        let mut next = 0usize;
        for (site, ports) in self.ports.iter_mut().enumerate() {
            if ports.is_empty() {
                return Err(Error::DegenerateSite { site });
            }
            ports.sort_unstable();
            let q = ports.len();
            site_qubits.push((next..next + q).collect::<Vec<_>>());
            next += q;
            intra_bonds.push(cycle_bonds(q));
        }
        let slot = |site: SiteId, port: u8, ports: &[Vec<u8>]| -> usize {
            ports[site].iter().position(|&p| p == port).unwrap()
        };
        let inter_bonds = self
            .bonds
            .iter()
            .map(|&((sa, pa), (sb, pb))| {
                let ea = (sa, slot(sa, pa, &self.ports));
                let eb = (sb, slot(sb, pb, &self.ports));
                if sa < sb {
                    (ea, eb)
                } else {
                    (eb, ea)
                }
            })
            .collect();
        Ok(LatticeGraph {
            family,
            n_sites,
            site_qubits,
            intra_bonds,
            inter_bonds,
            boundary,
        })
    }
}

fn cycle_bonds(q: usize) -> Vec<(usize, usize)> {
    match q {
        0 | 1 => Vec::new(),
        2 => vec![(0, 1)],
        _ => (0..q).map(|i| (i, (i + 1) % q)).collect(),
    }
}

fn check_dims(dims: &[usize], boundary: Boundary, what: &str) -> Result<()> {
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::InvalidDimensions(format!("{what}: sizes must be >= 1, got {dims:?}")));
    }
    if boundary == Boundary::Periodic && dims.iter().any(|&d| d < 2) {
        return Err(Error::InvalidDimensions(format!(
            "{what}: periodic wrap needs >= 2 in every direction, got {dims:?}"
        )));
    }
    Ok(())
}

/// Square-lattice cluster geometry (4.8.8 tiling of physical qubits).
///
/// Ports in cycle order: north, east, south, west. With `rows == 2` or
/// `cols == 2` the periodic wrap bonds the same pair of sites twice; that is
/// allowed and shows up in [`LatticeGraph::validate`].
pub fn build_square(rows: usize, cols: usize, boundary: Boundary) -> Result<LatticeGraph> {
    check_dims(&[rows, cols], boundary, "square")?;
    const N: u8 = 0;
    const E: u8 = 1;
    const S: u8 = 2;
    const W: u8 = 3;
    let periodic = boundary == Boundary::Periodic;
    let idx = |r: usize, c: usize| r * cols + c;
    let mut asm = Assembler::new(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols || periodic {
                asm.bond((idx(r, c), E), (idx(r, (c + 1) % cols), W))?;
            }
            if r + 1 < rows || periodic {
                asm.bond((idx(r, c), S), (idx((r + 1) % rows, c), N))?;
            }
        }
    }
    asm.finish(LatticeFamily::SquareCavo, boundary)
}

/// Honeycomb site graph (star lattice of physical qubits), two sites per cell.
///
/// Site `A(a,b)` is bonded to `B(a,b)`, `B(a-1,b)` and `B(a,b-1)`.
pub fn build_hex(cells_a: usize, cells_b: usize, boundary: Boundary) -> Result<LatticeGraph> {
    check_dims(&[cells_a, cells_b], boundary, "hex")?;
    let periodic = boundary == Boundary::Periodic;
    let site_a = |a: usize, b: usize| 2 * (a * cells_b + b);
    let site_b = |a: usize, b: usize| 2 * (a * cells_b + b) + 1;
    let mut asm = Assembler::new(2 * cells_a * cells_b);
    for a in 0..cells_a {
        for b in 0..cells_b {
            asm.bond((site_a(a, b), 0), (site_b(a, b), 0))?;
            if a >= 1 || periodic {
                let pa = (a + cells_a - 1) % cells_a;
                asm.bond((site_a(a, b), 1), (site_b(pa, b), 1))?;
            }
            if b >= 1 || periodic {
                let pb = (b + cells_b - 1) % cells_b;
                asm.bond((site_a(a, b), 2), (site_b(a, pb), 2))?;
            }
        }
    }
    asm.finish(LatticeFamily::HexStar, boundary)
}

/// Ring (periodic) or line (open) of sites with two qubits per interior site.
pub fn build_ring(n_sites: usize, boundary: Boundary) -> Result<LatticeGraph> {
    let min = match boundary {
        Boundary::Periodic => 3,
        Boundary::Open => 2,
    };
    if n_sites < min {
        return Err(Error::InvalidDimensions(format!(
            "ring/line needs at least {min} sites for {boundary:?} boundary, got {n_sites}"
        )));
    }
    const LEFT: u8 = 0;
    const RIGHT: u8 = 1;
    let mut asm = Assembler::new(n_sites);
    for i in 0..n_sites - 1 {
        asm.bond((i, RIGHT), (i + 1, LEFT))?;
    }
    if boundary == Boundary::Periodic {
        asm.bond((n_sites - 1, RIGHT), (0, LEFT))?;
    }
    let family = match boundary {
        Boundary::Periodic => LatticeFamily::Ring,
        Boundary::Open => LatticeFamily::Line,
    };
    asm.finish(family, boundary)
}

/// Simple cubic site graph with up to six qubits per site. Graph generation
/// only; the state space is far beyond dense simulation.
pub fn build_cubic(lx: usize, ly: usize, lz: usize, boundary: Boundary) -> Result<LatticeGraph> {
    check_dims(&[lx, ly, lz], boundary, "cubic")?;
    let periodic = boundary == Boundary::Periodic;
    let dims = [lx, ly, lz];
    let idx = |p: [usize; 3]| (p[0] * ly + p[1]) * lz + p[2];
    let mut asm = Assembler::new(lx * ly * lz);
    for x in 0..lx {
        for y in 0..ly {
            for z in 0..lz {
                let p = [x, y, z];
                for axis in 0..3 {
                    if p[axis] + 1 < dims[axis] || periodic {
                        let mut q = p;
                        q[axis] = (p[axis] + 1) % dims[axis];
                        asm.bond((idx(p), axis as u8), (idx(q), axis as u8 + 3))?;
                    }
                }
            }
        }
    }
    asm.finish(LatticeFamily::Cubic, boundary)
}

impl LatticeGraph {
    pub fn n_qubits(&self) -> usize {
        self.site_qubits.iter().map(Vec::len).sum()
    }

    pub fn qubit(&self, end: BondEnd) -> QubitId {
        self.site_qubits[end.0][end.1]
    }

    pub fn bond_qubits(&self, bond: usize) -> (QubitId, QubitId) {
        let (a, b) = self.inter_bonds[bond];
        (self.qubit(a), self.qubit(b))
    }

    /// Qubit used for the logical Z of a site: the first in cycle order.
    pub fn representative_qubit(&self, site: SiteId) -> QubitId {
        self.site_qubits[site][0]
    }

    pub fn site_of_qubit(&self, qubit: QubitId) -> Option<SiteId> {
        self.site_qubits.iter().position(|qs| qs.contains(&qubit))
    }

    pub fn intra_bond_count(&self) -> usize {
        self.intra_bonds.iter().map(Vec::len).sum()
    }

    /// Neighbor sites per site, with multiplicity, sorted.
    pub fn site_adjacency(&self) -> Vec<Vec<SiteId>> {
        let mut adj = vec![Vec::new(); self.n_sites];
        for &((a, _), (b, _)) in &self.inter_bonds {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Site pairs joined by more than one inter bond.
    pub fn doubled_bonds(&self) -> Vec<DoubledBond> {
        let mut counts: BTreeMap<(SiteId, SiteId), usize> = BTreeMap::new();
        for &((a, _), (b, _)) in &self.inter_bonds {
            *counts.entry((a.min(b), a.max(b))).or_default() += 1;
        }
        counts
            .into_iter()
            .filter(|&(_, m)| m > 1)
            .map(|(sites, multiplicity)| DoubledBond {
                sites,
                multiplicity,
            })
            .collect()
    }

    pub fn has_doubled_bonds(&self) -> bool {
        !self.doubled_bonds().is_empty()
    }

    /// Checks every structural invariant. Never fails; problems are listed.
    pub fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        if self.site_qubits.len() != self.n_sites {
            v.push(format!(
                "site_qubits has {} entries for {} sites",
                self.site_qubits.len(),
                self.n_sites
            ));
        }
        if self.intra_bonds.len() != self.site_qubits.len() {
            v.push("intra_bonds length differs from site count".to_string());
        }

        let n = self.n_qubits();
        let mut owner = vec![None; n];
        for (site, qs) in self.site_qubits.iter().enumerate() {
            if qs.is_empty() {
                v.push(format!("site {site} has no qubits"));
            }
            for &q in qs {
                if q >= n {
                    v.push(format!("qubit id {q} outside 0..{n}"));
                } else if let Some(prev) = owner[q] {
                    v.push(format!("qubit {q} belongs to sites {prev} and {site}"));
                } else {
                    owner[q] = Some(site);
                }
            }
        }
        if owner.iter().any(Option::is_none) {
            v.push("qubit ids are not contiguous".to_string());
        }

        let mut touches = vec![0usize; n];
        let mut degree = vec![0usize; self.site_qubits.len()];
        for (i, &((a, sa), (b, sb))) in self.inter_bonds.iter().enumerate() {
            if a >= self.site_qubits.len()
                || b >= self.site_qubits.len()
                || sa >= self.site_qubits[a].len()
                || sb >= self.site_qubits[b].len()
            {
                v.push(format!("inter bond {i} references a missing qubit"));
                continue;
            }
            if a == b {
                v.push(format!("inter bond {i} joins site {a} to itself"));
            }
            if a > b {
                v.push(format!("inter bond {i} does not list the lower site first"));
            }
            degree[a] += 1;
            degree[b] += 1;
            for q in [self.qubit((a, sa)), self.qubit((b, sb))] {
                if q < n {
                    touches[q] += 1;
                }
            }
        }
        for (site, qs) in self.site_qubits.iter().enumerate() {
            if qs.len() != degree[site] {
                v.push(format!(
                    "site {site} has {} qubits but {} inter bonds",
                    qs.len(),
                    degree[site]
                ));
            }
        }
        for (q, &t) in touches.iter().enumerate() {
            if t != 1 {
                v.push(format!("qubit {q} touches {t} inter bonds"));
            }
        }
        let total: usize = self.site_qubits.iter().map(Vec::len).sum();
        if total != 2 * self.inter_bonds.len() {
            v.push(format!(
                "{total} qubits but {} inter bonds",
                self.inter_bonds.len()
            ));
        }

        for (site, bonds) in self.intra_bonds.iter().enumerate() {
            let q = self.site_qubits.get(site).map_or(0, Vec::len);
            let mut sorted: Vec<(usize, usize)> =
                bonds.iter().map(|&(i, j)| (i.min(j), i.max(j))).collect();
            sorted.sort_unstable();
            let mut expected: Vec<(usize, usize)> = cycle_bonds(q)
                .into_iter()
                .map(|(i, j)| (i.min(j), i.max(j)))
                .collect();
            expected.sort_unstable();
            if !is_single_cycle(q, bonds) || sorted.len() != expected.len() {
                v.push(format!(
                    "site {site}: intra bonds {bonds:?} do not form the expected cycle over {q} qubits"
                ));
            }
        }

        if self.boundary == Boundary::Periodic {
            let nb = self.inter_bonds.len();
            let ns = self.n_sites;
            let expected = match self.family {
                LatticeFamily::SquareCavo => Some(2 * ns),
                LatticeFamily::Ring => Some(ns),
                LatticeFamily::HexStar => Some(3 * ns / 2),
                LatticeFamily::Cubic => Some(3 * ns),
                LatticeFamily::Line => None,
            };
            if let Some(e) = expected {
                if nb != e {
                    v.push(format!(
                        "periodic {} lattice has {nb} inter bonds, expected {e}",
                        self.family.name()
                    ));
                }
            }
        }

        ValidationReport {
            ok: v.is_empty(),
            violations: v,
            doubled_bonds: self.doubled_bonds(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a graph document and rejects it unless every invariant holds.
    pub fn from_json(text: &str) -> Result<Self> {
        let graph: LatticeGraph = serde_json::from_str(text)?;
        let report = graph.validate();
        if !report.ok {
            return Err(Error::InvalidGraph(report.violations.join("; ")));
        }
        Ok(graph)
    }
}

fn is_single_cycle(q: usize, bonds: &[(usize, usize)]) -> bool {
    match q {
        0 | 1 => bonds.is_empty(),
        2 => bonds.len() == 1 && bonds[0].0.min(bonds[0].1) == 0 && bonds[0].0.max(bonds[0].1) == 1,
        _ => {
            if bonds.len() != q {
                return false;
            }
            let mut deg = vec![0usize; q];
            let mut adj = vec![Vec::new(); q];
            for &(i, j) in bonds {
                if i >= q || j >= q || i == j {
                    return false;
                }
                deg[i] += 1;
                deg[j] += 1;
                adj[i].push(j);
                adj[j].push(i);
            }
            if deg.iter().any(|&d| d != 2) {
                return false;
            }
            // walk the cycle from slot 0
            let (mut prev, mut cur, mut seen) = (0usize, adj[0][0], 1usize);
            while cur != 0 {
                let next = if adj[cur][0] == prev { adj[cur][1] } else { adj[cur][0] };
                prev = cur;
                cur = next;
                seen += 1;
                if seen > q {
                    return false;
                }
            }
            seen == q
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_2x2_torus_has_doubled_pairs() {
        let g = build_square(2, 2, Boundary::Periodic).unwrap();
        assert_eq!(g.n_sites, 4);
        assert_eq!(g.n_qubits(), 16);
        assert_eq!(g.inter_bonds.len(), 8);
        let report = g.validate();
        assert!(report.ok, "{:?}", report.violations);
        assert_eq!(report.doubled_bonds.len(), 4);
        assert!(report.doubled_bonds.iter().all(|d| d.multiplicity == 2));
        for adj in g.site_adjacency() {
            assert_eq!(adj.len(), 4);
            assert_eq!(adj[0], adj[1]);
            assert_eq!(adj[2], adj[3]);
        }
    }

    #[test]
    fn square_3x3_torus() {
        let g = build_square(3, 3, Boundary::Periodic).unwrap();
        assert_eq!((g.n_sites, g.n_qubits(), g.inter_bonds.len()), (9, 36, 18));
        let report = g.validate();
        assert!(report.ok);
        assert!(report.doubled_bonds.is_empty());
        for adj in g.site_adjacency() {
            let mut d = adj.clone();
            d.dedup();
            assert_eq!(d.len(), 4);
        }
    }

    #[test]
    fn single_open_site_is_degenerate() {
        assert!(matches!(
            build_square(1, 1, Boundary::Open),
            Err(Error::DegenerateSite { site: 0 })
        ));
        assert!(matches!(
            build_square(0, 3, Boundary::Open),
            Err(Error::InvalidDimensions(_))
        ));
        assert!(build_square(1, 3, Boundary::Periodic).is_err());
    }

    #[test]
    fn open_square_shrinks_edge_sites() {
        let g = build_square(3, 4, Boundary::Open).unwrap();
        assert!(g.validate().ok);
        let sizes: Vec<usize> = g.site_qubits.iter().map(Vec::len).collect();
        assert_eq!(sizes[0], 2);
        assert_eq!(sizes[1], 3);
        assert_eq!(sizes[5], 4);
        assert_eq!(g.intra_bonds[0].len(), 1);
        assert_eq!(g.intra_bonds[1].len(), 3);
    }

    #[test]
    fn hex_torus_and_patches() {
        let g = build_hex(2, 2, Boundary::Periodic).unwrap();
        assert_eq!((g.n_sites, g.n_qubits(), g.inter_bonds.len()), (8, 24, 12));
        let r = g.validate();
        assert!(r.ok, "{:?}", r.violations);
        assert!(r.doubled_bonds.is_empty());
        assert!(g.site_qubits.iter().all(|q| q.len() == 3));

        assert!(build_hex(1, 1, Boundary::Periodic).is_err());

        let open = build_hex(2, 1, Boundary::Open).unwrap();
        assert!(open.validate().ok);
        let adj = open.site_adjacency();
        for (site, qs) in open.site_qubits.iter().enumerate() {
            assert_eq!(qs.len(), adj[site].len());
        }
    }

    #[test]
    fn ring_and_line() {
        let g = build_ring(4, Boundary::Periodic).unwrap();
        assert_eq!(g.n_qubits(), 8);
        assert_eq!(g.inter_bonds.len(), 4);
        assert_eq!(g.intra_bond_count(), 4);
        assert!(g.validate().ok);

        let line = build_ring(2, Boundary::Open).unwrap();
        assert_eq!(line.family, LatticeFamily::Line);
        assert_eq!(line.site_qubits, vec![vec![0], vec![1]]);
        assert_eq!(line.inter_bonds.len(), 1);
        assert_eq!(line.intra_bond_count(), 0);

        let six = build_ring(6, Boundary::Periodic).unwrap();
        assert_eq!(six.n_qubits(), 12);
        for (s, adj) in six.site_adjacency().iter().enumerate() {
            let mut expected = vec![(s + 5) % 6, (s + 1) % 6];
            expected.sort_unstable();
            assert_eq!(adj, &expected);
        }
        assert!(build_ring(2, Boundary::Periodic).is_err());
        assert!(build_ring(1, Boundary::Open).is_err());
    }

    #[test]
    fn cubic_generation() {
        let g = build_cubic(3, 3, 3, Boundary::Periodic).unwrap();
        assert_eq!(g.n_sites, 27);
        assert_eq!(g.n_qubits(), 162);
        assert!(g.validate().ok);
        assert_eq!(g.intra_bonds[0].len(), 6);
        let open = build_cubic(2, 2, 2, Boundary::Open).unwrap();
        assert!(open.validate().ok);
        assert!(open.site_qubits.iter().all(|q| q.len() == 3));
    }

    #[test]
    fn validate_flags_broken_graphs() {
        let mut g = build_ring(4, Boundary::Periodic).unwrap();
        g.intra_bonds[1].clear();
        let r = g.validate();
        assert!(!r.ok);
        assert!(r.violations.iter().any(|s| s.contains("site 1")));

        let mut g = build_ring(4, Boundary::Periodic).unwrap();
        g.inter_bonds.pop();
        assert!(!g.validate().ok);
    }

    #[test]
    fn json_round_trip_keeps_key_names() {
        let g = build_hex(2, 2, Boundary::Open).unwrap();
        let text = g.to_json().unwrap();
        for key in ["family", "n_sites", "site_qubits", "intra_bonds", "inter_bonds", "boundary"] {
            assert!(text.contains(&format!("\"{key}\"")), "missing {key}");
        }
        assert!(text.contains("\"hex_star\""));
        assert_eq!(LatticeGraph::from_json(&text).unwrap(), g);

        let mut bad: serde_json::Value = serde_json::from_str(&text).unwrap();
        bad["n_sites"] = serde_json::json!(3);
        assert!(LatticeGraph::from_json(&bad.to_string()).is_err());
    }

    #[test]
    fn builders_are_deterministic() {
        assert_eq!(
            build_square(3, 4, Boundary::Periodic).unwrap(),
            build_square(3, 4, Boundary::Periodic).unwrap()
        );
        assert_eq!(
            build_hex(3, 2, Boundary::Open).unwrap(),
            build_hex(3, 2, Boundary::Open).unwrap()
        );
    }
}
