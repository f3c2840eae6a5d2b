//! Mixed 1D atom banks and the implicit separable 2D dictionary.
//!
//! The 1D bank is the union of a redundant cosine family, a redundant sine
//! family and a local family made of every translation of a few short
//! prototypes. 2D atoms are outer products `d^x (d^y)^T` and are only ever
//! formed on demand.

use std::f64::consts::PI;
use std::fmt;

use crate::image::{dot, AtomPair, Block};
use crate::{Error, Result};

/// Entry-wise distance below which two unit atoms are the same atom.
const DUPLICATE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Cos,
    Sin,
    Local,
}

/// `M` unit-norm atoms of length `N_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomBank1D {
    len: usize,
    atoms: Vec<f64>,
    families: Vec<Family>,
}

impl AtomBank1D {
    fn from_atoms(len: usize, raw: Vec<(Vec<f64>, Family)>) -> Self {
        let mut atoms = Vec::with_capacity(len * raw.len());
        let mut families = Vec::with_capacity(raw.len());
        for (mut a, fam) in raw {
            let norm = dot(&a, &a).sqrt();
            for v in &mut a {
                *v /= norm;
            }
            atoms.extend_from_slice(&a);
            families.push(fam);
        }
        Self {
            len,
            atoms,
            families,
        }
    }

    /// Atom length `N_b`.
    pub fn atom_len(&self) -> usize {
        self.len
    }

    /// Number of atoms `M`.
    pub fn len(&self) -> usize {
        self.families.len()
    }

    pub fn is_empty(&self) -> bool {
        self.families.is_empty()
    }

    pub fn atom(&self, n: usize) -> &[f64] {
        &self.atoms[n * self.len..(n + 1) * self.len]
    }

    pub fn family(&self, n: usize) -> Family {
        self.families[n]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.atoms.chunks_exact(self.len)
    }

    /// Atoms stored contiguously, atom-major.
    pub fn as_flat(&self) -> &[f64] {
        &self.atoms
    }

    fn extend(&mut self, other: AtomBank1D) {
        debug_assert_eq!(self.len, other.len);
        self.atoms.extend(other.atoms);
        self.families.extend(other.families);
    }

    /// Drop atoms that are bit-for-bit equal to an earlier one.
    /// Drop atoms equal to an earlier one up to rounding.
    fn dedup_exact(&mut self) {
        let len = self.len;
        let mut keep_atoms = Vec::with_capacity(self.atoms.len());
        let mut keep_fams = Vec::with_capacity(self.families.len());
        for (n, fam) in self.families.iter().enumerate() {
            let a = &self.atoms[n * len..(n + 1) * len];
            let dup = keep_atoms.chunks_exact(len).any(|b: &[f64]| {
                b.iter().zip(a).all(|(x, y)| (x - y).abs() <= DUPLICATE_TOLERANCE)
            });
            if !dup {
                keep_atoms.extend_from_slice(a);
                keep_fams.push(*fam);
            }
        }
        self.atoms = keep_atoms;
        self.families = keep_fams;
    }

    /// `M x M` matrix of pairwise inner products, row-major.
    pub fn gram(&self) -> Vec<f64> {
        let m = self.len();
        let mut g = vec![0.0; m * m];
        for i in 0..m {
            for j in i..m {
                let v = dot(self.atom(i), self.atom(j));
                g[i * m + j] = v;
                g[j * m + i] = v;
            }
        }
        g
    }
}

fn check_trig(block_size: usize, m: usize) -> Result<()> {
    if block_size == 0 {
        return Err(Error::invalid("atom length must be positive"));
    }
    if m < block_size {
        return Err(Error::invalid(format!(
            "trigonometric family needs at least {block_size} atoms, got {m}"
        )));
    }
    Ok(())
}

/// `d_n(i) ∝ cos(pi (2i - 1)(n - 1) / 2M)`, `i = 1..N_b`, `n = 1..M`.
pub fn build_trig_cos(block_size: usize, m: usize) -> Result<AtomBank1D> {
    check_trig(block_size, m)?;
    let raw = (0..m)
        .map(|n| {
            let atom = (1..=block_size)
                .map(|i| (PI * (2 * i - 1) as f64 * n as f64 / (2 * m) as f64).cos())
                .collect();
            (atom, Family::Cos)
        })
        .collect();
    Ok(AtomBank1D::from_atoms(block_size, raw))
}

/// `d_n(i) ∝ sin(pi (2i - 1) n / 2M)`, `i = 1..N_b`, `n = 1..M`.
pub fn build_trig_sin(block_size: usize, m: usize) -> Result<AtomBank1D> {
    check_trig(block_size, m)?;
    let raw = (1..=m)
        .map(|n| {
            let atom = (1..=block_size)
                .map(|i| (PI * (2 * i - 1) as f64 * n as f64 / (2 * m) as f64).sin())
                .collect();
            (atom, Family::Sin)
        })
        .collect();
    Ok(AtomBank1D::from_atoms(block_size, raw))
}

/// Every translation of every prototype, each normalized.
pub fn build_local(block_size: usize, prototypes: &[Vec<f64>]) -> Result<AtomBank1D> {
    if block_size < 3 {
        return Err(Error::invalid("local family needs blocks of at least 3"));
    }
    let mut raw = Vec::new();
    for p in prototypes {
        if p.is_empty() || p.len() > block_size {
            return Err(Error::invalid(format!(
                "prototype of support {} does not fit blocks of {block_size}",
                p.len()
            )));
        }
        if p.iter().all(|&v| v == 0.0) || p.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("prototype must be finite and nonzero"));
        }
        for shift in 0..=block_size - p.len() {
            let mut atom = vec![0.0; block_size];
            atom[shift..shift + p.len()].copy_from_slice(p);
            raw.push((atom, Family::Local));
        }
    }
    Ok(AtomBank1D::from_atoms(block_size, raw))
}

/// Parameters that fully determine a mixed dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryConfig {
    pub block_size: usize,
    /// Atoms per trigonometric family.
    pub m_trig: usize,
    pub prototypes: Vec<Vec<f64>>,
}

impl DictionaryConfig {
    /// Redundancy-2 trig families and the five default local prototypes.
    pub fn with_block_size(block_size: usize) -> Self {
        Self {
            block_size,
            m_trig: 2 * block_size,
            prototypes: default_prototypes(),
        }
    }

    /// `key=value` lines, one per field.
    pub fn to_text(&self) -> String {
        let protos: Vec<String> = self
            .prototypes
            .iter()
            .map(|p| p.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(","))
            .collect();
        format!(
            "block_size={}\nm_trig={}\nprototypes={}\n",
            self.block_size,
            self.m_trig,
            protos.join(";")
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut block_size = None;
        let mut m_trig = None;
        let mut prototypes = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(format!("bad dictionary config line {line:?}")))?;
            match key.trim() {
                "block_size" => block_size = Some(parse_num(value)?),
                "m_trig" => m_trig = Some(parse_num(value)?),
                "prototypes" => prototypes = Some(parse_prototypes(value)?),
                other => return Err(Error::format(format!("unknown dictionary key {other:?}"))),
            }
        }
        Ok(Self {
            block_size: block_size.ok_or_else(|| Error::format("missing block_size"))?,
            m_trig: m_trig.ok_or_else(|| Error::format("missing m_trig"))?,
            prototypes: prototypes.ok_or_else(|| Error::format("missing prototypes"))?,
        })
    }
}

impl fmt::Display for DictionaryConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn parse_num(v: &str) -> Result<usize> {
    v.trim()
        .parse()
        .map_err(|_| Error::format(format!("bad integer {v:?}")))
}

/// `"1;1,1;1,-1"` style list of prototypes.
pub fn parse_prototypes(v: &str) -> Result<Vec<Vec<f64>>> {
    v.split(';')
        .map(|p| {
            p.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::invalid(format!("bad prototype value {x:?}")))
                })
                .collect()
        })
        .collect()
}

/// (1), (1,1), (1,-1), (1,1,1), (1,-1,1)
pub fn default_prototypes() -> Vec<Vec<f64>> {
    vec![
        vec![1.0],
        vec![1.0, 1.0],
        vec![1.0, -1.0],
        vec![1.0, 1.0, 1.0],
        vec![1.0, -1.0, 1.0],
    ]
}

/// `D = D^x ⊗ D^y` kept as its two factors, plus their Gram matrices.
#[derive(Debug, Clone)]
pub struct SeparableDictionary {
    config: DictionaryConfig,
    bank_x: AtomBank1D,
    bank_y: AtomBank1D,
    gram_x: Vec<f64>,
    gram_y: Vec<f64>,
}

impl SeparableDictionary {
    pub fn from_banks(config: DictionaryConfig, bank_x: AtomBank1D, bank_y: AtomBank1D) -> Result<Self> {
        if bank_x.atom_len() != bank_y.atom_len() || bank_x.atom_len() != config.block_size {
            return Err(Error::invalid("bank atom lengths disagree with block size"));
        }
        if bank_x.len() > u16::MAX as usize + 1 || bank_y.len() > u16::MAX as usize + 1 {
            return Err(Error::invalid("banks larger than 65536 atoms are not supported"));
        }
        let gram_x = bank_x.gram();
        let gram_y = bank_y.gram();
        Ok(Self {
            config,
            bank_x,
            bank_y,
            gram_x,
            gram_y,
        })
    }

    pub fn config(&self) -> &DictionaryConfig {
        &self.config
    }

    pub fn block_size(&self) -> usize {
        self.config.block_size
    }

    pub fn bank_x(&self) -> &AtomBank1D {
        &self.bank_x
    }

    pub fn bank_y(&self) -> &AtomBank1D {
        &self.bank_y
    }

    pub fn mx(&self) -> usize {
        self.bank_x.len()
    }

    pub fn my(&self) -> usize {
        self.bank_y.len()
    }

    /// Implicit 2D dictionary size `M_x M_y`.
    pub fn size_2d(&self) -> usize {
        self.mx() * self.my()
    }

    /// Reals held by the two banks.
    pub fn stored_reals(&self) -> usize {
        self.bank_x.as_flat().len() + self.bank_y.as_flat().len()
    }

    pub fn contains(&self, pair: AtomPair) -> bool {
        pair.x < self.mx() && pair.y < self.my()
    }

    /// `<d^x_a, d^x_b>`
    #[inline]
    pub fn gram_x(&self, a: usize, b: usize) -> f64 {
        self.gram_x[a * self.mx() + b]
    }

    /// `<d^y_a, d^y_b>`
    #[inline]
    pub fn gram_y(&self, a: usize, b: usize) -> f64 {
        self.gram_y[a * self.my() + b]
    }

    /// Frobenius product of two 2D atoms, via the 1D factors.
    #[inline]
    pub fn atom_inner(&self, p: AtomPair, q: AtomPair) -> f64 {
        self.gram_x(p.x, q.x) * self.gram_y(p.y, q.y)
    }

    /// Materialize `d^x_{l^x} (d^y_{l^y})^T`.
    pub fn atom_2d(&self, pair: AtomPair) -> Result<Block> {
        if !self.contains(pair) {
            return Err(Error::invalid(format!(
                "atom ({}, {}) outside {}x{} dictionary",
                pair.x,
                pair.y,
                self.mx(),
                self.my()
            )));
        }
        Ok(Block::outer(self.bank_x.atom(pair.x), self.bank_y.atom(pair.y)))
    }

    /// `block += coef * atom(pair)` without materializing the atom.
    #[inline]
    pub fn add_atom(&self, block: &mut Block, coef: f64, pair: AtomPair) {
        block.add_outer(coef, self.bank_x.atom(pair.x), self.bank_y.atom(pair.y));
    }

    /// `<atom(pair), block>_F`
    #[inline]
    pub fn correlate(&self, block: &Block, pair: AtomPair) -> f64 {
        block.bilinear(self.bank_x.atom(pair.x), self.bank_y.atom(pair.y))
    }

    /// `sum_n c(n) atom(pair_n)`
    pub fn synthesize(&self, atoms: &[AtomPair], coefficients: &[f64]) -> Block {
        let mut out = Block::zeros(self.block_size());
        for (&p, &c) in atoms.iter().zip(coefficients) {
            self.add_atom(&mut out, c, p);
        }
        out
    }
}

/// `D^x = D_C ∪ D_S ∪ D_L`, `D^y = D^x`.
pub fn build_mixed(config: &DictionaryConfig) -> Result<SeparableDictionary> {
    let nb = config.block_size;
    let mut bank = build_trig_cos(nb, config.m_trig)?;
    bank.extend(build_trig_sin(nb, config.m_trig)?);
    bank.extend(build_local(nb, &config.prototypes)?);
    bank.dedup_exact();
    SeparableDictionary::from_banks(config.clone(), bank.clone(), bank)
}
