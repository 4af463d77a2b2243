//! The closed-form free product classifier.
//!
//! A free product of two admissible weighted algebras, at least one of them
//! non-tracial, is a free Araki-Woods factor indexed by the group generated
//! by the two point spectra, direct sum a finite-dimensional residual part.
//! Residual blocks come from pairs of a one-dimensional central summand of
//! one factor against a finite matrix block of the other, gated by the
//! threshold `gamma = sum_l (1 - alpha) / beta_l < 1`.

use std::collections::BTreeSet;
use std::fmt;

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::algebra::{
    tensor_simplify, to_doc, Algebra, AlgebraDoc, FreeGroupParam, Summand, TensorDiffuse,
    TypeIProfile, Violation,
};
use crate::rat::PosRat;
use crate::ratio_group::{GroupKind, RatioGroup};

/// Which free factor a projection came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn flipped(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// A labeled central projection of one of the two free factors.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProjRef {
    pub side: Side,
    pub label: String,
}

impl fmt::Display for ProjRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label)
    }
}

/// Where a residual block sits: its diagonal `k` is dominated by the atom
/// projection meet the `block_diagonals[k]`-th diagonal of the partner block.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub atom: ProjRef,
    pub block: ProjRef,
    pub block_diagonals: Vec<usize>,
}

impl Provenance {
    fn mirrored(&self) -> Provenance {
        Provenance {
            atom: ProjRef {
                side: self.atom.side.flipped(),
                label: self.atom.label.clone(),
            },
            block: ProjRef {
                side: self.block.side.flipped(),
                label: self.block.label.clone(),
            },
            block_diagonals: self.block_diagonals.clone(),
        }
    }
}

/// One finite-dimensional central summand of a free product.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualBlock {
    pub weights: Vec<PosRat>,
    pub provenance: Provenance,
}

impl ResidualBlock {
    pub fn mass(&self) -> PosRat {
        PosRat::from_ratio(PosRat::sum(&self.weights)).expect("positive weights")
    }

    /// Atom-atom pairs are unordered; keep the left factor in the atom slot
    /// so that both orientations compare equal after mirroring.
    fn canonicalized(mut self, atom_atom: bool) -> ResidualBlock {
        if atom_atom && self.provenance.atom.side == Side::Right {
            std::mem::swap(&mut self.provenance.atom, &mut self.provenance.block);
        }
        self
    }
}

/// The diffuse part of a classification.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DiffusePiece {
    ArakiWoods { group: RatioGroup, mass: PosRat },
    FreeGroup { param: FreeGroupParam, mass: PosRat },
}

impl DiffusePiece {
    pub fn mass(&self) -> &PosRat {
        match self {
            DiffusePiece::ArakiWoods { mass, .. } | DiffusePiece::FreeGroup { mass, .. } => mass,
        }
    }

    pub fn group(&self) -> Option<&RatioGroup> {
        match self {
            DiffusePiece::ArakiWoods { group, .. } => Some(group),
            DiffusePiece::FreeGroup { .. } => None,
        }
    }

    fn with_mass(&self, mass: PosRat) -> DiffusePiece {
        match self {
            DiffusePiece::ArakiWoods { group, .. } => DiffusePiece::ArakiWoods {
                group: group.clone(),
                mass,
            },
            DiffusePiece::FreeGroup { param, .. } => DiffusePiece::FreeGroup {
                param: param.clone(),
                mass,
            },
        }
    }
}

/// Isomorphism class of a free product: diffuse piece plus residual
/// finite-dimensional part, with exact mass bookkeeping.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Classification {
    pub diffuse: Option<DiffusePiece>,
    pub residuals: Vec<ResidualBlock>,
    pub total_mass: PosRat,
}

impl Classification {
    pub fn residual_mass(&self) -> BigRational {
        self.residuals
            .iter()
            .fold(BigRational::zero(), |acc, r| acc + PosRat::sum(&r.weights))
    }

    pub fn mass_is_conserved(&self) -> bool {
        let diffuse = self
            .diffuse
            .as_ref()
            .map(|d| d.mass().as_ratio().clone())
            .unwrap_or_else(BigRational::zero);
        diffuse + self.residual_mass() == *self.total_mass.as_ratio()
    }

    /// Swaps the factor sides in all provenance records.
    pub fn mirrored(&self) -> Classification {
        let mut residuals: Vec<ResidualBlock> = self
            .residuals
            .iter()
            .map(|r| {
                let atom_atom = r.weights.len() == 1 && r.provenance.block_diagonals == [0];
                ResidualBlock {
                    weights: r.weights.clone(),
                    provenance: r.provenance.mirrored(),
                }
                .canonicalized(atom_atom)
            })
            .collect();
        sort_residuals(&mut residuals);
        Classification {
            diffuse: self.diffuse.clone(),
            residuals,
            total_mass: self.total_mass.clone(),
        }
    }

    pub fn rescaled(&self, scale: &PosRat) -> Classification {
        Classification {
            diffuse: self
                .diffuse
                .as_ref()
                .map(|d| d.with_mass(d.mass() * scale)),
            residuals: self
                .residuals
                .iter()
                .map(|r| ResidualBlock {
                    weights: r.weights.iter().map(|w| w * scale).collect(),
                    provenance: r.provenance.clone(),
                })
                .collect(),
            total_mass: &self.total_mass * scale,
        }
    }

    /// Re-enters a classification as an algebra: the diffuse piece becomes an
    /// Araki-Woods or free-group summand, the residuals matrix blocks.
    pub fn into_algebra(&self, label: impl Into<String>) -> Algebra {
        let mut summands = Vec::new();
        match &self.diffuse {
            Some(DiffusePiece::ArakiWoods { group, mass }) => summands.push(Summand::ArakiWoods {
                group: group.clone(),
                mass: mass.clone(),
            }),
            Some(DiffusePiece::FreeGroup { param, mass }) => {
                summands.push(Summand::FreeGroupFactor {
                    param: param.clone(),
                    mass: mass.clone(),
                })
            }
            None => {}
        }
        for r in &self.residuals {
            summands.push(Summand::matrix(r.weights.clone()));
        }
        Algebra::new(label, summands)
    }
}

fn sort_residuals(residuals: &mut [ResidualBlock]) {
    residuals.sort_by(|a, b| a.provenance.cmp(&b.provenance));
}

/// Connes type label of the diffuse piece.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConnesType {
    TypeIiOne,
    TypeIiiLambda(PosRat),
    TypeIiiOne,
}

impl fmt::Display for ConnesType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConnesType::TypeIiOne => write!(f, "II_1"),
            ConnesType::TypeIiiLambda(l) => write!(f, "III_\u{3bb}:{l}"),
            ConnesType::TypeIiiOne => write!(f, "III_1"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("total masses differ: {left} vs {right}")]
    MassMismatch { left: PosRat, right: PosRat },
    #[error("both states are traces; tracial-tracial free products are not classified")]
    BothTracial,
    #[error("invalid algebra {label}: {}", format_violations(.violations))]
    InvalidAlgebra {
        label: String,
        violations: Vec<Violation>,
    },
    #[error("free product with the scalars is the other factor, but it is not of diffuse-plus-finite form: {0}")]
    NotRepresentable(String),
    #[error("classification has no diffuse piece")]
    NoDiffusePiece,
    #[error("empty compression selection")]
    EmptySelection,
    #[error("compression selector out of range: {0}")]
    BadSelection(String),
    #[error("unsupported tensor operand: {0}")]
    UnsupportedTensor(String),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// The residual threshold `gamma = sum_l (1 - atom_mass) / w_l`, exact.
///
/// Inputs are assumed normalized to total mass 1; errors if the atom mass is
/// not below 1.
pub fn residual_gamma(
    atom_mass: &PosRat,
    block_weights: &[PosRat],
) -> Result<PosRat, ClassifyError> {
    let co_mass = atom_mass.one_minus().ok_or_else(|| {
        ClassifyError::BadSelection(format!("atom mass {atom_mass} must be below 1"))
    })?;
    let sum = block_weights
        .iter()
        .fold(BigRational::zero(), |acc, w| acc + (&co_mass / w).as_ratio());
    PosRat::from_ratio(sum).map_err(|_| ClassifyError::BadSelection("empty block".into()))
}

fn residual_from_pair(
    atom: ProjRef,
    atom_mass: &PosRat,
    block: ProjRef,
    block_weights: &[PosRat],
) -> Option<ResidualBlock> {
    let gamma = residual_gamma(atom_mass, block_weights).ok()?;
    let survival = gamma.one_minus()?;
    let weights = block_weights.iter().map(|w| w * &survival).collect();
    let atom_atom = block_weights.len() == 1;
    Some(
        ResidualBlock {
            weights,
            provenance: Provenance {
                atom,
                block,
                block_diagonals: (0..block_weights.len()).collect(),
            },
        }
        .canonicalized(atom_atom),
    )
}

fn proj(side: Side, label: &str) -> ProjRef {
    ProjRef {
        side,
        label: label.to_string(),
    }
}

/// All residual blocks of a free product of algebras normalized to total
/// mass 1: one block per (atom, finite matrix block) pair across the two
/// factors whose threshold `gamma` falls below 1. Atom-atom pairs are
/// emitted exactly once. Infinite type I, hyperfinite tensor, type I tensor,
/// and plain diffuse summands never pair.
pub fn residual_blocks(a: &Algebra, b: &Algebra) -> Vec<ResidualBlock> {
    let mut out = Vec::new();
    let mut emit = |atoms: &Algebra, atom_side: Side, blocks: &Algebra, min_size: usize| {
        for s in atoms.summands() {
            let Some(mass) = s.atom_mass() else { continue };
            let atom_label = s.label().expect("atoms are labeled blocks");
            for t in blocks.summands() {
                let Some(weights) = t.block_weights() else {
                    continue;
                };
                if weights.len() < min_size {
                    continue;
                }
                let block_label = t.label().expect("blocks are labeled");
                if let Some(r) = residual_from_pair(
                    proj(atom_side, atom_label),
                    mass,
                    proj(atom_side.flipped(), block_label),
                    weights,
                ) {
                    out.push(r);
                }
            }
        }
    };
    // Left atoms pair with every finite block on the right (including atoms);
    // right atoms only with genuine blocks so atom-atom pairs appear once.
    emit(a, Side::Left, b, 1);
    emit(b, Side::Right, a, 2);
    debug_assert!(scarcity_holds(&out));
    sort_residuals(&mut out);
    out
}

/// At most one opposing atom survives against any block of size >= 2.
fn scarcity_holds(residuals: &[ResidualBlock]) -> bool {
    let mut seen = BTreeSet::new();
    residuals
        .iter()
        .filter(|r| r.weights.len() >= 2)
        .all(|r| seen.insert((r.provenance.block.side, r.provenance.block.label.clone())))
}

fn checked(side_label: &str, a: &Algebra) -> Result<(), ClassifyError> {
    let violations = a.check();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(ClassifyError::InvalidAlgebra {
            label: format!("{} ({})", a.label(), side_label),
            violations,
        })
    }
}

/// The classification of an algebra on its own, viewed as its free product
/// with the scalars. Representable exactly when the algebra is a direct sum
/// of at most one diffuse Araki-Woods or free-group summand and finite
/// matrix blocks.
pub fn trivial_classification(
    b: &Algebra,
    scalar_unit: ProjRef,
) -> Result<Classification, ClassifyError> {
    let mut diffuse: Option<DiffusePiece> = None;
    let mut residuals = Vec::new();
    let block_side = scalar_unit.side.flipped();
    for s in b.summands() {
        match s {
            Summand::MatrixBlock { label, weights } => residuals.push(
                ResidualBlock {
                    weights: weights.clone(),
                    provenance: Provenance {
                        atom: scalar_unit.clone(),
                        block: proj(block_side, label),
                        block_diagonals: (0..weights.len()).collect(),
                    },
                }
                .canonicalized(weights.len() == 1),
            ),
            Summand::ArakiWoods { group, mass } if diffuse.is_none() => {
                diffuse = Some(DiffusePiece::ArakiWoods {
                    group: group.clone(),
                    mass: mass.clone(),
                });
            }
            Summand::FreeGroupFactor { param, mass } if diffuse.is_none() => {
                diffuse = Some(DiffusePiece::FreeGroup {
                    param: param.clone(),
                    mass: mass.clone(),
                });
            }
            Summand::ArakiWoods { .. } | Summand::FreeGroupFactor { .. } => {
                return Err(ClassifyError::NotRepresentable(format!(
                    "{} has more than one diffuse summand",
                    b.label()
                )));
            }
            other => {
                return Err(ClassifyError::NotRepresentable(format!(
                    "{} contains a summand of kind {}",
                    b.label(),
                    kind_name(other)
                )));
            }
        }
    }
    sort_residuals(&mut residuals);
    Ok(Classification {
        diffuse,
        residuals,
        total_mass: b.total_mass(),
    })
}

pub(crate) fn kind_name(s: &Summand) -> &'static str {
    match s {
        Summand::MatrixBlock { .. } => "matrix",
        Summand::TypeIInfinite { .. } => "typeI_inf",
        Summand::FreeGroupFactor { .. } => "free_group",
        Summand::ArakiWoods { .. } => "araki_woods",
        Summand::HyperfiniteTensor { .. } => "hyperfinite_tensor",
        Summand::Tensor { .. } => "tensor",
    }
}

/// Classifies the free product of two weighted algebras with equal total
/// masses. The inputs are normalized to total mass 1 internally and the
/// result is rescaled back to the callers' scale.
pub fn free_product_classify(a: &Algebra, b: &Algebra) -> Result<Classification, ClassifyError> {
    checked("left factor", a)?;
    checked("right factor", b)?;
    let (ma, mb) = (a.total_mass(), b.total_mass());
    if ma != mb {
        return Err(ClassifyError::MassMismatch { left: ma, right: mb });
    }
    // Free product with the scalars is the other factor.
    if a.is_one_dimensional() {
        let unit = proj(Side::Left, a.summands()[0].label().unwrap_or(a.label()));
        return trivial_classification(b, unit);
    }
    if b.is_one_dimensional() {
        let unit = proj(Side::Right, b.summands()[0].label().unwrap_or(b.label()));
        return trivial_classification(a, unit);
    }
    if a.is_tracial() && b.is_tracial() {
        return Err(ClassifyError::BothTracial);
    }
    let scale = ma.recip();
    let (na, nb) = (a.rescale(&scale), b.rescale(&scale));
    let group = na.point_spectrum().join(&nb.point_spectrum());
    debug_assert!(
        !group.is_trivial(),
        "non-tracial admissible inputs have nontrivial spectrum"
    );
    let residuals = residual_blocks(&na, &nb);
    let used: BigRational = residuals
        .iter()
        .fold(BigRational::zero(), |acc, r| acc + PosRat::sum(&r.weights));
    let diffuse_mass = PosRat::from_ratio(BigRational::from_integer(1.into()) - used)
        .map_err(|_| {
            ClassifyError::BadSelection("residual masses exhaust the free product".into())
        })?;
    let classification = Classification {
        diffuse: Some(DiffusePiece::ArakiWoods {
            group,
            mass: diffuse_mass,
        }),
        residuals,
        total_mass: PosRat::one(),
    };
    debug_assert!(classification.mass_is_conserved());
    Ok(classification.rescaled(&ma))
}

/// Connes type of the diffuse piece: `III_lambda` for a cyclic group,
/// `III_1` for higher rank, `II_1` for a free group piece.
pub fn connes_type(c: &Classification) -> Result<ConnesType, ClassifyError> {
    match &c.diffuse {
        None => Err(ClassifyError::NoDiffusePiece),
        Some(DiffusePiece::FreeGroup { .. }) => Ok(ConnesType::TypeIiOne),
        Some(DiffusePiece::ArakiWoods { group, .. }) => match group.kind() {
            GroupKind::Trivial => Err(ClassifyError::NoDiffusePiece),
            GroupKind::Cyclic(lambda) => Ok(ConnesType::TypeIiiLambda(lambda)),
            GroupKind::HigherRank => Ok(ConnesType::TypeIiiOne),
        },
    }
}

/// Compression selector: a sub-mass of the diffuse piece plus, per residual
/// block index, the retained diagonal positions.
#[derive(Clone, Debug, Default)]
pub struct Selector {
    pub diffuse_mass: Option<PosRat>,
    pub residual_diagonals: Vec<(usize, Vec<usize>)>,
    pub renormalize: bool,
}

impl Selector {
    pub fn everything(c: &Classification) -> Selector {
        Selector {
            diffuse_mass: c.diffuse.as_ref().map(|d| d.mass().clone()),
            residual_diagonals: c
                .residuals
                .iter()
                .enumerate()
                .map(|(i, r)| (i, (0..r.weights.len()).collect()))
                .collect(),
            renormalize: false,
        }
    }
}

/// Compression by a projection in the centralizer: the diffuse piece keeps
/// its group at the selected sub-mass, and the selected residual diagonals
/// form the compressed finite part. A proper sub-mass of an exact finite
/// free group piece loses the parameter to `Unknown`.
pub fn compress(c: &Classification, sel: &Selector) -> Result<Classification, ClassifyError> {
    let no_diagonals = sel.residual_diagonals.iter().all(|(_, d)| d.is_empty());
    if sel.diffuse_mass.is_none() && no_diagonals {
        return Err(ClassifyError::EmptySelection);
    }
    let diffuse = match (&sel.diffuse_mass, &c.diffuse) {
        (None, _) => None,
        (Some(_), None) => {
            return Err(ClassifyError::BadSelection(
                "selected a diffuse sub-mass but there is no diffuse piece".into(),
            ))
        }
        (Some(m), Some(piece)) => {
            if m.as_ratio() > piece.mass().as_ratio() {
                return Err(ClassifyError::BadSelection(format!(
                    "diffuse sub-mass {m} exceeds available {}",
                    piece.mass()
                )));
            }
            let proper = m != piece.mass();
            Some(match piece {
                DiffusePiece::ArakiWoods { group, .. } => DiffusePiece::ArakiWoods {
                    group: group.clone(),
                    mass: m.clone(),
                },
                DiffusePiece::FreeGroup { param, .. } => {
                    let param = match (proper, param) {
                        (false, p) => p.clone(),
                        (true, FreeGroupParam::Finite(_)) => FreeGroupParam::Unknown,
                        // The infinite and abelian diffuse pieces survive
                        // compression; an unknown parameter stays unknown.
                        (true, p) => p.clone(),
                    };
                    DiffusePiece::FreeGroup {
                        param,
                        mass: m.clone(),
                    }
                }
            })
        }
    };
    let mut residuals = Vec::new();
    for (idx, keep) in &sel.residual_diagonals {
        let Some(r) = c.residuals.get(*idx) else {
            return Err(ClassifyError::BadSelection(format!(
                "no residual block at index {idx}"
            )));
        };
        if keep.is_empty() {
            continue;
        }
        let mut weights = Vec::with_capacity(keep.len());
        let mut diagonals = Vec::with_capacity(keep.len());
        for &k in keep {
            let Some(w) = r.weights.get(k) else {
                return Err(ClassifyError::BadSelection(format!(
                    "residual {idx} has no diagonal {k}"
                )));
            };
            weights.push(w.clone());
            diagonals.push(r.provenance.block_diagonals[k]);
        }
        residuals.push(ResidualBlock {
            weights,
            provenance: Provenance {
                atom: r.provenance.atom.clone(),
                block: r.provenance.block.clone(),
                block_diagonals: diagonals,
            },
        });
    }
    let diffuse_mass = diffuse
        .as_ref()
        .map(|d| d.mass().as_ratio().clone())
        .unwrap_or_else(BigRational::zero);
    let total = diffuse_mass
        + residuals
            .iter()
            .fold(BigRational::zero(), |acc, r| acc + PosRat::sum(&r.weights));
    let total_mass = PosRat::from_ratio(total).map_err(|_| ClassifyError::EmptySelection)?;
    let compressed = Classification {
        diffuse,
        residuals,
        total_mass: total_mass.clone(),
    };
    Ok(if sel.renormalize {
        compressed.rescaled(&total_mass.recip())
    } else {
        compressed
    })
}

/// A tree of free products, direct sums, and tensor products over algebras.
#[derive(Clone, Debug)]
pub enum ProductExpr {
    Leaf(Algebra),
    FreeProduct(Box<ProductExpr>, Box<ProductExpr>),
    DirectSum(Box<ProductExpr>, Box<ProductExpr>),
    Tensor(Box<ProductExpr>, Box<ProductExpr>),
}

/// Folds a product expression left to right: direct sums concatenate,
/// tensors simplify through the absorption identities, and free products go
/// through [`free_product_classify`], re-entering as algebras.
pub fn simplify_product_expression(expr: &ProductExpr) -> Result<Classification, ClassifyError> {
    match eval_expr(expr, &mut 0)? {
        Evaluated::Classified(c) => Ok(c),
        Evaluated::Plain(a) => {
            let unit = proj(Side::Left, "1");
            trivial_classification(&a, unit)
        }
    }
}

enum Evaluated {
    Plain(Algebra),
    Classified(Classification),
}

impl Evaluated {
    fn into_algebra(self, counter: &mut usize) -> Algebra {
        match self {
            Evaluated::Plain(a) => a,
            Evaluated::Classified(c) => {
                *counter += 1;
                c.into_algebra(format!("P{counter}"))
            }
        }
    }
}

fn eval_expr(expr: &ProductExpr, counter: &mut usize) -> Result<Evaluated, ClassifyError> {
    match expr {
        ProductExpr::Leaf(a) => Ok(Evaluated::Plain(a.clone())),
        ProductExpr::FreeProduct(l, r) => {
            let left = eval_expr(l, counter)?.into_algebra(counter);
            let right = eval_expr(r, counter)?.into_algebra(counter);
            free_product_classify(&left, &right).map(Evaluated::Classified)
        }
        ProductExpr::DirectSum(l, r) => {
            let left = eval_expr(l, counter)?.into_algebra(counter);
            let right = eval_expr(r, counter)?.into_algebra(counter);
            let mut summands = left.summands().to_vec();
            summands.extend(right.summands().iter().cloned());
            // Relabel to keep labels unique in the combined sum.
            let summands = summands
                .into_iter()
                .map(|s| match s {
                    Summand::MatrixBlock { weights, .. } => Summand::matrix(weights),
                    Summand::TypeIInfinite {
                        head, lambda, c, ..
                    } => Summand::TypeIInfinite {
                        label: String::new(),
                        head,
                        lambda,
                        c,
                    },
                    other => other,
                })
                .collect();
            *counter += 1;
            Ok(Evaluated::Plain(Algebra::new(
                format!("S{counter}"),
                summands,
            )))
        }
        ProductExpr::Tensor(l, r) => {
            let left = eval_expr(l, counter)?.into_algebra(counter);
            let right = eval_expr(r, counter)?.into_algebra(counter);
            *counter += 1;
            tensor_algebras(&left, &right, *counter).map(Evaluated::Plain)
        }
    }
}

fn single_summand(a: &Algebra) -> Result<&Summand, ClassifyError> {
    match a.summands() {
        [s] => Ok(s),
        _ => Err(ClassifyError::UnsupportedTensor(format!(
            "{} has {} summands; tensor operands must be single summands",
            a.label(),
            a.summands().len()
        ))),
    }
}

/// Tensor product of two single-summand algebras. Supports finite type I
/// against finite type I (by multiplying the weight profiles) and a type I
/// part against a diffuse free-group or Araki-Woods part, which is then
/// simplified by the absorption identities.
fn tensor_algebras(a: &Algebra, b: &Algebra, counter: usize) -> Result<Algebra, ClassifyError> {
    let sa = single_summand(a)?;
    let sb = single_summand(b)?;
    let label = format!("T{counter}");
    let unsupported = || {
        ClassifyError::UnsupportedTensor(format!(
            "cannot tensor {} with {}",
            kind_name(sa),
            kind_name(sb)
        ))
    };
    let profile_of = |s: &Summand| -> Option<(TypeIProfile, PosRat)> {
        match s {
            Summand::MatrixBlock { weights, .. } => {
                let mass = PosRat::from_ratio(PosRat::sum(weights)).expect("positive");
                let scale = mass.recip();
                Some((
                    TypeIProfile::Finite(weights.iter().map(|w| w * &scale).collect()),
                    mass,
                ))
            }
            Summand::TypeIInfinite {
                head, lambda, c, ..
            } => {
                let mass = s.mass();
                let scale = mass.recip();
                Some((
                    TypeIProfile::Geometric {
                        head: head.iter().map(|w| w * &scale).collect(),
                        lambda: lambda.clone(),
                        c: c * &scale,
                    },
                    mass,
                ))
            }
            _ => None,
        }
    };
    let diffuse_of = |s: &Summand| -> Option<(TensorDiffuse, PosRat)> {
        match s {
            Summand::FreeGroupFactor { param, mass } => {
                Some((TensorDiffuse::FreeGroup(param.clone()), mass.clone()))
            }
            Summand::ArakiWoods { group, mass } => {
                Some((TensorDiffuse::ArakiWoods(group.clone()), mass.clone()))
            }
            _ => None,
        }
    };
    // finite type I x finite type I: multiply the weight lists
    if let (Summand::MatrixBlock { weights: wa, .. }, Summand::MatrixBlock { weights: wb, .. }) =
        (sa, sb)
    {
        let weights = wa
            .iter()
            .flat_map(|x| wb.iter().map(move |y| x * y))
            .collect();
        return Ok(Algebra::new(label, vec![Summand::matrix(weights)]));
    }
    let (type_i, diffuse, mass) =
        if let (Some((p, mp)), Some((d, md))) = (profile_of(sa), diffuse_of(sb)) {
            (p, d, &mp * &md)
        } else if let (Some((d, md)), Some((p, mp))) = (diffuse_of(sa), profile_of(sb)) {
            (p, d, &mp * &md)
        } else {
            return Err(unsupported());
        };
    let summand = tensor_simplify(&Summand::Tensor {
        type_i,
        diffuse,
        mass,
    });
    Ok(Algebra::new(label, vec![summand]))
}

// ---------------------------------------------------------------------------
// JSON schema
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassificationDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diffuse: Option<DiffuseDoc>,
    pub residuals: Vec<ResidualDoc>,
    pub total_mass: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum DiffuseDoc {
    #[serde(rename = "araki_woods")]
    ArakiWoods {
        generators: Vec<String>,
        mass: String,
        #[serde(rename = "type")]
        connes_type: String,
    },
    #[serde(rename = "free_group")]
    FreeGroup {
        t: String,
        mass: String,
        #[serde(rename = "type")]
        connes_type: String,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualDoc {
    pub weights: Vec<String>,
    pub provenance: Provenance,
}

impl Classification {
    pub fn to_doc(&self) -> ClassificationDoc {
        let diffuse = self.diffuse.as_ref().map(|d| match d {
            DiffusePiece::ArakiWoods { group, mass } => DiffuseDoc::ArakiWoods {
                generators: group.generators().iter().map(|g| g.to_string()).collect(),
                mass: mass.to_string(),
                connes_type: connes_type(self)
                    .map(|t| t.to_string())
                    .unwrap_or_default(),
            },
            DiffusePiece::FreeGroup { param, mass } => DiffuseDoc::FreeGroup {
                t: param.to_string(),
                mass: mass.to_string(),
                connes_type: ConnesType::TypeIiOne.to_string(),
            },
        });
        ClassificationDoc {
            diffuse,
            residuals: self
                .residuals
                .iter()
                .map(|r| ResidualDoc {
                    weights: r.weights.iter().map(|w| w.to_string()).collect(),
                    provenance: r.provenance.clone(),
                })
                .collect(),
            total_mass: self.total_mass.to_string(),
        }
    }
}

/// Canonical JSON document of an algebra, for the command line.
pub fn algebra_doc(a: &Algebra) -> AlgebraDoc {
    to_doc(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: u64, d: u64) -> PosRat {
        PosRat::of(n, d)
    }

    fn alg(label: &str, summands: Vec<Summand>) -> Algebra {
        Algebra::new(label, summands)
    }

    fn m2_35() -> Algebra {
        alg("A", vec![Summand::matrix(vec![r(3, 5), r(2, 5)])])
    }

    fn atoms_45_15() -> Algebra {
        alg("B", vec![Summand::atom(r(4, 5)), Summand::atom(r(1, 5))])
    }

    fn aw(group: RatioGroup, mass: PosRat) -> Algebra {
        alg("T", vec![Summand::ArakiWoods { group, mass }])
    }

    #[test]
    fn gamma_examples() {
        // oracle: direct sums of the defining fractions
        let direct = &(&r(1, 10) / &r(3, 10)) + &(&r(1, 10) / &r(1, 5));
        assert_eq!(direct, r(5, 6));
        assert_eq!(
            residual_gamma(&r(9, 10), &[r(3, 10), r(1, 5)]).unwrap(),
            r(5, 6)
        );
        assert_eq!(residual_gamma(&r(1, 2), &[r(1, 2)]).unwrap(), PosRat::one());
        assert_eq!(
            residual_gamma(&r(4, 5), &[r(3, 5), r(2, 5)]).unwrap(),
            r(5, 6)
        );
        assert!(residual_gamma(&PosRat::one(), &[r(1, 2)]).is_err());
    }

    #[test]
    fn theorem_m2_instance() {
        // alpha = 3/5, beta = 4/5: gamma = 5/6 < 1
        let c = free_product_classify(&m2_35(), &atoms_45_15()).unwrap();
        let diffuse = c.diffuse.as_ref().unwrap();
        assert_eq!(diffuse.group(), Some(&RatioGroup::cyclic(&r(2, 3))));
        assert_eq!(diffuse.mass(), &r(5, 6));
        assert_eq!(c.residuals.len(), 1);
        assert_eq!(c.residuals[0].weights, vec![r(1, 10), r(1, 15)]);
        let p = &c.residuals[0].provenance;
        assert_eq!(p.atom, proj(Side::Right, "B:0"));
        assert_eq!(p.block, proj(Side::Left, "A:0"));
        assert_eq!(p.block_diagonals, vec![0, 1]);
        assert!(c.mass_is_conserved());
        assert_eq!(connes_type(&c).unwrap(), ConnesType::TypeIiiLambda(r(2, 3)));
    }

    #[test]
    fn theorem_m2_absorbing_instance() {
        // alpha = 3/5, beta = 7/10: gamma = 5/4 >= 1, no residual
        let b = alg("B", vec![Summand::atom(r(7, 10)), Summand::atom(r(3, 10))]);
        let c = free_product_classify(&m2_35(), &b).unwrap();
        assert_eq!(c.residuals, vec![]);
        let diffuse = c.diffuse.unwrap();
        assert_eq!(diffuse.group(), Some(&RatioGroup::cyclic(&r(2, 3))));
        assert_eq!(diffuse.mass(), &PosRat::one());
    }

    #[test]
    fn multi_block_instance() {
        let a = alg(
            "A",
            vec![
                Summand::matrix(vec![r(1, 20), r(1, 20)]),
                Summand::atom(r(9, 10)),
            ],
        );
        let b = alg(
            "B",
            vec![
                Summand::matrix(vec![r(3, 10), r(1, 5)]),
                Summand::atom(r(1, 2)),
            ],
        );
        let c = free_product_classify(&a, &b).unwrap();
        let diffuse = c.diffuse.as_ref().unwrap();
        assert_eq!(diffuse.group(), Some(&RatioGroup::cyclic(&r(3, 2))));
        assert_eq!(diffuse.mass(), &r(31, 60));
        let mut weights: Vec<Vec<PosRat>> = c.residuals.iter().map(|x| x.weights.clone()).collect();
        weights.sort();
        assert_eq!(weights, vec![vec![r(1, 20), r(1, 30)], vec![r(2, 5)]]);
        assert!(c.mass_is_conserved());
    }

    #[test]
    fn matrix_times_matrix_is_a_factor() {
        let a = alg("A", vec![Summand::matrix(vec![r(2, 3), r(1, 3)])]);
        let b = alg("B", vec![Summand::matrix(vec![r(1, 2), r(1, 2)])]);
        let c = free_product_classify(&a, &b).unwrap();
        assert!(c.residuals.is_empty());
        let diffuse = c.diffuse.unwrap();
        assert_eq!(diffuse.group(), Some(&RatioGroup::cyclic(&r(2, 1))));
        assert_eq!(diffuse.mass(), &PosRat::one());
    }

    #[test]
    fn scalar_free_product_returns_other_factor() {
        let one = alg("C", vec![Summand::atom(PosRat::one())]);
        let t = aw(RatioGroup::cyclic(&r(1, 2)), PosRat::one());
        let c = free_product_classify(&one, &t).unwrap();
        assert_eq!(
            c.diffuse.unwrap().group(),
            Some(&RatioGroup::cyclic(&r(1, 2)))
        );
        assert!(c.residuals.is_empty());
    }

    #[test]
    fn both_tracial_is_rejected() {
        let a = alg("A", vec![Summand::atom(r(1, 2)), Summand::atom(r(1, 2))]);
        let b = alg("B", vec![Summand::atom(r(1, 2)), Summand::atom(r(1, 2))]);
        assert!(matches!(
            free_product_classify(&a, &b),
            Err(ClassifyError::BothTracial)
        ));
    }

    #[test]
    fn mass_mismatch_is_rejected() {
        let a = m2_35();
        let b = alg("B", vec![Summand::atom(r(1, 2))]);
        assert!(matches!(
            free_product_classify(&a, &b),
            Err(ClassifyError::MassMismatch { .. })
        ));
    }

    #[test]
    fn symmetry_up_to_mirror() {
        let a = alg(
            "A",
            vec![
                Summand::matrix(vec![r(1, 20), r(1, 20)]),
                Summand::atom(r(9, 10)),
            ],
        );
        let b = alg(
            "B",
            vec![
                Summand::matrix(vec![r(3, 10), r(1, 5)]),
                Summand::atom(r(1, 2)),
            ],
        );
        let lr = free_product_classify(&a, &b).unwrap();
        let rl = free_product_classify(&b, &a).unwrap();
        assert_eq!(lr, rl.mirrored());
    }

    #[test]
    fn absorption_identities() {
        let t2 = aw(RatioGroup::cyclic(&r(2, 1)), PosRat::one());
        let linf = alg(
            "L",
            vec![Summand::FreeGroupFactor {
                param: FreeGroupParam::Infinite,
                mass: PosRat::one(),
            }],
        );
        let c = free_product_classify(&t2, &linf).unwrap();
        assert_eq!(
            c.diffuse.unwrap().group(),
            Some(&RatioGroup::cyclic(&r(2, 1)))
        );

        let t3 = aw(RatioGroup::cyclic(&r(3, 1)), PosRat::one());
        let c = free_product_classify(&t2, &t3).unwrap();
        assert_eq!(
            c.diffuse.unwrap().group(),
            Some(&RatioGroup::generate(&[r(2, 1), r(3, 1)]))
        );

        let lz = alg(
            "LZ",
            vec![Summand::FreeGroupFactor {
                param: FreeGroupParam::One,
                mass: PosRat::one(),
            }],
        );
        let bh = alg("B", vec![Summand::psi_lambda_infinite(r(1, 2))]);
        let c = free_product_classify(&lz, &bh).unwrap();
        let d = c.diffuse.unwrap();
        assert_eq!(d.group(), Some(&RatioGroup::cyclic(&r(1, 2))));
        assert_eq!(d.mass(), &PosRat::one());
        assert!(c.residuals.is_empty());
    }

    #[test]
    fn compress_full_selection_is_identity() {
        let c = free_product_classify(&m2_35(), &atoms_45_15()).unwrap();
        let sel = Selector::everything(&c);
        assert_eq!(compress(&c, &sel).unwrap(), c);
    }

    #[test]
    fn compress_spec_examples() {
        let c = free_product_classify(&m2_35(), &atoms_45_15()).unwrap();
        // keep 1/3 of the diffuse piece, drop the residual
        let sel = Selector {
            diffuse_mass: Some(r(1, 3)),
            residual_diagonals: vec![],
            renormalize: false,
        };
        let k = compress(&c, &sel).unwrap();
        let d = k.diffuse.as_ref().unwrap();
        assert_eq!(d.group(), Some(&RatioGroup::cyclic(&r(2, 3))));
        assert_eq!(d.mass(), &r(1, 3));
        assert!(k.residuals.is_empty());
        // keep diagonal 0 of the residual plus the whole diffuse piece
        let sel = Selector {
            diffuse_mass: Some(r(5, 6)),
            residual_diagonals: vec![(0, vec![0])],
            renormalize: false,
        };
        let k = compress(&c, &sel).unwrap();
        assert_eq!(k.residuals.len(), 1);
        assert_eq!(k.residuals[0].weights, vec![r(1, 10)]);
        assert_eq!(k.residuals[0].provenance.block_diagonals, vec![0]);
        assert_eq!(k.total_mass, &r(5, 6) + &r(1, 10));
    }

    #[test]
    fn compress_composes() {
        let c = free_product_classify(&m2_35(), &atoms_45_15()).unwrap();
        let s1 = Selector {
            diffuse_mass: Some(r(1, 2)),
            residual_diagonals: vec![(0, vec![0, 1])],
            renormalize: false,
        };
        let s2 = Selector {
            diffuse_mass: Some(r(1, 3)),
            residual_diagonals: vec![(0, vec![1])],
            renormalize: false,
        };
        let twice = compress(&compress(&c, &s1).unwrap(), &s2).unwrap();
        let composed = compress(&c, &s2).unwrap();
        assert_eq!(twice, composed);
    }

    #[test]
    fn compress_loses_exact_free_group_parameter() {
        let c = Classification {
            diffuse: Some(DiffusePiece::FreeGroup {
                param: FreeGroupParam::Finite(r(3, 1)),
                mass: PosRat::one(),
            }),
            residuals: vec![],
            total_mass: PosRat::one(),
        };
        let sel = Selector {
            diffuse_mass: Some(r(1, 2)),
            residual_diagonals: vec![],
            renormalize: false,
        };
        let k = compress(&c, &sel).unwrap();
        assert_eq!(
            k.diffuse,
            Some(DiffusePiece::FreeGroup {
                param: FreeGroupParam::Unknown,
                mass: r(1, 2),
            })
        );
        assert!(matches!(
            compress(&c, &Selector::default()),
            Err(ClassifyError::EmptySelection)
        ));
    }

    #[test]
    fn expression_folding() {
        // L(Z) * psi_{1/2} on B(H) gives the cyclic factor at 1/2
        let lz = alg(
            "LZ",
            vec![Summand::FreeGroupFactor {
                param: FreeGroupParam::One,
                mass: PosRat::one(),
            }],
        );
        let bh = alg("B", vec![Summand::psi_lambda_infinite(r(1, 2))]);
        let expr = ProductExpr::FreeProduct(
            Box::new(ProductExpr::Leaf(lz)),
            Box::new(ProductExpr::Leaf(bh)),
        );
        let c = simplify_product_expression(&expr).unwrap();
        assert_eq!(
            c.diffuse.unwrap().group(),
            Some(&RatioGroup::cyclic(&r(1, 2)))
        );

        // (M2(3/5,2/5) * (C(4/5) + C(1/5))) then again against T_<2>
        let inner = ProductExpr::FreeProduct(
            Box::new(ProductExpr::Leaf(m2_35())),
            Box::new(ProductExpr::Leaf(atoms_45_15())),
        );
        let outer = ProductExpr::FreeProduct(
            Box::new(inner),
            Box::new(ProductExpr::Leaf(aw(
                RatioGroup::cyclic(&r(2, 1)),
                PosRat::one(),
            ))),
        );
        let c = simplify_product_expression(&outer).unwrap();
        assert_eq!(
            c.diffuse.unwrap().group(),
            Some(&RatioGroup::generate(&[r(2, 3), r(2, 1)]))
        );
        // the residual of the inner product is eaten by the diffuse factor
        assert!(c.residuals.is_empty());
    }

    #[test]
    fn tensor_in_expressions() {
        // M2 uniform (x) L(F_{3/2}) = L(F_3)
        let m2 = alg("M", vec![Summand::matrix(vec![r(1, 2), r(1, 2)])]);
        let lf = alg(
            "F",
            vec![Summand::FreeGroupFactor {
                param: FreeGroupParam::Finite(r(3, 2)),
                mass: PosRat::one(),
            }],
        );
        let expr = ProductExpr::Tensor(
            Box::new(ProductExpr::Leaf(m2)),
            Box::new(ProductExpr::Leaf(lf)),
        );
        let c = simplify_product_expression(&expr).unwrap();
        assert_eq!(
            c.diffuse,
            Some(DiffusePiece::FreeGroup {
                param: FreeGroupParam::Finite(r(3, 1)),
                mass: PosRat::one(),
            })
        );
    }

    #[test]
    fn scarcity_of_surviving_atoms() {
        // two atoms opposing one block: only the heaviest can survive
        let a = alg(
            "A",
            vec![
                Summand::matrix(vec![r(3, 25), r(2, 25)]),
                Summand::atom(r(4, 5)),
            ],
        );
        let b = alg("B", vec![Summand::atom(r(24, 25)), Summand::atom(r(1, 25))]);
        let c = free_product_classify(&a, &b).unwrap();
        let against_block: Vec<_> = c
            .residuals
            .iter()
            .filter(|r| r.weights.len() >= 2)
            .collect();
        assert!(against_block.len() <= 1);
        assert!(c.mass_is_conserved());
    }
}
