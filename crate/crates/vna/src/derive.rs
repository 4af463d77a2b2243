//! An independent inductive engine for free products.
//!
//! Instead of the closed-form rules in [`crate::classify`], this engine
//! starts from the free product of the two centers and expands one central
//! atom at a time into its full summand. Each expansion cuts the corner at
//! the atom, free-multiplies the renormalized corner against the
//! renormalized replacement with a base rule, reinflates by the compression
//! ratio, and merges the untouched residuals back in. The run is recorded as
//! a replayable trace, and the final classification is cross-checked against
//! the closed form: disagreement is a hard `OracleMismatch` error.

use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::algebra::{to_doc, Algebra, AlgebraDoc, FreeGroupParam, Summand};
use crate::classify::{
    free_product_classify, kind_name, residual_gamma, Classification, ClassifyError,
    ClassificationDoc, DiffusePiece, ProjRef, Provenance, ResidualBlock, Side,
};
use crate::rat::PosRat;
use crate::ratio_group::RatioGroup;

#[derive(Debug, thiserror::Error)]
pub enum DeriveError {
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error("rule needs abelian inputs: {0}")]
    NonAbelianInput(String),
    #[error("no rule matches the corner shape: {0}")]
    NoMatchingRule(String),
    #[error("unknown or already expanded atom {0:?}")]
    UnknownAtom(String),
    #[error("replacement mass {replacement} differs from atom mass {atom}")]
    ExpansionMassMismatch { atom: PosRat, replacement: PosRat },
    #[error("expansion order must cover each remaining summand exactly once: {0}")]
    BadOrder(String),
    #[error("derivation disagrees with the closed form")]
    OracleMismatch {
        expected: Box<Classification>,
        derived: Box<Classification>,
        trace: Box<DerivationTrace>,
    },
}

/// Identifier of the rule applied in one derivation step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleId {
    /// Free product with the scalars.
    ScalarIdentity,
    /// Free product of two abelian centers.
    AbelianPair,
    /// A matrix block or infinite type I factor against a mixed corner.
    BlockVsMixed,
    /// A diffuse replacement swallows the corner.
    DiffuseAbsorption,
}

/// The corner cut at an atom, renormalized to mass 1: leftover atoms from
/// unexpanded atom-atom pairs, residual blocks already pinned under the
/// atom, and the compressed diffuse piece.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MixedCorner {
    pub atoms: Vec<(ProjRef, PosRat)>,
    pub blocks: Vec<(String, Vec<PosRat>)>,
    /// Group and mass of the diffuse piece; a trivial group stands for a
    /// tracial (interpolated free group) piece of unknown parameter.
    pub diffuse: Option<(RatioGroup, PosRat)>,
}

impl MixedCorner {
    fn mass(&self) -> BigRational {
        let mut m = BigRational::zero();
        for (_, a) in &self.atoms {
            m += a.as_ratio();
        }
        for (_, w) in &self.blocks {
            m += PosRat::sum(w);
        }
        if let Some((_, d)) = &self.diffuse {
            m += d.as_ratio();
        }
        m
    }

    fn rescaled(&self, scale: &PosRat) -> MixedCorner {
        MixedCorner {
            atoms: self
                .atoms
                .iter()
                .map(|(p, m)| (p.clone(), m * scale))
                .collect(),
            blocks: self
                .blocks
                .iter()
                .map(|(l, w)| (l.clone(), w.iter().map(|x| x * scale).collect()))
                .collect(),
            diffuse: self.diffuse.as_ref().map(|(g, m)| (g.clone(), m * scale)),
        }
    }

    fn block_group(&self) -> RatioGroup {
        self.blocks
            .iter()
            .fold(RatioGroup::trivial(), |acc, (_, w)| {
                let gens: Vec<PosRat> = w.iter().skip(1).map(|x| x / &w[0]).collect();
                acc.join(&RatioGroup::generate(&gens))
            })
    }

    fn diffuse_group(&self) -> RatioGroup {
        self.diffuse
            .as_ref()
            .map(|(g, _)| g.clone())
            .unwrap_or_else(RatioGroup::trivial)
    }

    fn heaviest_atom(&self) -> Option<&(ProjRef, PosRat)> {
        self.atoms.iter().max_by(|a, b| a.1.cmp(&b.1))
    }
}

/// One recorded derivation step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivationStep {
    pub rule: RuleId,
    /// Tag of the classification identity the step applied.
    pub citation: String,
    /// Which original central atom was expanded; the base step has none.
    pub expanded: Option<(Side, String)>,
    /// The renormalized corner the rule consumed.
    pub corner: MixedCorner,
    /// Snapshot of the full classification after the step (mass 1 scale).
    pub result: Classification,
    /// Whether the expanded projection kept full central support, i.e. the
    /// step produced no new residual.
    pub full_central_support: bool,
}

/// A full derivation: the normalized inputs, the executed expansion order,
/// the steps, and the final classification in the normalized scale.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivationTrace {
    pub left: Algebra,
    pub right: Algebra,
    pub order: Vec<(Side, usize)>,
    pub steps: Vec<DerivationStep>,
    pub final_class: Classification,
}

impl DerivationTrace {
    /// Masses are conserved step to step.
    pub fn conserves_mass(&self) -> bool {
        self.steps.iter().all(|s| s.result.mass_is_conserved())
    }
}

// ---------------------------------------------------------------------------
// Base rules
// ---------------------------------------------------------------------------

/// Free product of two finite-dimensional abelian algebras, both normalized
/// to mass 1 and at least two-dimensional: an interpolated free group factor
/// of unknown parameter plus one atom of mass `alpha + beta - 1` for every
/// pair of atoms exceeding the unit, sitting under both projections.
pub fn rule_abelian_abelian(a: &Algebra, b: &Algebra) -> Result<Classification, DeriveError> {
    for (side, alg) in [("left", a), ("right", b)] {
        if alg.summands().len() < 2 {
            return Err(DeriveError::NonAbelianInput(format!(
                "{side} factor must be at least two-dimensional"
            )));
        }
        if !alg.summands().iter().all(|s| s.is_atom()) {
            return Err(DeriveError::NonAbelianInput(format!(
                "{side} factor has a non-atomic summand"
            )));
        }
    }
    let mut residuals = Vec::new();
    for p in a.summands() {
        for q in b.summands() {
            let excess = p.mass().as_ratio() + q.mass().as_ratio() - BigRational::one();
            let Ok(mass) = PosRat::from_ratio(excess) else {
                continue;
            };
            residuals.push(ResidualBlock {
                weights: vec![mass],
                provenance: Provenance {
                    atom: ProjRef {
                        side: Side::Left,
                        label: p.label().expect("atoms carry labels").to_string(),
                    },
                    block: ProjRef {
                        side: Side::Right,
                        label: q.label().expect("atoms carry labels").to_string(),
                    },
                    block_diagonals: vec![0],
                },
            });
        }
    }
    finish_unit_classification(RatioGroup::trivial(), residuals)
}

/// A full matrix block or infinite type I factor (mass 1) against a mixed
/// corner (mass 1). Returns the resulting classification and the citation
/// tag of the identity that matched.
pub fn rule_matrix_vs_mixed(
    block: &Summand,
    block_ref: &ProjRef,
    mixed: &MixedCorner,
) -> Result<(Classification, String), DeriveError> {
    let infinite = match block {
        Summand::MatrixBlock { weights, .. } if weights.len() >= 2 => false,
        Summand::TypeIInfinite { .. } => true,
        other => {
            return Err(DeriveError::NoMatchingRule(format!(
                "expanding summand must be a matrix block of size >= 2 \
                 or an infinite type I factor, got {}",
                kind_name(other)
            )))
        }
    };
    debug_assert_eq!(block.mass(), PosRat::one());
    debug_assert_eq!(mixed.mass(), BigRational::one());
    let group = block
        .ratio_group()
        .join(&mixed.block_group())
        .join(&mixed.diffuse_group());
    let mut residuals = Vec::new();
    if !infinite {
        // Only the heaviest opposing atom can clear the threshold.
        let weights = block.block_weights().expect("finite block");
        if let Some((atom_ref, atom_mass)) = mixed.heaviest_atom() {
            let gamma = residual_gamma(atom_mass, weights)?;
            if let Some(survival) = gamma.one_minus() {
                residuals.push(ResidualBlock {
                    weights: weights.iter().map(|w| w * &survival).collect(),
                    provenance: Provenance {
                        atom: atom_ref.clone(),
                        block: block_ref.clone(),
                        block_diagonals: (0..weights.len()).collect(),
                    },
                });
            }
        }
    }
    let citation = citation_for(infinite, mixed);
    finish_unit_classification(group, residuals).map(|c| (c, citation))
}

/// A diffuse full factor (mass 1) against a mixed corner (mass 1): the
/// corner is swallowed whole and only the spectra join survives.
fn rule_diffuse_absorption(
    replacement_group: &RatioGroup,
    mixed: &MixedCorner,
) -> Result<(Classification, String), DeriveError> {
    let group = replacement_group
        .join(&mixed.block_group())
        .join(&mixed.diffuse_group());
    finish_unit_classification(group, Vec::new()).map(|c| (c, "diffuse-absorption".to_string()))
}

fn citation_for(infinite: bool, mixed: &MixedCorner) -> String {
    let atoms = mixed.atoms.len();
    let blocks = mixed.blocks.len();
    let diffuse = mixed.diffuse.is_some();
    let tag = if infinite {
        "infinite-type-i"
    } else {
        match (atoms, blocks, diffuse) {
            (0, 1, false) => "matrix-pair",
            (2, 0, false) => "matrix-two-atoms",
            (_, 0, false) => "matrix-abelian",
            (0, 0, true) => "matrix-diffuse",
            (1, 0, true) => "matrix-atom-diffuse",
            (0, _, true) => "matrix-block-diffuse",
            _ => "matrix-mixed",
        }
    };
    tag.to_string()
}

fn finish_unit_classification(
    group: RatioGroup,
    mut residuals: Vec<ResidualBlock>,
) -> Result<Classification, DeriveError> {
    let used = residuals
        .iter()
        .fold(BigRational::zero(), |acc, r| acc + PosRat::sum(&r.weights));
    let diffuse_mass = PosRat::from_ratio(BigRational::one() - used).map_err(|_| {
        DeriveError::NoMatchingRule("residual masses exhaust the free product".into())
    })?;
    let diffuse = if group.is_trivial() {
        DiffusePiece::FreeGroup {
            param: FreeGroupParam::Unknown,
            mass: diffuse_mass,
        }
    } else {
        DiffusePiece::ArakiWoods {
            group,
            mass: diffuse_mass,
        }
    };
    residuals.sort_by(|a, b| a.provenance.cmp(&b.provenance));
    Ok(Classification {
        diffuse: Some(diffuse),
        residuals,
        total_mass: PosRat::one(),
    })
}

// ---------------------------------------------------------------------------
// The expansion engine
// ---------------------------------------------------------------------------

/// A partially expanded free product: the two normalized factors, which of
/// their central summands have been expanded, and the classification so far.
#[derive(Clone, Debug)]
pub struct DerivationState {
    left: Algebra,
    right: Algebra,
    expanded: Vec<(Side, usize)>,
    pub class: Classification,
}

impl DerivationState {
    pub fn factor(&self, side: Side) -> &Algebra {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    fn is_expanded(&self, side: Side, idx: usize) -> bool {
        self.expanded.contains(&(side, idx))
    }

    /// Expands the original central atom of summand `idx` on `side` into
    /// `replacement`, which must have the same mass.
    pub fn expand_atom(
        &self,
        side: Side,
        idx: usize,
        replacement: &Summand,
    ) -> Result<(DerivationState, DerivationStep), DeriveError> {
        let factor = self.factor(side);
        if idx >= factor.summands().len() {
            return Err(DeriveError::UnknownAtom(format!("{side:?}[{idx}]")));
        }
        if self.is_expanded(side, idx) {
            return Err(DeriveError::UnknownAtom(format!(
                "{side:?}[{idx}] was already expanded"
            )));
        }
        let atom_label = factor.central_label(idx);
        let atom_mass = factor.summands()[idx].mass();
        if replacement.mass() != atom_mass {
            return Err(DeriveError::ExpansionMassMismatch {
                atom: atom_mass,
                replacement: replacement.mass(),
            });
        }

        let atom_ref = ProjRef {
            side,
            label: atom_label.clone(),
        };
        let (corner, kept_residuals, corner_diffuse_taken) =
            self.cut_corner(&atom_ref, &atom_mass);
        let scale = atom_mass.recip();
        let corner_unit = corner.rescaled(&scale);

        // An atom replaced by an atom changes nothing.
        if replacement.is_atom() {
            let step = DerivationStep {
                rule: RuleId::ScalarIdentity,
                citation: "scalar-identity".into(),
                expanded: Some((side, atom_label)),
                corner: corner_unit,
                result: self.class.clone(),
                full_central_support: true,
            };
            let mut next = self.clone();
            next.expanded.push((side, idx));
            return Ok((next, step));
        }

        let scaled_replacement = replacement.rescaled(&scale);
        let (unit_result, rule, citation) = if scaled_replacement.is_diffuse() {
            let (c, cite) =
                rule_diffuse_absorption(&scaled_replacement.ratio_group(), &corner_unit)?;
            (c, RuleId::DiffuseAbsorption, cite)
        } else {
            let (c, cite) = rule_matrix_vs_mixed(&scaled_replacement, &atom_ref, &corner_unit)?;
            (c, RuleId::BlockVsMixed, cite)
        };

        // Reinflate by the compression ratio and merge untouched residuals.
        let mut residuals = kept_residuals;
        let mut new_residual = false;
        for r in &unit_result.residuals {
            new_residual = true;
            residuals.push(ResidualBlock {
                weights: r.weights.iter().map(|w| w * &atom_mass).collect(),
                provenance: r.provenance.clone(),
            });
        }
        residuals.sort_by(|a, b| a.provenance.cmp(&b.provenance));
        let old_diffuse_mass = self
            .class
            .diffuse
            .as_ref()
            .map(|d| d.mass().as_ratio().clone())
            .unwrap_or_else(BigRational::zero);
        let corner_result_diffuse = unit_result
            .diffuse
            .as_ref()
            .map(|d| d.mass().as_ratio() * atom_mass.as_ratio())
            .unwrap_or_else(BigRational::zero);
        let diffuse_mass = PosRat::from_ratio(
            old_diffuse_mass - corner_diffuse_taken.as_ratio() + corner_result_diffuse,
        )
        .expect("diffuse piece keeps positive mass");
        let diffuse = match unit_result.diffuse.as_ref() {
            Some(DiffusePiece::ArakiWoods { group, .. }) => DiffusePiece::ArakiWoods {
                group: group.clone(),
                mass: diffuse_mass,
            },
            _ => DiffusePiece::FreeGroup {
                param: FreeGroupParam::Unknown,
                mass: diffuse_mass,
            },
        };
        let class = Classification {
            diffuse: Some(diffuse),
            residuals,
            total_mass: self.class.total_mass.clone(),
        };
        debug_assert!(class.mass_is_conserved());
        let step = DerivationStep {
            rule,
            citation,
            expanded: Some((side, atom_label)),
            corner: corner_unit,
            result: class.clone(),
            full_central_support: !new_residual,
        };
        let mut next = self.clone();
        next.class = class;
        next.expanded.push((side, idx));
        Ok((next, step))
    }

    /// Splits the current residuals at the atom: entries whose provenance
    /// touches it go into the corner, the rest are kept. Returns the corner
    /// (unnormalized), the kept residuals, and the diffuse sub-mass the
    /// corner takes.
    fn cut_corner(
        &self,
        atom_ref: &ProjRef,
        atom_mass: &PosRat,
    ) -> (MixedCorner, Vec<ResidualBlock>, PosRat) {
        let mut corner_atoms = Vec::new();
        let mut corner_blocks = Vec::new();
        let mut kept = Vec::new();
        let mut under = BigRational::zero();
        for r in &self.class.residuals {
            let touches = r.provenance.atom == *atom_ref || r.provenance.block == *atom_ref;
            if !touches {
                kept.push(r.clone());
                continue;
            }
            under += PosRat::sum(&r.weights);
            if r.weights.len() == 1 {
                // Atom-atom remnant: descends from the partner atom.
                let partner = if r.provenance.atom == *atom_ref {
                    r.provenance.block.clone()
                } else {
                    r.provenance.atom.clone()
                };
                corner_atoms.push((partner, r.weights[0].clone()));
            } else {
                debug_assert_eq!(r.provenance.atom, *atom_ref);
                corner_blocks.push((r.provenance.block.label.clone(), r.weights.clone()));
            }
        }
        let corner_diffuse_mass = PosRat::from_ratio(atom_mass.as_ratio() - under)
            .expect("residuals under an atom stay below its mass");
        let group = match &self.class.diffuse {
            Some(DiffusePiece::ArakiWoods { group, .. }) => group.clone(),
            _ => RatioGroup::trivial(),
        };
        (
            MixedCorner {
                atoms: corner_atoms,
                blocks: corner_blocks,
                diffuse: Some((group, corner_diffuse_mass.clone())),
            },
            kept,
            corner_diffuse_mass,
        )
    }
}

/// Derives the free product with the default expansion order: the left
/// factor's atoms in declaration order, then the right factor's.
pub fn derive_free_product(
    a: &Algebra,
    b: &Algebra,
) -> Result<(Classification, DerivationTrace), DeriveError> {
    derive_free_product_with_order(a, b, None)
}

/// Derives the free product expanding the remaining central summands in the
/// given order (pairs of side and summand index); `None` means the default
/// order. The final classification must equal the closed form exactly, and
/// disagreement surfaces as `OracleMismatch` with the full trace attached.
pub fn derive_free_product_with_order(
    a: &Algebra,
    b: &Algebra,
    order: Option<Vec<(Side, usize)>>,
) -> Result<(Classification, DerivationTrace), DeriveError> {
    let expected = free_product_classify(a, b)?;
    let total = a.total_mass();
    let scale = total.recip();
    let (na, nb) = (a.rescale(&scale), b.rescale(&scale));

    // Free product with the scalars: a single trivial step.
    if na.is_one_dimensional() || nb.is_one_dimensional() {
        let final_class = expected.rescaled(&scale);
        let trace = DerivationTrace {
            left: na,
            right: nb,
            order: Vec::new(),
            steps: vec![DerivationStep {
                rule: RuleId::ScalarIdentity,
                citation: "scalar-identity".into(),
                expanded: None,
                corner: MixedCorner {
                    atoms: Vec::new(),
                    blocks: Vec::new(),
                    diffuse: None,
                },
                result: final_class.clone(),
                full_central_support: true,
            }],
            final_class,
        };
        return Ok((expected, trace));
    }

    let (mut state, base_step, remaining) = base_state(&na, &nb)?;
    let mut steps = vec![base_step];
    let order = match order {
        None => remaining.clone(),
        Some(order) => {
            let mut sorted = order.clone();
            sorted.sort();
            let mut wanted = remaining.clone();
            wanted.sort();
            if sorted != wanted {
                return Err(DeriveError::BadOrder(format!(
                    "expected a permutation of {wanted:?}, got {order:?}"
                )));
            }
            order
        }
    };
    for &(side, idx) in &order {
        let replacement = state.factor(side).summands()[idx].clone();
        let (next, step) = state.expand_atom(side, idx, &replacement)?;
        state = next;
        steps.push(step);
    }
    let final_class = state.class.clone();
    let trace = DerivationTrace {
        left: na,
        right: nb,
        order,
        steps,
        final_class: final_class.clone(),
    };
    let expected_unit = expected.rescaled(&scale);
    if final_class != expected_unit {
        return Err(DeriveError::OracleMismatch {
            expected: Box::new(expected_unit),
            derived: Box::new(final_class),
            trace: Box::new(trace),
        });
    }
    Ok((final_class.rescaled(&total), trace))
}

/// Builds the starting state. With both centers at least two-dimensional
/// the base is the abelian pair rule over the centers and every summand
/// remains to expand. A factor that is a single summand is consumed by the
/// base rule directly.
fn base_state(
    na: &Algebra,
    nb: &Algebra,
) -> Result<(DerivationState, DerivationStep, Vec<(Side, usize)>), DeriveError> {
    let center = |alg: &Algebra| -> Algebra {
        let atoms = alg
            .summands()
            .iter()
            .enumerate()
            .map(|(i, s)| Summand::matrix_labeled(alg.central_label(i), vec![s.mass()]))
            .collect();
        Algebra::new(alg.label(), atoms)
    };
    let single_left = na.summands().len() == 1;
    let single_right = nb.summands().len() == 1;
    let mut remaining: Vec<(Side, usize)> = Vec::new();
    if !single_left {
        remaining.extend((0..na.summands().len()).map(|i| (Side::Left, i)));
    }
    if !single_right {
        remaining.extend((0..nb.summands().len()).map(|i| (Side::Right, i)));
    }

    let (class, step) = if !single_left && !single_right {
        let class = rule_abelian_abelian(&center(na), &center(nb))?;
        let corner = MixedCorner {
            atoms: na
                .summands()
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    (
                        ProjRef {
                            side: Side::Left,
                            label: na.central_label(i),
                        },
                        s.mass(),
                    )
                })
                .chain(nb.summands().iter().enumerate().map(|(j, s)| {
                    (
                        ProjRef {
                            side: Side::Right,
                            label: nb.central_label(j),
                        },
                        s.mass(),
                    )
                }))
                .collect(),
            blocks: Vec::new(),
            diffuse: None,
        };
        let step = DerivationStep {
            rule: RuleId::AbelianPair,
            citation: "abelian-pair".into(),
            expanded: None,
            corner,
            full_central_support: class.residuals.is_empty(),
            result: class.clone(),
        };
        (class, step)
    } else {
        // One factor is a single summand: it meets the other side whole.
        let (block_side, block_alg, mixed_alg) = if single_left {
            (Side::Left, na, nb)
        } else {
            (Side::Right, nb, na)
        };
        let summand = &block_alg.summands()[0];
        let block_ref = ProjRef {
            side: block_side,
            label: block_alg.central_label(0),
        };
        let mixed = side_as_corner(mixed_alg, block_side.flipped(), single_left && single_right);
        let (class, rule, citation) = if summand.is_diffuse() {
            let (c, cite) = rule_diffuse_absorption(&summand.ratio_group(), &mixed)?;
            (c, RuleId::DiffuseAbsorption, cite)
        } else if summand.is_atom() {
            return Err(DeriveError::NoMatchingRule(
                "one-dimensional factors are handled before the chain starts".into(),
            ));
        } else {
            let (c, cite) = rule_matrix_vs_mixed(summand, &block_ref, &mixed)?;
            (c, RuleId::BlockVsMixed, cite)
        };
        let step = DerivationStep {
            rule,
            citation,
            expanded: Some((block_side, block_ref.label.clone())),
            corner: mixed,
            full_central_support: class.residuals.is_empty(),
            result: class.clone(),
        };
        (class, step)
    };

    let mut expanded = Vec::new();
    if single_left {
        expanded.push((Side::Left, 0));
    }
    if single_right {
        expanded.push((Side::Right, 0));
    }
    Ok((
        DerivationState {
            left: na.clone(),
            right: nb.clone(),
            expanded,
            class,
        },
        step,
        remaining,
    ))
}

/// One factor viewed as a corner. Normally its center (all atoms); with
/// `whole` set the factor is a single summand entering with its true shape:
/// a finite block as a block, anything diffuse or infinite through its
/// ratio group.
fn side_as_corner(alg: &Algebra, side: Side, whole: bool) -> MixedCorner {
    if !whole {
        return MixedCorner {
            atoms: alg
                .summands()
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    (
                        ProjRef {
                            side,
                            label: alg.central_label(i),
                        },
                        s.mass(),
                    )
                })
                .collect(),
            blocks: Vec::new(),
            diffuse: None,
        };
    }
    match &alg.summands()[0] {
        Summand::MatrixBlock { label, weights } if weights.len() >= 2 => MixedCorner {
            atoms: Vec::new(),
            blocks: vec![(label.clone(), weights.clone())],
            diffuse: None,
        },
        Summand::MatrixBlock { label, weights } => MixedCorner {
            atoms: vec![(
                ProjRef {
                    side,
                    label: label.clone(),
                },
                weights[0].clone(),
            )],
            blocks: Vec::new(),
            diffuse: None,
        },
        other => MixedCorner {
            atoms: Vec::new(),
            blocks: Vec::new(),
            diffuse: Some((other.ratio_group(), other.mass())),
        },
    }
}

/// Re-executes a trace from its recorded inputs and order, checking every
/// step snapshot, and returns the reproduced final classification.
pub fn replay(trace: &DerivationTrace) -> Result<Classification, DeriveError> {
    let (_, rerun) =
        derive_free_product_with_order(&trace.left, &trace.right, Some(trace.order.clone()))?;
    if rerun.steps.len() != trace.steps.len() {
        return Err(DeriveError::NoMatchingRule(
            "replay produced a different number of steps".into(),
        ));
    }
    for (old, new) in trace.steps.iter().zip(&rerun.steps) {
        if old != new {
            return Err(DeriveError::NoMatchingRule(format!(
                "replay diverged at step {:?}",
                old.expanded
            )));
        }
    }
    Ok(rerun.final_class)
}

// ---------------------------------------------------------------------------
// JSON schema
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceDoc {
    pub left: AlgebraDoc,
    pub right: AlgebraDoc,
    pub steps: Vec<StepDoc>,
    #[serde(rename = "final")]
    pub final_class: ClassificationDoc,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepDoc {
    pub rule: RuleId,
    pub cite: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expanded: Option<ExpandedDoc>,
    pub corner: CornerDoc,
    pub result: ClassificationDoc,
    pub full_central_support: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpandedDoc {
    pub side: Side,
    pub label: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CornerDoc {
    pub atoms: Vec<CornerAtomDoc>,
    pub blocks: Vec<CornerBlockDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diffuse: Option<CornerDiffuseDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CornerAtomDoc {
    pub side: Side,
    pub label: String,
    pub mass: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CornerBlockDoc {
    pub label: String,
    pub weights: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CornerDiffuseDoc {
    pub generators: Vec<String>,
    pub mass: String,
}

impl DerivationTrace {
    pub fn to_doc(&self) -> TraceDoc {
        TraceDoc {
            left: to_doc(&self.left),
            right: to_doc(&self.right),
            steps: self
                .steps
                .iter()
                .map(|s| StepDoc {
                    rule: s.rule,
                    cite: s.citation.clone(),
                    expanded: s.expanded.as_ref().map(|(side, label)| ExpandedDoc {
                        side: *side,
                        label: label.clone(),
                    }),
                    corner: CornerDoc {
                        atoms: s
                            .corner
                            .atoms
                            .iter()
                            .map(|(p, m)| CornerAtomDoc {
                                side: p.side,
                                label: p.label.clone(),
                                mass: m.to_string(),
                            })
                            .collect(),
                        blocks: s
                            .corner
                            .blocks
                            .iter()
                            .map(|(l, w)| CornerBlockDoc {
                                label: l.clone(),
                                weights: w.iter().map(|x| x.to_string()).collect(),
                            })
                            .collect(),
                        diffuse: s.corner.diffuse.as_ref().map(|(g, m)| CornerDiffuseDoc {
                            generators: g.generators().iter().map(|x| x.to_string()).collect(),
                            mass: m.to_string(),
                        }),
                    },
                    result: s.result.to_doc(),
                    full_central_support: s.full_central_support,
                })
                .collect(),
            final_class: self.final_class.to_doc(),
        }
    }
}

impl fmt::Display for DerivationStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.expanded {
            Some((side, label)) => write!(f, "expand {side:?} {label} via {}", self.citation),
            None => write!(f, "base via {}", self.citation),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::connes_type;

    fn r(n: u64, d: u64) -> PosRat {
        PosRat::of(n, d)
    }

    fn alg(label: &str, summands: Vec<Summand>) -> Algebra {
        Algebra::new(label, summands)
    }

    #[test]
    fn abelian_pair_examples() {
        let a = alg("A", vec![Summand::atom(r(9, 10)), Summand::atom(r(1, 10))]);
        let b = alg("B", vec![Summand::atom(r(1, 2)), Summand::atom(r(1, 2))]);
        let c = rule_abelian_abelian(&a, &b).unwrap();
        assert_eq!(
            c.diffuse,
            Some(DiffusePiece::FreeGroup {
                param: FreeGroupParam::Unknown,
                mass: r(1, 5),
            })
        );
        let masses: Vec<PosRat> = c.residuals.iter().map(|x| x.weights[0].clone()).collect();
        assert_eq!(masses, vec![r(2, 5), r(2, 5)]);

        // all boundary masses omitted
        let half = alg("H", vec![Summand::atom(r(1, 2)), Summand::atom(r(1, 2))]);
        let c = rule_abelian_abelian(&half, &half).unwrap();
        assert!(c.residuals.is_empty());
        assert_eq!(c.diffuse.as_ref().unwrap().mass(), &PosRat::one());

        // only the (4/5, 4/5) pair exceeds the unit
        let fourfifth = alg("F", vec![Summand::atom(r(4, 5)), Summand::atom(r(1, 5))]);
        let c = rule_abelian_abelian(&fourfifth, &fourfifth).unwrap();
        assert_eq!(c.residuals.len(), 1);
        assert_eq!(c.residuals[0].weights, vec![r(3, 5)]);
        assert_eq!(c.diffuse.as_ref().unwrap().mass(), &r(2, 5));

        let non_abelian = alg("N", vec![Summand::matrix(vec![r(1, 2), r(1, 2)])]);
        assert!(matches!(
            rule_abelian_abelian(&non_abelian, &b),
            Err(DeriveError::NonAbelianInput(_))
        ));
    }

    #[test]
    fn matrix_vs_mixed_spec_examples() {
        // M2(3/5,2/5) against [C(9/10) + T_<1/2>(1/10)]
        let block = Summand::matrix_labeled("A:0", vec![r(3, 5), r(2, 5)]);
        let block_ref = ProjRef {
            side: Side::Left,
            label: "A:0".into(),
        };
        let mixed = MixedCorner {
            atoms: vec![(
                ProjRef {
                    side: Side::Right,
                    label: "B:0".into(),
                },
                r(9, 10),
            )],
            blocks: vec![],
            diffuse: Some((RatioGroup::cyclic(&r(1, 2)), r(1, 10))),
        };
        let (c, cite) = rule_matrix_vs_mixed(&block, &block_ref, &mixed).unwrap();
        assert_eq!(cite, "matrix-atom-diffuse");
        let d = c.diffuse.as_ref().unwrap();
        assert_eq!(d.group(), Some(&RatioGroup::generate(&[r(3, 2), r(1, 2)])));
        assert_eq!(d.mass(), &r(5, 12));
        assert_eq!(c.residuals.len(), 1);
        assert_eq!(c.residuals[0].weights, vec![r(7, 20), r(7, 30)]);

        // M2(3/5,2/5) against [C(1/2) + L(F_2)(1/2)]: gamma = 25/12 >= 1
        let mixed = MixedCorner {
            atoms: vec![(
                ProjRef {
                    side: Side::Right,
                    label: "B:0".into(),
                },
                r(1, 2),
            )],
            blocks: vec![],
            diffuse: Some((RatioGroup::trivial(), r(1, 2))),
        };
        let (c, _) = rule_matrix_vs_mixed(&block, &block_ref, &mixed).unwrap();
        assert!(c.residuals.is_empty());
        let d = c.diffuse.as_ref().unwrap();
        assert_eq!(d.group(), Some(&RatioGroup::cyclic(&r(3, 2))));
        assert_eq!(d.mass(), &PosRat::one());

        // M2(3/5,2/5) against M2(1/2,1/2)
        let mixed = MixedCorner {
            atoms: vec![],
            blocks: vec![("B:0".into(), vec![r(1, 2), r(1, 2)])],
            diffuse: None,
        };
        let (c, cite) = rule_matrix_vs_mixed(&block, &block_ref, &mixed).unwrap();
        assert_eq!(cite, "matrix-pair");
        assert!(c.residuals.is_empty());
        assert_eq!(
            c.diffuse.as_ref().unwrap().group(),
            Some(&RatioGroup::cyclic(&r(3, 2)))
        );
    }

    #[test]
    fn derive_matches_closed_form_on_theorem_instance() {
        let a = alg("A", vec![Summand::matrix(vec![r(3, 5), r(2, 5)])]);
        let b = alg("B", vec![Summand::atom(r(4, 5)), Summand::atom(r(1, 5))]);
        let (c, trace) = derive_free_product(&a, &b).unwrap();
        assert_eq!(
            c.diffuse.as_ref().unwrap().group(),
            Some(&RatioGroup::cyclic(&r(2, 3)))
        );
        assert_eq!(c.diffuse.as_ref().unwrap().mass(), &r(5, 6));
        assert_eq!(c.residuals.len(), 1);
        assert_eq!(c.residuals[0].weights, vec![r(1, 10), r(1, 15)]);
        assert_eq!(trace.steps.len(), 3);
        assert!(trace.conserves_mass());
        assert_eq!(
            connes_type(&c).unwrap(),
            crate::classify::ConnesType::TypeIiiLambda(r(2, 3))
        );
    }

    #[test]
    fn derive_matches_closed_form_on_two_block_instance() {
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
        let (c, trace) = derive_free_product(&a, &b).unwrap();
        assert_eq!(c.diffuse.as_ref().unwrap().mass(), &r(31, 60));
        assert_eq!(
            c.diffuse.as_ref().unwrap().group(),
            Some(&RatioGroup::cyclic(&r(3, 2)))
        );
        assert_eq!(trace.steps.len(), 5);
        assert!(trace.conserves_mass());
    }

    #[test]
    fn derive_scalar_factor() {
        let one = alg("C", vec![Summand::atom(PosRat::one())]);
        let b = alg(
            "B",
            vec![Summand::ArakiWoods {
                group: RatioGroup::cyclic(&r(1, 3)),
                mass: PosRat::one(),
            }],
        );
        let (c, trace) = derive_free_product(&one, &b).unwrap();
        assert_eq!(
            c.diffuse.unwrap().group(),
            Some(&RatioGroup::cyclic(&r(1, 3)))
        );
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(trace.steps[0].rule, RuleId::ScalarIdentity);
    }

    #[test]
    fn order_independence_on_sample() {
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
        let orders = vec![
            vec![
                (Side::Left, 0),
                (Side::Left, 1),
                (Side::Right, 0),
                (Side::Right, 1),
            ],
            vec![
                (Side::Right, 1),
                (Side::Right, 0),
                (Side::Left, 1),
                (Side::Left, 0),
            ],
            vec![
                (Side::Right, 0),
                (Side::Left, 1),
                (Side::Right, 1),
                (Side::Left, 0),
            ],
        ];
        let mut results = Vec::new();
        for order in orders {
            let (c, _) = derive_free_product_with_order(&a, &b, Some(order)).unwrap();
            results.push(c);
        }
        assert_eq!(results[0], results[1]);
        assert_eq!(results[0], results[2]);
    }

    #[test]
    fn replay_reproduces_trace() {
        let a = alg("A", vec![Summand::matrix(vec![r(3, 5), r(2, 5)])]);
        let b = alg("B", vec![Summand::atom(r(4, 5)), Summand::atom(r(1, 5))]);
        let (_, trace) = derive_free_product(&a, &b).unwrap();
        let replayed = replay(&trace).unwrap();
        assert_eq!(replayed, trace.final_class);
    }

    #[test]
    fn expand_atom_rejects_bad_input() {
        let a = alg(
            "A",
            vec![
                Summand::atom(r(1, 2)),
                Summand::matrix(vec![r(1, 4), r(1, 4)]),
            ],
        );
        let b = alg("B", vec![Summand::matrix(vec![r(2, 3), r(1, 3)])]);
        let (state, _, _) = base_state(&b, &a).unwrap();
        let err = state
            .expand_atom(Side::Right, 0, &Summand::atom(r(1, 3)))
            .unwrap_err();
        assert!(matches!(err, DeriveError::ExpansionMassMismatch { .. }));
        let err = state
            .expand_atom(Side::Right, 5, &Summand::atom(r(1, 2)))
            .unwrap_err();
        assert!(matches!(err, DeriveError::UnknownAtom(_)));
    }

    #[test]
    fn derive_with_typei_infinite_summand() {
        let a = alg("A", vec![Summand::psi_lambda_infinite(r(1, 2))]);
        let b = alg("B", vec![Summand::atom(r(2, 3)), Summand::atom(r(1, 3))]);
        let (c, trace) = derive_free_product(&a, &b).unwrap();
        assert_eq!(
            c.diffuse.as_ref().unwrap().group(),
            Some(&RatioGroup::cyclic(&r(1, 2)))
        );
        assert!(c.residuals.is_empty());
        assert!(trace.steps.iter().any(|s| s.citation == "infinite-type-i"));
    }
}
