//! The data model for weighted von Neumann algebras as formal direct sums:
//! summand kinds, validation, rescaling, modular point spectrum, traciality,
//! and tensor simplification.

use std::fmt;

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::rat::PosRat;
use crate::ratio_group::RatioGroup;

/// Parameter of an interpolated free group factor.
///
/// `Unknown` carries "some s > 1": a parameter that exists but is not
/// computed. It is absorbing under every operation that does not determine
/// the value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FreeGroupParam {
    One,
    /// Finite parameter, strictly greater than 1.
    Finite(PosRat),
    Infinite,
    Unknown,
}

impl fmt::Display for FreeGroupParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FreeGroupParam::One => write!(f, "1"),
            FreeGroupParam::Finite(t) => write!(f, "{t}"),
            FreeGroupParam::Infinite => write!(f, "inf"),
            FreeGroupParam::Unknown => write!(f, "?"),
        }
    }
}

impl FreeGroupParam {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "1" => Ok(FreeGroupParam::One),
            "inf" => Ok(FreeGroupParam::Infinite),
            "?" => Ok(FreeGroupParam::Unknown),
            other => {
                let t: PosRat = other
                    .parse()
                    .map_err(|e| format!("bad free group parameter {other:?}: {e}"))?;
                if t.as_ratio() <= PosRat::one().as_ratio() {
                    return Err(format!("free group parameter must exceed 1, got {t}"));
                }
                Ok(FreeGroupParam::Finite(t))
            }
        }
    }
}

/// Multiplicity of one factor inside an infinite tensor product.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Multiplicity {
    Finite(u64),
    Infinite,
}

/// One tensor factor: a finite weight profile summing to 1 plus how many
/// copies of it occur.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorFactor {
    pub profile: Vec<PosRat>,
    pub multiplicity: Multiplicity,
}

/// The type I side of a `Tensor` summand, with weights summing to 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TypeIProfile {
    Finite(Vec<PosRat>),
    /// Head weights followed by the geometric tail `c * lambda^m`, `m >= 0`.
    Geometric {
        head: Vec<PosRat>,
        lambda: PosRat,
        c: PosRat,
    },
}

impl TypeIProfile {
    pub fn ratio_group(&self) -> RatioGroup {
        match self {
            TypeIProfile::Finite(w) => weight_ratio_group(w),
            TypeIProfile::Geometric { head, lambda, c } => geometric_ratio_group(head, lambda, c),
        }
    }

    pub fn is_uniform(&self) -> bool {
        match self {
            TypeIProfile::Finite(w) => w.iter().all(|x| x == &w[0]),
            TypeIProfile::Geometric { .. } => false,
        }
    }

    pub fn total(&self) -> BigRational {
        match self {
            TypeIProfile::Finite(w) => PosRat::sum(w),
            TypeIProfile::Geometric { head, lambda, c } => {
                PosRat::sum(head) + geometric_tail_mass(lambda, c).into_ratio()
            }
        }
    }
}

/// Diffuse side of a `Tensor` summand.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TensorDiffuse {
    FreeGroup(FreeGroupParam),
    ArakiWoods(RatioGroup),
}

/// One central summand of a weighted algebra.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Summand {
    /// `M_k` with the state weights of its diagonal minimal projections.
    MatrixBlock { label: String, weights: Vec<PosRat> },
    /// Infinite-dimensional type I factor whose density eigenvalues are the
    /// head weights followed by the geometric tail `c * lambda^m`.
    TypeIInfinite {
        label: String,
        head: Vec<PosRat>,
        lambda: PosRat,
        c: PosRat,
    },
    FreeGroupFactor { param: FreeGroupParam, mass: PosRat },
    ArakiWoods { group: RatioGroup, mass: PosRat },
    /// Diffuse infinite tensor product of finite-dimensional factors.
    HyperfiniteTensor {
        factors: Vec<TensorFactor>,
        mass: PosRat,
    },
    /// Type I factor tensored with a diffuse factor.
    Tensor {
        type_i: TypeIProfile,
        diffuse: TensorDiffuse,
        mass: PosRat,
    },
}

fn geometric_tail_mass(lambda: &PosRat, c: &PosRat) -> PosRat {
    let one_minus = lambda
        .one_minus()
        .expect("tail ratio lies in (0,1) for valid summands");
    c / &one_minus
}

fn weight_ratio_group(weights: &[PosRat]) -> RatioGroup {
    let gens: Vec<PosRat> = weights.iter().skip(1).map(|w| w / &weights[0]).collect();
    RatioGroup::generate(&gens)
}

fn geometric_ratio_group(head: &[PosRat], lambda: &PosRat, c: &PosRat) -> RatioGroup {
    let mut gens: Vec<PosRat> = head.iter().map(|h| h / c).collect();
    gens.push(lambda.clone());
    RatioGroup::generate(&gens)
}

impl Summand {
    pub fn matrix(weights: Vec<PosRat>) -> Summand {
        Summand::MatrixBlock {
            label: String::new(),
            weights,
        }
    }

    pub fn matrix_labeled(label: impl Into<String>, weights: Vec<PosRat>) -> Summand {
        Summand::MatrixBlock {
            label: label.into(),
            weights,
        }
    }

    pub fn atom(mass: PosRat) -> Summand {
        Summand::matrix(vec![mass])
    }

    /// `psi_lambda` on the infinite type I factor: empty head, tail
    /// `(1-lambda) * lambda^m`, total mass 1.
    pub fn psi_lambda_infinite(lambda: PosRat) -> Summand {
        let c = lambda.one_minus().expect("lambda in (0,1)");
        Summand::TypeIInfinite {
            label: String::new(),
            head: Vec::new(),
            lambda,
            c,
        }
    }

    /// `psi_lambda` on `M_n`: weights `lambda^i (1-lambda)/(1-lambda^n)`.
    pub fn psi_lambda_matrix(n: u64, lambda: &PosRat) -> Summand {
        let one_minus = lambda.one_minus().expect("lambda in (0,1)");
        let one_minus_pow = lambda.pow(n as i64).one_minus().expect("lambda^n < 1");
        let scale = &one_minus / &one_minus_pow;
        let weights = (0..n).map(|i| &lambda.pow(i as i64) * &scale).collect();
        Summand::matrix(weights)
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            Summand::MatrixBlock { label, .. } | Summand::TypeIInfinite { label, .. } => {
                Some(label)
            }
            _ => None,
        }
    }

    fn set_default_label(&mut self, default: String) {
        if let Summand::MatrixBlock { label, .. } | Summand::TypeIInfinite { label, .. } = self {
            if label.is_empty() {
                *label = default;
            }
        }
    }

    pub fn mass(&self) -> PosRat {
        match self {
            Summand::MatrixBlock { weights, .. } => {
                PosRat::from_ratio(PosRat::sum(weights)).expect("positive weights")
            }
            Summand::TypeIInfinite {
                head, lambda, c, ..
            } => {
                let tail = geometric_tail_mass(lambda, c);
                PosRat::from_ratio(PosRat::sum(head) + tail.into_ratio()).expect("positive mass")
            }
            Summand::FreeGroupFactor { mass, .. }
            | Summand::ArakiWoods { mass, .. }
            | Summand::HyperfiniteTensor { mass, .. }
            | Summand::Tensor { mass, .. } => mass.clone(),
        }
    }

    /// Contribution to the point spectrum of the modular operator.
    pub fn ratio_group(&self) -> RatioGroup {
        match self {
            Summand::MatrixBlock { weights, .. } => weight_ratio_group(weights),
            Summand::TypeIInfinite {
                head, lambda, c, ..
            } => geometric_ratio_group(head, lambda, c),
            Summand::FreeGroupFactor { .. } => RatioGroup::trivial(),
            Summand::ArakiWoods { group, .. } => group.clone(),
            Summand::HyperfiniteTensor { factors, .. } => factors
                .iter()
                .fold(RatioGroup::trivial(), |acc, f| {
                    acc.join(&weight_ratio_group(&f.profile))
                }),
            Summand::Tensor {
                type_i, diffuse, ..
            } => {
                let diffuse_group = match diffuse {
                    TensorDiffuse::FreeGroup(_) => RatioGroup::trivial(),
                    TensorDiffuse::ArakiWoods(group) => group.clone(),
                };
                type_i.ratio_group().join(&diffuse_group)
            }
        }
    }

    pub fn is_tracial(&self) -> bool {
        match self {
            Summand::MatrixBlock { weights, .. } => weights.iter().all(|w| w == &weights[0]),
            Summand::TypeIInfinite { .. } => false,
            Summand::FreeGroupFactor { .. } => true,
            Summand::ArakiWoods { .. } => false,
            Summand::HyperfiniteTensor { factors, .. } => factors
                .iter()
                .all(|f| f.profile.iter().all(|w| w == &f.profile[0])),
            Summand::Tensor {
                type_i, diffuse, ..
            } => type_i.is_uniform() && matches!(diffuse, TensorDiffuse::FreeGroup(_)),
        }
    }

    /// A one-dimensional central summand.
    pub fn is_atom(&self) -> bool {
        matches!(self, Summand::MatrixBlock { weights, .. } if weights.len() == 1)
    }

    pub fn atom_mass(&self) -> Option<&PosRat> {
        match self {
            Summand::MatrixBlock { weights, .. } if weights.len() == 1 => Some(&weights[0]),
            _ => None,
        }
    }

    /// Weights of a finite matrix block (any size, including atoms).
    pub fn block_weights(&self) -> Option<&[PosRat]> {
        match self {
            Summand::MatrixBlock { weights, .. } => Some(weights),
            _ => None,
        }
    }

    /// No minimal projections at all: free group factor, Araki-Woods,
    /// hyperfinite tensor, or type I tensor diffuse summands.
    pub fn is_diffuse(&self) -> bool {
        matches!(
            self,
            Summand::FreeGroupFactor { .. }
                | Summand::ArakiWoods { .. }
                | Summand::HyperfiniteTensor { .. }
                | Summand::Tensor { .. }
        )
    }

    pub fn rescaled(&self, scale: &PosRat) -> Summand {
        let mut s = self.clone();
        match &mut s {
            Summand::MatrixBlock { weights, .. } => {
                for w in weights.iter_mut() {
                    *w = &*w * scale;
                }
            }
            Summand::TypeIInfinite { head, c, .. } => {
                for w in head.iter_mut() {
                    *w = &*w * scale;
                }
                *c = &*c * scale;
            }
            Summand::FreeGroupFactor { mass, .. }
            | Summand::ArakiWoods { mass, .. }
            | Summand::HyperfiniteTensor { mass, .. }
            | Summand::Tensor { mass, .. } => {
                *mass = &*mass * scale;
            }
        }
        s
    }
}

/// Rewrites a `Tensor` summand by the tensor absorption identities:
/// a type I part whose weight ratios all lie in the Araki-Woods group is
/// absorbed, and a uniform `M_n` part amplifies an exact free group
/// parameter `t` to `1 + n^2 (t - 1)`. Anything else is returned unchanged.
pub fn tensor_simplify(s: &Summand) -> Summand {
    let Summand::Tensor {
        type_i,
        diffuse,
        mass,
    } = s
    else {
        return s.clone();
    };
    // The scalars tensor trivially with anything.
    if matches!(type_i, TypeIProfile::Finite(w) if w.len() == 1) {
        return match diffuse {
            TensorDiffuse::FreeGroup(param) => Summand::FreeGroupFactor {
                param: param.clone(),
                mass: mass.clone(),
            },
            TensorDiffuse::ArakiWoods(group) => Summand::ArakiWoods {
                group: group.clone(),
                mass: mass.clone(),
            },
        };
    }
    match diffuse {
        TensorDiffuse::ArakiWoods(group) => {
            if group.contains_group(&type_i.ratio_group()) {
                Summand::ArakiWoods {
                    group: group.clone(),
                    mass: mass.clone(),
                }
            } else {
                s.clone()
            }
        }
        TensorDiffuse::FreeGroup(param) => {
            let TypeIProfile::Finite(w) = type_i else {
                return s.clone();
            };
            if !type_i.is_uniform() {
                return s.clone();
            }
            let n = w.len() as u64;
            let param = match param {
                FreeGroupParam::Finite(t) => {
                    let t_minus_one = t.checked_sub(&PosRat::one()).expect("t > 1");
                    FreeGroupParam::Finite(&PosRat::one() + &(&PosRat::of(n * n, 1) * &t_minus_one))
                }
                FreeGroupParam::Infinite => FreeGroupParam::Infinite,
                FreeGroupParam::Unknown => FreeGroupParam::Unknown,
                FreeGroupParam::One => return s.clone(),
            };
            Summand::FreeGroupFactor {
                param,
                mass: mass.clone(),
            }
        }
    }
}

/// A formal direct sum of weighted summands.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Algebra {
    label: String,
    summands: Vec<Summand>,
}

impl Algebra {
    /// Builds an algebra, assigning the default label `"{label}:{i}"` to any
    /// block summand that does not carry one.
    pub fn new(label: impl Into<String>, summands: Vec<Summand>) -> Algebra {
        let label = label.into();
        let mut summands = summands;
        for (i, s) in summands.iter_mut().enumerate() {
            s.set_default_label(format!("{label}:{i}"));
        }
        Algebra { label, summands }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn summands(&self) -> &[Summand] {
        &self.summands
    }

    /// Label of the central projection of summand `idx`: the summand's own
    /// label for blocks, or the positional default for diffuse summands.
    pub fn central_label(&self, idx: usize) -> String {
        self.summands[idx]
            .label()
            .map(str::to_string)
            .unwrap_or_else(|| format!("{}:{idx}", self.label))
    }

    pub fn total_mass(&self) -> PosRat {
        let sum = self
            .summands
            .iter()
            .fold(BigRational::zero(), |acc, s| acc + s.mass().as_ratio());
        PosRat::from_ratio(sum).expect("nonempty sum of positive masses")
    }

    /// True when the algebra is a single one-dimensional summand.
    pub fn is_one_dimensional(&self) -> bool {
        self.summands.len() == 1 && self.summands[0].is_atom()
    }

    /// Every weight and mass multiplied by `scale`.
    pub fn rescale(&self, scale: &PosRat) -> Algebra {
        Algebra {
            label: self.label.clone(),
            summands: self.summands.iter().map(|s| s.rescaled(scale)).collect(),
        }
    }

    /// Point spectrum of the modular operator of the associated state: the
    /// group generated by every summand's weight-ratio contribution.
    pub fn point_spectrum(&self) -> RatioGroup {
        self.summands
            .iter()
            .fold(RatioGroup::trivial(), |acc, s| acc.join(&s.ratio_group()))
    }

    pub fn is_tracial(&self) -> bool {
        self.summands.iter().all(|s| s.is_tracial())
    }

    /// Runs the structural checks that are not guaranteed by construction.
    pub fn check(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        check_algebra(self, &mut v);
        v
    }
}

// ---------------------------------------------------------------------------
// JSON schema and validation
// ---------------------------------------------------------------------------

/// One invariant violation, with a path to the offending field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Raw JSON form of an algebra; `validate` turns it into a typed [`Algebra`]
/// or reports every violation it finds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlgebraDoc {
    pub label: String,
    pub summands: Vec<SummandDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SummandDoc {
    #[serde(rename = "matrix")]
    Matrix {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        weights: Vec<String>,
    },
    #[serde(rename = "typeI_inf")]
    TypeIInf {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        #[serde(default)]
        head: Vec<String>,
        lambda: String,
        c: String,
    },
    #[serde(rename = "free_group")]
    FreeGroup { t: String, mass: String },
    #[serde(rename = "araki_woods")]
    ArakiWoods {
        generators: Vec<String>,
        mass: String,
    },
    #[serde(rename = "hyperfinite_tensor")]
    HyperfiniteTensor {
        factors: Vec<TensorFactorDoc>,
        mass: String,
    },
    #[serde(rename = "tensor")]
    Tensor {
        type_i: TypeIProfileDoc,
        diffuse: TensorDiffuseDoc,
        mass: String,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorFactorDoc {
    pub profile: Vec<String>,
    pub multiplicity: MultiplicityDoc,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MultiplicityDoc {
    Finite(u64),
    Tag(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TypeIProfileDoc {
    Finite {
        weights: Vec<String>,
    },
    Geometric {
        #[serde(default)]
        head: Vec<String>,
        lambda: String,
        c: String,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum TensorDiffuseDoc {
    #[serde(rename = "free_group")]
    FreeGroup { t: String },
    #[serde(rename = "araki_woods")]
    ArakiWoods { generators: Vec<String> },
}

struct Check<'a> {
    violations: &'a mut Vec<Violation>,
}

impl Check<'_> {
    fn push(&mut self, path: String, message: impl Into<String>) {
        self.violations.push(Violation {
            path,
            message: message.into(),
        });
    }

    fn rat(&mut self, path: String, raw: &str, what: &str) -> Option<PosRat> {
        match raw.parse::<PosRat>() {
            Ok(r) => Some(r),
            Err(e) => {
                self.push(path, format!("{what}: {e}"));
                None
            }
        }
    }

    /// Weight parser wrapping positivity failures as faithfulness failures.
    fn weight(&mut self, path: String, raw: &str) -> Option<PosRat> {
        match raw.parse::<PosRat>() {
            Ok(r) => Some(r),
            Err(crate::rat::RatError::NotPositive(v)) => {
                self.push(path, format!("non-faithful weight {v}"));
                None
            }
            Err(e) => {
                self.push(path, e.to_string());
                None
            }
        }
    }

    fn lambda(&mut self, path: String, raw: &str) -> Option<PosRat> {
        let l = self.rat(path.clone(), raw, "tail ratio")?;
        if l.as_ratio() >= PosRat::one().as_ratio() {
            self.push(path, format!("tail ratio must lie in (0,1), got {l}"));
            return None;
        }
        Some(l)
    }

    fn group(&mut self, path: String, gens: &[String]) -> Option<RatioGroup> {
        let mut parsed = Vec::with_capacity(gens.len());
        for (i, g) in gens.iter().enumerate() {
            parsed.push(self.rat(format!("{path}[{i}]"), g, "generator")?);
        }
        Some(RatioGroup::generate(&parsed))
    }

    fn param(&mut self, path: String, raw: &str) -> Option<FreeGroupParam> {
        match FreeGroupParam::parse(raw) {
            Ok(p) => Some(p),
            Err(e) => {
                self.push(path, e);
                None
            }
        }
    }
}

/// Validates a raw algebra document, returning the typed algebra or every
/// invariant violation found, each with a path to the offending field.
pub fn validate(doc: &AlgebraDoc) -> Result<Algebra, Vec<Violation>> {
    let mut violations = Vec::new();
    let mut ck = Check {
        violations: &mut violations,
    };
    let mut summands = Vec::with_capacity(doc.summands.len());
    if doc.summands.is_empty() {
        ck.push("summands".into(), "algebra needs at least one summand");
    }
    for (i, s) in doc.summands.iter().enumerate() {
        let path = format!("summands[{i}]");
        match s {
            SummandDoc::Matrix { label, weights } => {
                if weights.is_empty() {
                    ck.push(format!("{path}.weights"), "matrix block needs k >= 1 weights");
                    continue;
                }
                let mut ws = Vec::with_capacity(weights.len());
                for (j, w) in weights.iter().enumerate() {
                    if let Some(w) = ck.weight(format!("{path}.weights[{j}]"), w) {
                        ws.push(w);
                    }
                }
                if ws.len() == weights.len() {
                    summands.push(Summand::MatrixBlock {
                        label: label.clone().unwrap_or_default(),
                        weights: ws,
                    });
                }
            }
            SummandDoc::TypeIInf {
                label,
                head,
                lambda,
                c,
            } => {
                let mut hs = Vec::with_capacity(head.len());
                for (j, w) in head.iter().enumerate() {
                    if let Some(w) = ck.weight(format!("{path}.head[{j}]"), w) {
                        hs.push(w);
                    }
                }
                let l = ck.lambda(format!("{path}.lambda"), lambda);
                let c = ck.weight(format!("{path}.c"), c);
                if let (Some(lambda), Some(c), true) = (l, c, hs.len() == head.len()) {
                    summands.push(Summand::TypeIInfinite {
                        label: label.clone().unwrap_or_default(),
                        head: hs,
                        lambda,
                        c,
                    });
                }
            }
            SummandDoc::FreeGroup { t, mass } => {
                let param = ck.param(format!("{path}.t"), t);
                let mass = ck.rat(format!("{path}.mass"), mass, "mass");
                if let (Some(param), Some(mass)) = (param, mass) {
                    summands.push(Summand::FreeGroupFactor { param, mass });
                }
            }
            SummandDoc::ArakiWoods { generators, mass } => {
                let group = ck.group(format!("{path}.generators"), generators);
                let mass = ck.rat(format!("{path}.mass"), mass, "mass");
                if let (Some(group), Some(mass)) = (group, mass) {
                    if group.is_trivial() {
                        ck.push(
                            format!("{path}.generators"),
                            "Araki-Woods summand requires a nontrivial group",
                        );
                    } else {
                        summands.push(Summand::ArakiWoods { group, mass });
                    }
                }
            }
            SummandDoc::HyperfiniteTensor { factors, mass } => {
                let mass = ck.rat(format!("{path}.mass"), mass, "mass");
                let mut fs = Vec::with_capacity(factors.len());
                let mut ok = true;
                for (j, f) in factors.iter().enumerate() {
                    let fpath = format!("{path}.factors[{j}]");
                    let mut profile = Vec::with_capacity(f.profile.len());
                    for (k, w) in f.profile.iter().enumerate() {
                        match ck.weight(format!("{fpath}.profile[{k}]"), w) {
                            Some(w) => profile.push(w),
                            None => ok = false,
                        }
                    }
                    if profile.len() == f.profile.len()
                        && PosRat::sum(&profile) != PosRat::one().into_ratio()
                    {
                        ck.push(format!("{fpath}.profile"), "profile must sum to 1");
                        ok = false;
                    }
                    let multiplicity = match &f.multiplicity {
                        MultiplicityDoc::Finite(0) => {
                            ck.push(format!("{fpath}.multiplicity"), "multiplicity must be >= 1");
                            ok = false;
                            continue;
                        }
                        MultiplicityDoc::Finite(n) => Multiplicity::Finite(*n),
                        MultiplicityDoc::Tag(tag) if tag == "inf" => Multiplicity::Infinite,
                        MultiplicityDoc::Tag(tag) => {
                            ck.push(
                                format!("{fpath}.multiplicity"),
                                format!("expected integer or \"inf\", got {tag:?}"),
                            );
                            ok = false;
                            continue;
                        }
                    };
                    fs.push(TensorFactor {
                        profile,
                        multiplicity,
                    });
                }
                let diffuse = fs.iter().any(|f| {
                    f.profile.len() >= 2 && matches!(f.multiplicity, Multiplicity::Infinite)
                });
                if !diffuse {
                    ck.push(
                        format!("{path}.factors"),
                        "hyperfinite tensor must be diffuse: some factor of size >= 2 needs infinite multiplicity",
                    );
                    ok = false;
                }
                if let (Some(mass), true) = (mass, ok) {
                    summands.push(Summand::HyperfiniteTensor { factors: fs, mass });
                }
            }
            SummandDoc::Tensor {
                type_i,
                diffuse,
                mass,
            } => {
                let mass = ck.rat(format!("{path}.mass"), mass, "mass");
                let type_i = validate_profile(&mut ck, format!("{path}.type_i"), type_i);
                let diffuse = match diffuse {
                    TensorDiffuseDoc::FreeGroup { t } => ck
                        .param(format!("{path}.diffuse.t"), t)
                        .map(TensorDiffuse::FreeGroup),
                    TensorDiffuseDoc::ArakiWoods { generators } => {
                        match ck.group(format!("{path}.diffuse.generators"), generators) {
                            Some(g) if g.is_trivial() => {
                                ck.push(
                                    format!("{path}.diffuse.generators"),
                                    "Araki-Woods part requires a nontrivial group",
                                );
                                None
                            }
                            other => other.map(TensorDiffuse::ArakiWoods),
                        }
                    }
                };
                if let (Some(mass), Some(type_i), Some(diffuse)) = (mass, type_i, diffuse) {
                    summands.push(Summand::Tensor {
                        type_i,
                        diffuse,
                        mass,
                    });
                }
            }
        }
    }
    // Central labels have to be unique so provenance and atom expansion can
    // address summands unambiguously.
    let algebra = Algebra::new(doc.label.clone(), summands);
    if algebra.summands().len() == doc.summands.len() {
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..algebra.summands().len() {
            let label = algebra.central_label(i);
            if !seen.insert(label.clone()) {
                violations.push(Violation {
                    path: format!("summands[{i}]"),
                    message: format!("duplicate summand label {label:?}"),
                });
            }
        }
    }
    if violations.is_empty() {
        Ok(algebra)
    } else {
        Err(violations)
    }
}

fn validate_profile(
    ck: &mut Check<'_>,
    path: String,
    doc: &TypeIProfileDoc,
) -> Option<TypeIProfile> {
    let profile = match doc {
        TypeIProfileDoc::Finite { weights } => {
            if weights.is_empty() {
                ck.push(format!("{path}.weights"), "profile needs k >= 1 weights");
                return None;
            }
            let mut ws = Vec::with_capacity(weights.len());
            for (j, w) in weights.iter().enumerate() {
                ws.push(ck.weight(format!("{path}.weights[{j}]"), w)?);
            }
            TypeIProfile::Finite(ws)
        }
        TypeIProfileDoc::Geometric { head, lambda, c } => {
            let mut hs = Vec::with_capacity(head.len());
            for (j, w) in head.iter().enumerate() {
                hs.push(ck.weight(format!("{path}.head[{j}]"), w)?);
            }
            let lambda = ck.lambda(format!("{path}.lambda"), lambda)?;
            let c = ck.weight(format!("{path}.c"), c)?;
            TypeIProfile::Geometric {
                head: hs,
                lambda,
                c,
            }
        }
    };
    if profile.total() != PosRat::one().into_ratio() {
        ck.push(path, "type I profile must sum to 1");
        return None;
    }
    Some(profile)
}

fn check_algebra(a: &Algebra, violations: &mut Vec<Violation>) {
    // Re-validate through the document round trip: the typed model enforces
    // positivity, so only the structural constraints can fail here.
    let doc = to_doc(a);
    if let Err(mut v) = validate(&doc) {
        violations.append(&mut v);
    }
}

/// Canonical document form of a typed algebra.
pub fn to_doc(a: &Algebra) -> AlgebraDoc {
    let summands = a
        .summands()
        .iter()
        .map(|s| match s {
            Summand::MatrixBlock { label, weights } => SummandDoc::Matrix {
                label: Some(label.clone()),
                weights: weights.iter().map(|w| w.to_string()).collect(),
            },
            Summand::TypeIInfinite {
                label,
                head,
                lambda,
                c,
            } => SummandDoc::TypeIInf {
                label: Some(label.clone()),
                head: head.iter().map(|w| w.to_string()).collect(),
                lambda: lambda.to_string(),
                c: c.to_string(),
            },
            Summand::FreeGroupFactor { param, mass } => SummandDoc::FreeGroup {
                t: param.to_string(),
                mass: mass.to_string(),
            },
            Summand::ArakiWoods { group, mass } => SummandDoc::ArakiWoods {
                generators: group.generators().iter().map(|g| g.to_string()).collect(),
                mass: mass.to_string(),
            },
            Summand::HyperfiniteTensor { factors, mass } => SummandDoc::HyperfiniteTensor {
                factors: factors
                    .iter()
                    .map(|f| TensorFactorDoc {
                        profile: f.profile.iter().map(|w| w.to_string()).collect(),
                        multiplicity: match f.multiplicity {
                            Multiplicity::Finite(n) => MultiplicityDoc::Finite(n),
                            Multiplicity::Infinite => MultiplicityDoc::Tag("inf".into()),
                        },
                    })
                    .collect(),
                mass: mass.to_string(),
            },
            Summand::Tensor {
                type_i,
                diffuse,
                mass,
            } => SummandDoc::Tensor {
                type_i: match type_i {
                    TypeIProfile::Finite(w) => TypeIProfileDoc::Finite {
                        weights: w.iter().map(|x| x.to_string()).collect(),
                    },
                    TypeIProfile::Geometric { head, lambda, c } => TypeIProfileDoc::Geometric {
                        head: head.iter().map(|x| x.to_string()).collect(),
                        lambda: lambda.to_string(),
                        c: c.to_string(),
                    },
                },
                diffuse: match diffuse {
                    TensorDiffuse::FreeGroup(p) => TensorDiffuseDoc::FreeGroup { t: p.to_string() },
                    TensorDiffuse::ArakiWoods(g) => TensorDiffuseDoc::ArakiWoods {
                        generators: g.generators().iter().map(|x| x.to_string()).collect(),
                    },
                },
                mass: mass.to_string(),
            },
        })
        .collect();
    AlgebraDoc {
        label: a.label().to_string(),
        summands,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: u64, d: u64) -> PosRat {
        PosRat::of(n, d)
    }

    fn m2_35() -> Algebra {
        Algebra::new("A", vec![Summand::matrix(vec![r(3, 5), r(2, 5)])])
    }

    #[test]
    fn validate_accepts_simple_block() {
        let doc = AlgebraDoc {
            label: "A".into(),
            summands: vec![SummandDoc::Matrix {
                label: None,
                weights: vec!["3/5".into(), "2/5".into()],
            }],
        };
        let a = validate(&doc).unwrap();
        assert_eq!(a.total_mass(), PosRat::one());
        assert_eq!(a.summands()[0].label(), Some("A:0"));
    }

    #[test]
    fn validate_rejects_zero_weight() {
        let doc = AlgebraDoc {
            label: "A".into(),
            summands: vec![SummandDoc::Matrix {
                label: None,
                weights: vec!["3/5".into(), "0".into()],
            }],
        };
        let errs = validate(&doc).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].path, "summands[0].weights[1]");
        assert!(errs[0].message.contains("non-faithful weight"));
    }

    #[test]
    fn validate_rejects_trivial_araki_woods() {
        let doc = AlgebraDoc {
            label: "A".into(),
            summands: vec![SummandDoc::ArakiWoods {
                generators: vec!["1".into()],
                mass: "1".into(),
            }],
        };
        let errs = validate(&doc).unwrap_err();
        assert!(errs[0].message.contains("nontrivial group"));
    }

    #[test]
    fn point_spectrum_of_matrix_block() {
        assert_eq!(m2_35().point_spectrum(), RatioGroup::cyclic(&r(3, 2)));
    }

    #[test]
    fn point_spectrum_trivial_when_all_uniform() {
        let a = Algebra::new(
            "A",
            vec![
                Summand::matrix(vec![r(1, 4), r(1, 4)]),
                Summand::atom(r(1, 2)),
            ],
        );
        assert!(a.point_spectrum().is_trivial());
    }

    #[test]
    fn point_spectrum_of_psi_lambda() {
        let a = Algebra::new("B", vec![Summand::psi_lambda_infinite(r(1, 2))]);
        assert_eq!(a.point_spectrum(), RatioGroup::cyclic(&r(1, 2)));
        assert_eq!(a.total_mass(), PosRat::one());
    }

    #[test]
    fn psi_lambda_matrix_weights() {
        // lambda = 1/2, n = 2: weights (1-l)/(1-l^2) = 2/3 and l*(2/3) = 1/3
        let s = Summand::psi_lambda_matrix(2, &r(1, 2));
        assert_eq!(s.block_weights().unwrap(), &[r(2, 3), r(1, 3)]);
        assert_eq!(s.ratio_group(), RatioGroup::cyclic(&r(1, 2)));
    }

    #[test]
    fn traciality() {
        let abelian = Algebra::new(
            "A",
            vec![Summand::atom(r(3, 5)), Summand::atom(r(2, 5))],
        );
        assert!(abelian.is_tracial());
        assert!(!m2_35().is_tracial());
        let with_typei = Algebra::new("A", vec![Summand::psi_lambda_infinite(r(1, 3))]);
        assert!(!with_typei.is_tracial());
    }

    #[test]
    fn rescale_is_linear_and_invertible() {
        let a = m2_35();
        assert_eq!(a.rescale(&PosRat::one()), a);
        let scaled = a.rescale(&r(5, 1));
        assert_eq!(
            scaled.summands()[0].block_weights().unwrap(),
            &[r(3, 1), r(2, 1)]
        );
        assert_eq!(scaled.rescale(&r(1, 5)), a);
        assert_eq!(scaled.point_spectrum(), a.point_spectrum());
    }

    #[test]
    fn tensor_absorption_by_araki_woods() {
        let t = Summand::Tensor {
            type_i: TypeIProfile::Finite(vec![r(1, 3), r(2, 3)]),
            diffuse: TensorDiffuse::ArakiWoods(RatioGroup::cyclic(&r(2, 1))),
            mass: PosRat::one(),
        };
        let simplified = tensor_simplify(&t);
        assert_eq!(
            simplified,
            Summand::ArakiWoods {
                group: RatioGroup::cyclic(&r(2, 1)),
                mass: PosRat::one(),
            }
        );
        // ratio 2 is not in <5>: unchanged
        let t = Summand::Tensor {
            type_i: TypeIProfile::Finite(vec![r(1, 3), r(2, 3)]),
            diffuse: TensorDiffuse::ArakiWoods(RatioGroup::cyclic(&r(5, 1))),
            mass: PosRat::one(),
        };
        assert_eq!(tensor_simplify(&t), t);
    }

    #[test]
    fn tensor_amplifies_free_group_parameter() {
        let t = Summand::Tensor {
            type_i: TypeIProfile::Finite(vec![r(1, 2), r(1, 2)]),
            diffuse: TensorDiffuse::FreeGroup(FreeGroupParam::Finite(r(3, 2))),
            mass: PosRat::one(),
        };
        // 1 + 4 * (1/2) = 3
        assert_eq!(
            tensor_simplify(&t),
            Summand::FreeGroupFactor {
                param: FreeGroupParam::Finite(r(3, 1)),
                mass: PosRat::one(),
            }
        );
        let unknown = Summand::Tensor {
            type_i: TypeIProfile::Finite(vec![r(1, 2), r(1, 2)]),
            diffuse: TensorDiffuse::FreeGroup(FreeGroupParam::Unknown),
            mass: PosRat::one(),
        };
        assert_eq!(
            tensor_simplify(&unknown),
            Summand::FreeGroupFactor {
                param: FreeGroupParam::Unknown,
                mass: PosRat::one(),
            }
        );
    }

    #[test]
    fn tensor_simplify_is_idempotent_and_mass_preserving() {
        let cases = vec![
            Summand::Tensor {
                type_i: TypeIProfile::Finite(vec![r(1, 3), r(2, 3)]),
                diffuse: TensorDiffuse::ArakiWoods(RatioGroup::cyclic(&r(2, 1))),
                mass: r(7, 3),
            },
            Summand::Tensor {
                type_i: TypeIProfile::Finite(vec![r(1, 3), r(2, 3)]),
                diffuse: TensorDiffuse::FreeGroup(FreeGroupParam::Finite(r(2, 1))),
                mass: r(7, 3),
            },
        ];
        for t in cases {
            let once = tensor_simplify(&t);
            assert_eq!(once.mass(), t.mass());
            assert_eq!(tensor_simplify(&once), once);
        }
    }

    #[test]
    fn doc_round_trip_is_canonical() {
        let a = Algebra::new(
            "A",
            vec![
                Summand::matrix(vec![r(3, 5), r(2, 5)]),
                Summand::psi_lambda_infinite(r(1, 2)),
            ],
        );
        let doc = to_doc(&a);
        let js = serde_json::to_string(&doc).unwrap();
        let doc2: AlgebraDoc = serde_json::from_str(&js).unwrap();
        let js2 = serde_json::to_string(&doc2).unwrap();
        assert_eq!(js, js2);
        assert_eq!(validate(&doc2).unwrap(), a);
    }
}
