//! Dataset generation: preset domain tables, per-sample seed derivation, and
//! the solver pipelines that turn draws into (input, solution) pairs.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::SolveError;
use crate::pde::advection::advect;
use crate::pde::burgers::{self, BurgersConfig};
use crate::pde::darcy::{self, DarcyMask};
use crate::pde::grf::{self, GrfParams};
use crate::pde::grid::{Dataset, Domain, GridFunction, SamplePair};
use crate::pde::kl::{self, KlKernel};
use crate::rng::stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Burgers,
    Advection,
    Darcy,
}

impl Family {
    pub fn id(self) -> &'static str {
        match self {
            Family::Burgers => "burgers",
            Family::Advection => "advection",
            Family::Darcy => "darcy",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subdomain {
    D1,
    D2,
    D3,
}

impl Subdomain {
    pub fn id(self) -> &'static str {
        match self {
            Subdomain::D1 => "d1",
            Subdomain::D2 => "d2",
            Subdomain::D3 => "d3",
        }
    }
}

/// Initial-condition families for the transport solver; coefficients are
/// uniform draws from the stated closed ranges, in listed order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum InitialProfile {
    /// a x^2 + b x + c
    Quadratic { a: [f64; 2], b: [f64; 2], c: [f64; 2] },
    /// a x^3 + b x^2 + c x + d, d held fixed
    Cubic { a: [f64; 2], b: [f64; 2], c: [f64; 2], d: f64 },
    /// a sin(b x + c)
    Sinusoid { a: [f64; 2], b: [f64; 2], c: [f64; 2] },
}

fn draw(range: [f64; 2], rng: &mut ChaCha8Rng) -> f64 {
    Uniform::new_inclusive(range[0], range[1]).sample(rng)
}

impl InitialProfile {
    pub fn sample(&self, nx: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let grid = |f: &dyn Fn(f64) -> f64| (0..nx).map(|i| f(i as f64 / nx as f64)).collect();
        match *self {
            InitialProfile::Quadratic { a, b, c } => {
                let (a, b, c) = (draw(a, rng), draw(b, rng), draw(c, rng));
                grid(&|x| (a * x + b) * x + c)
            }
            InitialProfile::Cubic { a, b, c, d } => {
                let (a, b, c) = (draw(a, rng), draw(b, rng), draw(c, rng));
                grid(&|x| ((a * x + b) * x + c) * x + d)
            }
            InitialProfile::Sinusoid { a, b, c } => {
                let (a, b, c) = (draw(a, rng), draw(b, rng), draw(c, rng));
                grid(&|x| a * (b * x + c).sin())
            }
        }
    }
}

/// Fully resolved generation parameters for one domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilyParams {
    Burgers {
        nx: usize,
        nu: f64,
        grf: GrfParams,
    },
    Advection {
        nx: usize,
        nt: usize,
        speed: f64,
        profile: InitialProfile,
    },
    Darcy {
        n: usize,
        modes: usize,
        kernel: KlKernel,
        mask: DarcyMask,
    },
}

impl FamilyParams {
    pub fn family(&self) -> Family {
        match self {
            FamilyParams::Burgers { .. } => Family::Burgers,
            FamilyParams::Advection { .. } => Family::Advection,
            FamilyParams::Darcy { .. } => Family::Darcy,
        }
    }
}

/// The preset table. Every (equation, subdomain) pair maps to the exact
/// published generation parameters; anything else must go through `custom`.
pub fn preset(equation: Family, subdomain: Subdomain) -> FamilyParams {
    let g = |mean, scale, tau, alpha| GrfParams { mean, scale, tau, alpha };
    match (equation, subdomain) {
        (Family::Burgers, Subdomain::D1) => FamilyParams::Burgers {
            nx: 1024,
            nu: 0.01,
            grf: g(0.0, 49.0, 7.0, 2.0),
        },
        (Family::Burgers, Subdomain::D2) => FamilyParams::Burgers {
            nx: 1024,
            nu: 0.002,
            grf: g(0.2, 2401.0, 7.0, 2.5),
        },
        (Family::Burgers, Subdomain::D3) => FamilyParams::Burgers {
            nx: 1024,
            nu: 0.004,
            grf: g(0.5, 390_625.0, 25.0, 2.5),
        },
        (Family::Advection, Subdomain::D1) => FamilyParams::Advection {
            nx: 100,
            nt: 50,
            speed: 3.0,
            profile: InitialProfile::Quadratic {
                a: [-1.0, 1.0],
                b: [-1.0, 1.0],
                c: [-1.0, 1.0],
            },
        },
        (Family::Advection, Subdomain::D2) => FamilyParams::Advection {
            nx: 100,
            nt: 50,
            speed: 2.0,
            profile: InitialProfile::Cubic {
                a: [0.0, 1.0],
                b: [-0.5, 0.5],
                c: [-0.5, 0.5],
                d: 0.5,
            },
        },
        (Family::Advection, Subdomain::D3) => FamilyParams::Advection {
            nx: 100,
            nt: 50,
            speed: 1.0,
            profile: InitialProfile::Sinusoid {
                a: [0.0, 1.0],
                b: [5.0, 10.0],
                c: [-1.0, 1.0],
            },
        },
        (Family::Darcy, Subdomain::D1) => FamilyParams::Darcy {
            n: 64,
            modes: 100,
            kernel: KlKernel::SqExpL2,
            mask: DarcyMask::Square,
        },
        (Family::Darcy, Subdomain::D2) => FamilyParams::Darcy {
            n: 64,
            modes: 100,
            kernel: KlKernel::SqExpL2,
            mask: DarcyMask::Triangle,
        },
        (Family::Darcy, Subdomain::D3) => FamilyParams::Darcy {
            n: 64,
            modes: 100,
            kernel: KlKernel::SqExpL1,
            mask: DarcyMask::Square,
        },
    }
}

fn default_n_val() -> usize {
    10
}

fn default_n_test() -> usize {
    100
}

/// What the `gen` entry point consumes. Presets fix all physics parameters;
/// `custom` is the only way to deviate from the table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenSpec {
    pub equation: Family,
    pub subdomain: Subdomain,
    #[serde(default)]
    pub n_train: Option<usize>,
    #[serde(default = "default_n_val")]
    pub n_val: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<FamilyParams>,
}

impl GenSpec {
    pub fn preset(equation: Family, subdomain: Subdomain, seed: u64) -> Self {
        GenSpec {
            equation,
            subdomain,
            n_train: None,
            n_val: default_n_val(),
            n_test: default_n_test(),
            seed,
            custom: None,
        }
    }

    pub fn resolve(&self) -> DomainSpec {
        let params = match &self.custom {
            Some(p) => {
                assert_eq!(
                    p.family(),
                    self.equation,
                    "custom parameters are for a different equation"
                );
                p.clone()
            }
            None => preset(self.equation, self.subdomain),
        };
        let n_train = self.n_train.unwrap_or(match self.equation {
            Family::Burgers => 1000,
            Family::Advection | Family::Darcy => 2000,
        });
        DomainSpec {
            equation: self.equation,
            subdomain: self.subdomain,
            params,
            n_train,
            n_val: self.n_val,
            n_test: self.n_test,
            seed: self.seed,
            custom: self.custom.is_some(),
        }
    }
}

/// A resolved spec: preset values filled in, counts defaulted.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DomainSpec {
    pub equation: Family,
    pub subdomain: Subdomain,
    pub params: FamilyParams,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
    pub custom: bool,
}

impl DomainSpec {
    pub fn domain_id(&self) -> String {
        format!("{}_{}", self.equation.id(), self.subdomain.id())
    }
}

pub struct GeneratedSplits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

// Validation and test samples live in index ranges disjoint from any
// realistic training size, so splits never share a draw.
pub const VAL_BASE: u64 = 10_000_000;
pub const TEST_BASE: u64 = 20_000_000;

pub fn generate(spec: &GenSpec) -> Result<GeneratedSplits, SolveError> {
    let dom = spec.resolve();
    Ok(GeneratedSplits {
        train: generate_split(&dom, "train", dom.n_train, 0)?,
        val: generate_split(&dom, "val", dom.n_val, VAL_BASE)?,
        test: generate_split(&dom, "test", dom.n_test, TEST_BASE)?,
    })
}

pub fn generate_split(
    dom: &DomainSpec,
    split: &str,
    count: usize,
    index_base: u64,
) -> Result<Dataset, SolveError> {
    let mut pairs = Vec::with_capacity(count);
    for i in 0..count {
        pairs.push(gen_sample(dom, index_base + i as u64)?);
    }
    Ok(Dataset {
        pairs,
        family: dom.equation.id().to_string(),
        domain_id: dom.domain_id(),
        split: split.to_string(),
        seed: dom.seed,
    })
}

/// One pair from its own derived stream: sample i is identical whether it is
/// generated alone, in order, or concurrently.
pub fn gen_sample(dom: &DomainSpec, index: u64) -> Result<SamplePair, SolveError> {
    let tag = format!("gen/{}", dom.domain_id());
    let mut rng = stream(dom.seed, &tag, index);
    match &dom.params {
        FamilyParams::Burgers { nx, nu, grf } => {
            let u0 = grf::sample(*nx, grf, &mut rng);
            let cfg = BurgersConfig {
                nu: *nu,
                ..BurgersConfig::default()
            };
            let u1 = burgers::solve(&u0, &cfg)?;
            let line = Domain::Interval { n: *nx };
            Ok(SamplePair {
                k: GridFunction::from_vec(line, u0),
                u: GridFunction::from_vec(line, u1),
            })
        }
        FamilyParams::Advection { nx, nt, speed, profile } => {
            let u0 = profile.sample(*nx, &mut rng);
            let ut = advect(&u0, *speed, *nt);
            Ok(SamplePair {
                k: GridFunction::from_vec(Domain::Interval { n: *nx }, u0),
                u: GridFunction::from_vec(Domain::SpaceTime { nx: *nx, nt: *nt }, ut),
            })
        }
        FamilyParams::Darcy { n, modes, kernel, mask } => {
            let basis = kl::basis(*kernel, *n, *modes)?;
            let g = basis.draw(&mut rng);
            let k: Vec<f64> = g.iter().map(|v| v.exp()).collect();
            let sol = darcy::solve(&k, *n, *mask)?;
            let sq = Domain::Square { n: *n };
            Ok(SamplePair {
                k: GridFunction::from_vec(sq, k),
                u: GridFunction::from_vec(sq, sol.u),
            })
        }
    }
}
