use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::engine::{
    AbsState, ConstantDiffusion, ConstantDrift, ConstantFunctional, Drift, LinearDrift, PathFunctional, RunningAverage,
    SineDrift, StateConstantDiffusion, StateDiffusion, StateValue, SupPower, TanhDiffusion, TanhState, TimeDiffusion,
    TimeLinearDiffusion, ZeroDrift, ZeroFunctional,
};
use crate::generators::{
    ConstantDriver, Driver, LinearYDriver, NonConvexDriver, PathSupDriver, QuadraticDriver, TanhDriver, ZeroDriver,
};
use crate::{Error, Result};

/// Named numeric parameters of a registry component.
pub type Params = BTreeMap<String, f64>;

/// Component families addressable from a config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Drift,
    TimeDiffusion,
    StateDiffusion,
    Driver,
    Functional,
}

impl Kind {
    pub fn label(self) -> &'static str {
        match self {
            Kind::Drift => "drift",
            Kind::TimeDiffusion => "time diffusion",
            Kind::StateDiffusion => "state diffusion",
            Kind::Driver => "driver",
            Kind::Functional => "functional",
        }
    }
}

type Ctor<T> = Arc<dyn Fn(&Params) -> Result<Arc<T>> + Send + Sync>;

struct Entry<T: ?Sized> {
    defaults: Params,
    doc: String,
    ctor: Ctor<T>,
}

/// Listing row for `list-registry`.
#[derive(Debug, Clone, Serialize)]
pub struct EntryInfo {
    pub kind: Kind,
    pub name: String,
    pub doc: String,
    pub defaults: Params,
}

/// Name → constructor tables; custom components register through
/// [`Registry::register_driver`] and siblings.
pub struct Registry {
    drifts: BTreeMap<String, Entry<dyn Drift>>,
    time_diffusions: BTreeMap<String, Entry<dyn TimeDiffusion>>,
    state_diffusions: BTreeMap<String, Entry<dyn StateDiffusion>>,
    drivers: BTreeMap<String, Entry<dyn Driver>>,
    functionals: BTreeMap<String, Entry<dyn PathFunctional>>,
}

fn defaults(pairs: &[(&str, f64)]) -> Params {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn insert<T: ?Sized>(
    map: &mut BTreeMap<String, Entry<T>>,
    name: &str,
    doc: &str,
    pairs: &[(&str, f64)],
    ctor: impl Fn(&Params) -> Result<Arc<T>> + Send + Sync + 'static,
) {
    map.insert(
        name.to_string(),
        Entry {
            defaults: defaults(pairs),
            doc: doc.to_string(),
            ctor: Arc::new(ctor),
        },
    );
}

fn coord(p: &Params) -> Result<usize> {
    let c = p["coord"];
    if c < 0.0 || c.fract() != 0.0 {
        return Err(Error::schema("coord", format!("must be a nonnegative integer, got {c}")));
    }
    Ok(c as usize)
}

fn lookup<'a, T: ?Sized>(map: &'a BTreeMap<String, Entry<T>>, kind: Kind, name: &str) -> Result<&'a Entry<T>> {
    map.get(name).ok_or_else(|| Error::UnknownRegistryName {
        kind: kind.label(),
        name: name.to_string(),
        available: map.keys().cloned().collect(),
    })
}

/// Fills defaults and rejects parameters the component does not take.
fn materialize<T: ?Sized>(entry: &Entry<T>, name: &str, given: &Params) -> Result<Params> {
    if let Some(k) = given.keys().find(|k| !entry.defaults.contains_key(*k)) {
        return Err(Error::schema(
            k,
            format!(
                "`{name}` takes no parameter `{k}`; accepted: [{}]",
                entry.defaults.keys().cloned().collect::<Vec<_>>().join(", ")
            ),
        ));
    }
    if let Some((k, v)) = given.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::schema(k, format!("must be finite, got {v}")));
    }
    let mut out = entry.defaults.clone();
    out.extend(given.iter().map(|(k, v)| (k.clone(), *v)));
    Ok(out)
}

macro_rules! family {
    ($field:ident, $kind:expr, $ty:ty, $build:ident, $params:ident, $register:ident) => {
        pub fn $build(&self, name: &str, params: &Params) -> Result<Arc<$ty>> {
            let entry = lookup(&self.$field, $kind, name)?;
            (entry.ctor)(&materialize(entry, name, params)?)
        }

        /// Parameters with defaults filled in.
        pub fn $params(&self, name: &str, params: &Params) -> Result<Params> {
            materialize(lookup(&self.$field, $kind, name)?, name, params)
        }

        pub fn $register(
            &mut self,
            name: &str,
            doc: &str,
            defaults: &[(&str, f64)],
            ctor: impl Fn(&Params) -> Result<Arc<$ty>> + Send + Sync + 'static,
        ) {
            insert(&mut self.$field, name, doc, defaults, ctor);
        }
    };
}

impl Registry {
    pub fn empty() -> Self {
        Self {
            drifts: BTreeMap::new(),
            time_diffusions: BTreeMap::new(),
            state_diffusions: BTreeMap::new(),
            drivers: BTreeMap::new(),
            functionals: BTreeMap::new(),
        }
    }

    family!(drifts, Kind::Drift, dyn Drift, drift, drift_params, register_drift);
    family!(time_diffusions, Kind::TimeDiffusion, dyn TimeDiffusion, time_diffusion, time_diffusion_params, register_time_diffusion);
    family!(state_diffusions, Kind::StateDiffusion, dyn StateDiffusion, state_diffusion, state_diffusion_params, register_state_diffusion);
    family!(drivers, Kind::Driver, dyn Driver, driver, driver_params, register_driver);
    family!(functionals, Kind::Functional, dyn PathFunctional, functional, functional_params, register_functional);

    pub fn entries(&self) -> Vec<EntryInfo> {
        fn rows<T: ?Sized>(kind: Kind, map: &BTreeMap<String, Entry<T>>) -> impl Iterator<Item = EntryInfo> + '_ {
            map.iter().map(move |(name, e)| EntryInfo {
                kind,
                name: name.clone(),
                doc: e.doc.clone(),
                defaults: e.defaults.clone(),
            })
        }
        rows(Kind::Drift, &self.drifts)
            .chain(rows(Kind::TimeDiffusion, &self.time_diffusions))
            .chain(rows(Kind::StateDiffusion, &self.state_diffusions))
            .chain(rows(Kind::Driver, &self.drivers))
            .chain(rows(Kind::Functional, &self.functionals))
            .collect()
    }

    /// Every built-in component.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register_drift("zero", "b = 0", &[], |_| Ok(Arc::new(ZeroDrift)));
        r.register_drift("constant", "b = c", &[("c", 0.0)], |p| Ok(Arc::new(ConstantDrift { c: p["c"] })));
        r.register_drift("linear", "b(x) = beta·x", &[("beta", -1.0)], |p| Ok(Arc::new(LinearDrift { beta: p["beta"] })));
        r.register_drift("sine", "b(x) = amp·sin(freq·x), no analytic Jacobian", &[("amp", 0.5), ("freq", 1.0)], |p| {
            Ok(Arc::new(SineDrift {
                amp: p["amp"],
                freq: p["freq"],
            }))
        });
        r.register_time_diffusion("constant", "sigma(s) = sigma·I", &[("sigma", 1.0)], |p| {
            Ok(Arc::new(ConstantDiffusion { sigma: p["sigma"] }))
        });
        r.register_time_diffusion("time_linear", "sigma(s) = (s0 + s1·s)·I", &[("s0", 1.0), ("s1", 0.0)], |p| {
            Ok(Arc::new(TimeLinearDiffusion { s0: p["s0"], s1: p["s1"] }))
        });
        r.register_state_diffusion("constant", "sigma(x) = sigma·I", &[("sigma", 1.0)], |p| {
            Ok(Arc::new(StateConstantDiffusion { sigma: p["sigma"] }))
        });
        r.register_state_diffusion(
            "tanh",
            "sigma(x) = diag(base + amp·tanh(scale·x))",
            &[("base", 1.0), ("amp", 0.5), ("scale", 1.0)],
            |p| {
                Ok(Arc::new(TanhDiffusion {
                    base: p["base"],
                    amp: p["amp"],
                    scale: p["scale"],
                }))
            },
        );
        r.register_driver("zero", "0", &[], |_| Ok(Arc::new(ZeroDriver)));
        r.register_driver("constant", "c", &[("c", 0.0)], |p| Ok(Arc::new(ConstantDriver { c: p["c"] })));
        r.register_driver("linear_y", "a·y", &[("a", 0.0)], |p| Ok(Arc::new(LinearYDriver { a: p["a"] })));
        r.register_driver("quadratic", "gamma·|z|²", &[("gamma", 0.5)], |p| {
            Ok(Arc::new(QuadraticDriver { gamma: p["gamma"] }))
        });
        r.register_driver("nonconvex", "|z|²/2 + gamma_prime·Σcos(z_i)", &[("gamma_prime", 2.0)], |p| {
            Ok(Arc::new(NonConvexDriver {
                gamma_prime: p["gamma_prime"],
            }))
        });
        r.register_driver(
            "tanh",
            "scale·tanh(a_y·y + a_z·Σz_i)",
            &[("scale", 1.0), ("a_y", 0.0), ("a_z", 0.0)],
            |p| {
                Ok(Arc::new(TanhDriver {
                    scale: p["scale"],
                    a_y: p["a_y"],
                    a_z: p["a_z"],
                }))
            },
        );
        r.register_driver("path_sup", "c·(sup|X|)^power", &[("c", 1.0), ("power", 0.5)], |p| {
            Ok(Arc::new(PathSupDriver {
                c: p["c"],
                power: p["power"],
            }))
        });
        r.register_functional("zero", "0", &[], |_| Ok(Arc::new(ZeroFunctional)));
        r.register_functional("constant", "c", &[("c", 0.0)], |p| Ok(Arc::new(ConstantFunctional { c: p["c"] })));
        r.register_functional("state", "scale·x_coord", &[("coord", 0.0), ("scale", 1.0)], |p| {
            Ok(Arc::new(StateValue {
                coord: coord(p)?,
                scale: p["scale"],
            }))
        });
        r.register_functional("abs_state", "scale·|x_coord|", &[("coord", 0.0), ("scale", 1.0)], |p| {
            Ok(Arc::new(AbsState {
                coord: coord(p)?,
                scale: p["scale"],
            }))
        });
        r.register_functional("tanh_state", "scale·tanh(x_coord)", &[("coord", 0.0), ("scale", 1.0)], |p| {
            Ok(Arc::new(TanhState {
                coord: coord(p)?,
                scale: p["scale"],
            }))
        });
        r.register_functional("sup_power", "scale·(sup|X|)^power/power", &[("power", 1.5), ("scale", 1.0)], |p| {
            if p["power"] < 1.0 {
                return Err(Error::schema("power", "must be at least 1"));
            }
            Ok(Arc::new(SupPower {
                power: p["power"],
                scale: p["scale"],
            }))
        });
        r.register_functional("running_average", "time average of x_coord", &[("coord", 0.0)], |p| {
            Ok(Arc::new(RunningAverage { coord: coord(p)? }))
        });
        r
    }
}

impl Default for Registry {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_name_lists_alternatives() {
        let r = Registry::builtin();
        match r.driver("nonexistent", &Params::new()) {
            Err(Error::UnknownRegistryName { kind, available, .. }) => {
                assert_eq!(kind, "driver");
                assert!(available.contains(&"nonconvex".to_string()));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn defaults_are_filled_and_extras_rejected() {
        let r = Registry::builtin();
        let p = r.driver_params("tanh", &defaults(&[("scale", 2.0)])).unwrap();
        assert_eq!(p, defaults(&[("scale", 2.0), ("a_y", 0.0), ("a_z", 0.0)]));
        assert!(matches!(r.driver_params("tanh", &defaults(&[("bogus", 1.0)])), Err(Error::Schema { .. })));
    }

    #[test]
    fn custom_registration() {
        let mut r = Registry::builtin();
        r.register_driver("double_quadratic", "|z|²", &[], |_| Ok(Arc::new(QuadraticDriver { gamma: 1.0 })));
        assert!(r.driver("double_quadratic", &Params::new()).is_ok());
        assert!(r.entries().iter().any(|e| e.name == "double_quadratic"));
    }
}
