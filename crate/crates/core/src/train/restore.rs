use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamStore;
use crate::real::Real;

/// Which target parameters were copied and which kept their initialization.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestoreReport {
    pub restored: Vec<String>,
    pub fresh: Vec<String>,
}

/// Copies every source parameter whose name starts with one of `prefixes`
/// (all of them when `prefixes` is empty) into `target`. All names and
/// shapes are checked before anything is written, so a failed restore
/// leaves `target` untouched.
pub fn restore_partial<T: Real>(target: &mut ParamStore<T>, source: &ParamStore<T>, prefixes: &[&str]) -> Result<RestoreReport> {
    let selected: Vec<(&str, usize)> = source
        .iter()
        .enumerate()
        .filter(|(_, (name, _))| prefixes.is_empty() || prefixes.iter().any(|p| name.starts_with(p)))
        .map(|(i, (name, _))| (name, i))
        .collect();
    let mut plan = Vec::with_capacity(selected.len());
    for (name, src) in &selected {
        let dst = target.index_of(name).ok_or_else(|| Error::Restore {
            name: name.to_string(),
            reason: "not present in the model".into(),
        })?;
        let (have, want) = (source.values()[*src].shape(), target.values()[dst].shape());
        if have != want {
            return Err(Error::Restore {
                name: name.to_string(),
                reason: format!("checkpoint shape {have:?} does not match model shape {want:?}"),
            });
        }
        plan.push((*src, dst));
    }
    let mut copied = alloc::vec![false; target.len()];
    for (src, dst) in plan {
        target.values_mut()[dst] = source.values()[src].clone();
        copied[dst] = true;
    }
    let mut report = RestoreReport::default();
    for (name, done) in target.names().iter().zip(copied) {
        if done {
            report.restored.push(name.clone());
        } else {
            report.fresh.push(name.clone());
        }
    }
    Ok(report)
}
