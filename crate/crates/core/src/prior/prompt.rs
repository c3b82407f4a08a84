use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Driving region carried as static context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Usa,
    Singapore,
    #[default]
    #[serde(other)]
    Other,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::Usa => "the USA",
            Region::Singapore => "Singapore",
            Region::Other => "an unspecified region",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptTemplate {
    /// Every class of the vocabulary, used before any prediction exists.
    GenericInstance,
    /// Only the classes predicted in the previous frame.
    RecursiveInstance,
    /// Environmental context for the fusion gate; `slots[0]` holds the
    /// condition phrase.
    Weather,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptSpec {
    pub class_names: Vec<String>,
    pub region: Region,
    pub template: PromptTemplate,
    pub slots: Vec<String>,
}

fn join_names(names: &[String]) -> String {
    match names {
        [] => String::new(),
        [one] => one.clone(),
        [head @ .., last] => format!("{} and {last}", head.join(", ")),
    }
}

impl PromptSpec {
    pub fn new(class_names: Vec<String>, region: Region, template: PromptTemplate, slots: Vec<String>) -> Result<Self> {
        if class_names.is_empty() {
            return Err(Error::Config("a prompt needs at least one class name".into()));
        }
        if template == PromptTemplate::Weather && slots.is_empty() {
            return Err(Error::Config("a weather prompt needs its condition slot".into()));
        }
        Ok(Self { class_names, region, template, slots })
    }

    /// Full sentence fed to the text encoder.
    pub fn text(&self) -> String {
        let names = join_names(&self.class_names);
        match self.template {
            PromptTemplate::GenericInstance => {
                format!("A photo of a driving scene in {} that may contain {names}.", self.region)
            }
            PromptTemplate::RecursiveInstance => {
                format!("A photo of a driving scene in {} containing {names}.", self.region)
            }
            PromptTemplate::Weather => {
                format!("Driving {} in {}, sensed by {names}.", self.slots[0], self.region)
            }
        }
    }

    /// Token prompts for cross-attention: the full sentence followed by one
    /// short prompt per class.
    pub fn token_texts(&self) -> Vec<String> {
        let mut out = vec![self.text()];
        out.extend(self.class_names.iter().map(|c| format!("a {c} on a road in {}", self.region)));
        out
    }
}

/// Instance prompt for frame `t`. Frame 0, or a frame whose predecessor
/// predicted nothing, uses the generic all-class template; later frames name
/// exactly the classes in `predicted`, in vocabulary order.
pub fn build_instance_prompt(vocabulary: &[String], predicted: &BTreeSet<usize>, region: Region, t: usize) -> Result<PromptSpec> {
    if let Some(&bad) = predicted.iter().find(|&&c| c >= vocabulary.len()) {
        return Err(Error::OutOfRange(format!("class {bad} outside a vocabulary of {}", vocabulary.len())));
    }
    if t == 0 || predicted.is_empty() {
        return PromptSpec::new(vocabulary.to_vec(), region, PromptTemplate::GenericInstance, Vec::new());
    }
    let names = predicted.iter().map(|&c| vocabulary[c].clone()).collect();
    PromptSpec::new(names, region, PromptTemplate::RecursiveInstance, Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vec<String> {
        ["driveable_surface", "car", "pedestrian", "manmade"].map(String::from).to_vec()
    }

    #[test]
    fn generic_prompt_names_everything() {
        let p = build_instance_prompt(&vocab(), &BTreeSet::new(), Region::Usa, 0).unwrap();
        assert_eq!(p.template, PromptTemplate::GenericInstance);
        assert_eq!(
            p.text(),
            "A photo of a driving scene in the USA that may contain driveable_surface, car, pedestrian and manmade."
        );
        assert_eq!(p.token_texts().len(), 5);
    }

    #[test]
    fn recursive_prompt_restricts_to_predictions() {
        let predicted: BTreeSet<usize> = [2, 1].into();
        let p = build_instance_prompt(&vocab(), &predicted, Region::Singapore, 1).unwrap();
        assert_eq!(p.class_names, vec!["car", "pedestrian"]);
        assert_eq!(p.text(), "A photo of a driving scene in Singapore containing car and pedestrian.");
        let again = build_instance_prompt(&vocab(), &predicted, Region::Singapore, 7).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn unknown_class_rejected() {
        assert!(build_instance_prompt(&vocab(), &[9].into(), Region::Other, 1).is_err());
    }

    #[test]
    fn unknown_region_string_is_other() {
        let r: Region = serde_json::from_str("\"mars\"").unwrap();
        assert_eq!(r, Region::Other);
    }
}
