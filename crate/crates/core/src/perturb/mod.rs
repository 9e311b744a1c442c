//! Controlled edits of shop result pages, from harmless (shuffle) to
//! decision-breaking (drop the item the expert clicks next).

pub mod page;
pub mod study;

use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use page::{Item, PageParseError, PageState, PageType};
pub use study::{run_perturbation_study, StudyConfig, StudyReport, StudyRow};

pub const DEFAULT_NOISE_RATE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    Oracle,
    Shuffle,
    DropIrrelevant,
    AddIrrelevant,
    RandomNoise,
    DropTarget,
    RandomCross,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 7] = [
        PerturbationKind::Oracle,
        PerturbationKind::Shuffle,
        PerturbationKind::DropIrrelevant,
        PerturbationKind::AddIrrelevant,
        PerturbationKind::RandomNoise,
        PerturbationKind::DropTarget,
        PerturbationKind::RandomCross,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PerturbationKind::Oracle => "oracle",
            PerturbationKind::Shuffle => "shuffle",
            PerturbationKind::DropIrrelevant => "drop_irrelevant",
            PerturbationKind::AddIrrelevant => "add_irrelevant",
            PerturbationKind::RandomNoise => "random_noise",
            PerturbationKind::DropTarget => "drop_target",
            PerturbationKind::RandomCross => "random_cross",
        }
    }

    /// None / mild / severe.
    pub fn severity(&self) -> &'static str {
        match self {
            PerturbationKind::Oracle => "none",
            PerturbationKind::Shuffle | PerturbationKind::DropIrrelevant | PerturbationKind::AddIrrelevant => "mild",
            PerturbationKind::RandomNoise => "moderate",
            PerturbationKind::DropTarget | PerturbationKind::RandomCross => "severe",
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PerturbationKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PerturbationKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown perturbation {s:?}"))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{kind}: {reason}")]
pub struct PerturbError {
    pub kind: PerturbationKind,
    pub reason: String,
}

const SYNTH_ADJ: &[&str] = &["ceramic", "bamboo", "stainless", "woven", "foldable", "magnetic"];
const SYNTH_NOUN: &[&str] = &["plant pot", "cutting board", "lunch box", "key holder", "bath mat", "photo frame"];
const NOISE_TOKENS: &[&str] = &["zorp", "quix", "blen", "trav", "mulo", "frin", "dask", "pelt"];
const ID_CHARS: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbOptions {
    pub noise_rate: f64,
}

impl Default for PerturbOptions {
    fn default() -> Self {
        Self {
            noise_rate: DEFAULT_NOISE_RATE,
        }
    }
}

fn is_item_click(page: &PageState, c: &str) -> bool {
    page.items.iter().any(|i| i.click() == c)
}

/// Rewrites the clickables so item clicks follow the (edited) item order,
/// keeping other clickables where they were.
fn sync_clickables(original: &PageState, page: &mut PageState) {
    let first_item_pos = original.clickables.iter().position(|c| is_item_click(original, c));
    let mut out: Vec<String> = original
        .clickables
        .iter()
        .filter(|c| !is_item_click(original, c))
        .cloned()
        .collect();
    let clicks = page.items.iter().map(Item::click);
    match first_item_pos {
        Some(pos) => {
            let tail = out.split_off(pos.min(out.len()));
            out.extend(clicks);
            out.extend(tail);
        }
        None => out.extend(clicks),
    }
    page.clickables = out;
}

/// Applies one perturbation. Pure: the input page is never modified and the
/// same seed gives the same output.
pub fn apply_perturbation(
    page: &PageState,
    kind: PerturbationKind,
    seed: u64,
    corpus: &[PageState],
) -> Result<PageState, PerturbError> {
    apply_with(page, kind, seed, corpus, PerturbOptions::default())
}

pub fn apply_with(
    page: &PageState,
    kind: PerturbationKind,
    seed: u64,
    corpus: &[PageState],
    opts: PerturbOptions,
) -> Result<PageState, PerturbError> {
    let fail = |reason: &str| PerturbError {
        kind,
        reason: reason.to_string(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((kind as u64) << 56));
    let target_idx = page
        .target_item_id
        .as_deref()
        .and_then(|t| page.items.iter().position(|i| i.item_id.eq_ignore_ascii_case(t)));
    let mut out = page.clone();
    match kind {
        PerturbationKind::Oracle => {
            if target_idx.is_none() {
                return Err(fail("page has no target item"));
            }
        }
        PerturbationKind::Shuffle => {
            if page.items.len() < 2 {
                return Err(fail("needs at least two items"));
            }
            let mut order: Vec<usize> = (0..page.items.len()).collect();
            order.shuffle(&mut rng);
            if order.iter().enumerate().all(|(i, &j)| i == j) {
                order.rotate_left(1);
            }
            out.items = order.iter().map(|&j| page.items[j].clone()).collect();
            sync_clickables(page, &mut out);
        }
        PerturbationKind::DropIrrelevant => {
            if page.items.len() < 2 {
                return Err(fail("needs at least two items"));
            }
            let others: Vec<usize> = (0..page.items.len()).filter(|&i| Some(i) != target_idx).collect();
            let drop = *others.choose(&mut rng).ok_or_else(|| fail("no non-target item"))?;
            out.items.remove(drop);
            sync_clickables(page, &mut out);
        }
        PerturbationKind::AddIrrelevant => {
            let id = loop {
                let tail: String = (0..8)
                    .map(|_| *ID_CHARS.choose(&mut rng).expect("non-empty") as char)
                    .collect();
                let id = format!("B0{tail}");
                if page.item(&id).is_none() {
                    break id;
                }
            };
            let title = format!(
                "{} {}",
                SYNTH_ADJ.choose(&mut rng).expect("non-empty"),
                SYNTH_NOUN.choose(&mut rng).expect("non-empty")
            );
            let price = page::format_cents(rng.random_range(300..6000));
            let at = rng.random_range(0..=page.items.len());
            out.items.insert(at, Item::new(id, title, price));
            sync_clickables(page, &mut out);
        }
        PerturbationKind::RandomNoise => {
            let slots: Vec<(usize, usize)> = page
                .items
                .iter()
                .enumerate()
                .flat_map(|(i, it)| (0..it.title.split(' ').count()).map(move |t| (i, t)))
                .collect();
            if slots.is_empty() {
                return Err(fail("no title tokens"));
            }
            let n = ((slots.len() as f64 * opts.noise_rate).round() as usize).clamp(1, slots.len());
            let chosen: Vec<(usize, usize)> = slots.choose_multiple(&mut rng, n).copied().collect();
            let mut titles: Vec<Vec<String>> = page
                .items
                .iter()
                .map(|it| it.title.split(' ').map(str::to_string).collect())
                .collect();
            for (i, t) in chosen {
                let current = titles[i][t].clone();
                let replacement = loop {
                    let r = *NOISE_TOKENS.choose(&mut rng).expect("non-empty");
                    if r != current {
                        break r;
                    }
                };
                titles[i][t] = replacement.to_string();
            }
            for (it, toks) in out.items.iter_mut().zip(titles) {
                it.title = toks.join(" ");
            }
        }
        PerturbationKind::DropTarget => {
            let t = target_idx.ok_or_else(|| fail("page has no target item"))?;
            if page.items.len() < 2 {
                return Err(fail("needs at least two items"));
            }
            out.items.remove(t);
            sync_clickables(page, &mut out);
        }
        PerturbationKind::RandomCross => {
            let rendered = page.render();
            let others: Vec<&PageState> = corpus.iter().filter(|p| p.render() != rendered).collect();
            out = (*others.choose(&mut rng).ok_or_else(|| fail("corpus has no other page"))?).clone();
            out.target_item_id = page.target_item_id.clone();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn page(n: usize) -> PageState {
        let items: Vec<Item> = (0..n)
            .map(|i| Item::new(format!("B0ITEM000{i}"), format!("item number {i} long title"), format!("${i}.00")))
            .collect();
        let mut clickables = vec!["click[back to search]".to_string()];
        clickables.extend(items.iter().map(Item::click));
        PageState {
            instruction: "Find me item number 0 with price lower than $9.00".into(),
            page_type: PageType::SearchResults,
            items,
            details: vec![],
            clickables,
            target_item_id: Some("B0ITEM0000".into()),
        }
    }

    #[test]
    fn oracle_is_identity() {
        let p = page(4);
        let out = apply_perturbation(&p, PerturbationKind::Oracle, 1, &[]).unwrap();
        assert_eq!(out.render(), p.render());
    }

    #[test]
    fn drop_target_removes_only_target() {
        let p = page(4);
        let out = apply_perturbation(&p, PerturbationKind::DropTarget, 1, &[]).unwrap();
        assert_eq!(out.items.len(), 3);
        assert!(out.item("B0ITEM0000").is_none());
        assert_eq!(&out.items[..], &p.items[1..]);
        assert!(!out.has_clickable("click[b0item0000]"));
        assert!(out.has_clickable("click[back to search]"));
        assert!(!out.validate(true));
    }

    #[test]
    fn preconditions_name_the_kind() {
        let mut p = page(1);
        let e = apply_perturbation(&p, PerturbationKind::DropIrrelevant, 1, &[]).unwrap_err();
        assert_eq!(e.kind, PerturbationKind::DropIrrelevant);
        p.target_item_id = None;
        assert!(apply_perturbation(&p, PerturbationKind::Oracle, 1, &[]).is_err());
        assert!(apply_perturbation(&page(3), PerturbationKind::RandomCross, 1, &[page(3)]).is_err());
    }

    #[test]
    fn random_cross_picks_another_page() {
        let mut other = page(2);
        other.instruction = "Find me something else with price lower than $1.00".into();
        let out = apply_perturbation(&page(3), PerturbationKind::RandomCross, 1, &[page(3), other.clone()]).unwrap();
        assert_eq!(out.render(), other.render());
    }

    proptest! {
        #[test]
        fn perturbations_are_pure_and_deterministic(n in 2usize..8, seed in any::<u64>(), k in 0usize..6) {
            let kind = PerturbationKind::ALL[k];
            let p = page(n);
            let before = p.clone();
            let a = apply_perturbation(&p, kind, seed, &[]).unwrap();
            let b = apply_perturbation(&p, kind, seed, &[]).unwrap();
            prop_assert_eq!(&p, &before);
            prop_assert_eq!(&a, &b);
            let reparsed = PageState::parse(&a.render()).unwrap();
            prop_assert_eq!(reparsed.render(), a.render());
            prop_assert!(a.validate(kind != PerturbationKind::DropTarget));
            if kind != PerturbationKind::Oracle {
                prop_assert_ne!(a.render(), p.render());
            }
            if kind == PerturbationKind::DropIrrelevant {
                prop_assert!(a.item("B0ITEM0000").is_some());
                prop_assert_eq!(a.items.len(), n - 1);
            }
        }
    }
}
