//! Decision rules over the toy domains, shared by the scripted agent and the
//! scripted scorer so both agree on which action "advances the goal".

use super::adventure::{self, Direction};
use super::shop::{keyword_overlap, ShopInstruction, BACK_TO_SEARCH, BUY_NOW, PREV};
use crate::model::{Domain, HistoryView};
use crate::perturb::page::{normalize_price, PageState, PageType};

/// Text-only view of an interaction: the initial observation plus
/// (action, observation) pairs, the last of which is the current state.
#[derive(Debug, Clone)]
pub struct PolicyView<'a> {
    pub domain: Domain,
    pub initial: &'a str,
    pub steps: Vec<(&'a str, &'a str)>,
}

impl<'a> PolicyView<'a> {
    pub fn from_history(h: &HistoryView<'a>) -> Self {
        Self {
            domain: h.domain,
            initial: h.initial_obs.text(),
            steps: h.steps.iter().map(|s| (s.action.as_str(), s.obs.text())).collect(),
        }
    }

    pub fn current(&self) -> &'a str {
        self.steps.last().map(|s| s.1).unwrap_or(self.initial)
    }

    /// Observations newest first, starting with the current one.
    fn observations_rev(&self) -> impl Iterator<Item = &'a str> + '_ {
        self.steps.iter().rev().map(|s| s.1).chain(std::iter::once(self.initial))
    }
}

/// The page the shopper is on: invalid actions leave the page unchanged, so
/// this is the newest observation that parses.
fn current_page(view: &PolicyView<'_>) -> Option<PageState> {
    view.observations_rev().find_map(|o| PageState::parse(o).ok())
}

fn price_cents(price: &str) -> Option<u32> {
    super::shop::parse_cents(&normalize_price(price)?)
}

fn matching_item<'p>(page: &'p PageState, want: &ShopInstruction) -> Option<&'p crate::perturb::page::Item> {
    page.items.iter().find(|i| {
        i.title.eq_ignore_ascii_case(&want.title) && price_cents(&i.price).is_some_and(|p| p <= want.price_cap_cents)
    })
}

fn selected_values(page: &PageState) -> Vec<String> {
    page.details
        .iter()
        .find_map(|d| d.strip_prefix("Selected: "))
        .filter(|s| *s != "none")
        .map(|s| {
            s.split(", ")
                .filter_map(|kv| kv.split_once('=').map(|(_, v)| v.to_string()))
                .collect()
        })
        .unwrap_or_default()
}

/// The results page the current item page was opened from, if still in view.
fn previous_results(view: &PolicyView<'_>) -> Option<PageState> {
    view.observations_rev()
        .skip(1)
        .filter_map(|o| PageState::parse(o).ok())
        .find(|p| p.page_type != PageType::ItemDetail)
        .filter(|p| p.page_type == PageType::SearchResults)
}

/// Commands the current state accepts. For the shop landing page this is the
/// single query a competent shopper would type.
pub fn admissible(view: &PolicyView<'_>) -> Vec<String> {
    match view.domain {
        Domain::Shop => {
            let Some(page) = current_page(view) else { return vec![] };
            if page.page_type == PageType::Search {
                return ShopInstruction::parse(&page.instruction)
                    .map(|i| vec![search_for(&i)])
                    .unwrap_or_default();
            }
            page.clickables
        }
        Domain::Adventure => view
            .observations_rev()
            .next()
            .and_then(adventure::listed_actions)
            .unwrap_or_default(),
    }
}

fn search_for(i: &ShopInstruction) -> String {
    format!("search[{}]", i.title.to_ascii_lowercase())
}

/// How many walkthrough steps have been carried out successfully.
pub fn plan_progress(view: &PolicyView<'_>, plan: &[String]) -> usize {
    let mut k = 0;
    for (a, o) in &view.steps {
        if k < plan.len() && *a == plan[k] && !adventure::is_rejection(o) {
            k += 1;
        }
    }
    k
}

/// The unique admissible action that advances the task, when there is one.
pub fn goal_action(view: &PolicyView<'_>) -> Option<String> {
    let allowed = admissible(view);
    let goal = match view.domain {
        Domain::Shop => shop_goal(view)?,
        Domain::Adventure => {
            let plan = adventure::parse_task_statement(view.initial)?;
            plan.get(plan_progress(view, &plan))?.clone()
        }
    };
    allowed.contains(&goal).then_some(goal)
}

fn shop_goal(view: &PolicyView<'_>) -> Option<String> {
    let page = current_page(view)?;
    let want = ShopInstruction::parse(&page.instruction)?;
    match page.page_type {
        PageType::Search => Some(search_for(&want)),
        PageType::SearchResults => matching_item(&page, &want).map(|i| i.click()),
        PageType::ItemDetail => {
            let item = page.items.first()?;
            if item.title.eq_ignore_ascii_case(&want.title) {
                let selected = selected_values(&page);
                Some(
                    want.options
                        .iter()
                        .find(|o| !selected.contains(&o.value))
                        .map(|o| format!("click[{}]", o.value))
                        .unwrap_or_else(|| BUY_NOW.to_string()),
                )
            } else {
                previous_results(view)
                    .filter(|r| matching_item(r, &want).is_some())
                    .map(|_| PREV.to_string())
            }
        }
        PageType::Done => None,
    }
}

/// What a competent agent does when no action advances the goal: commit to
/// the closest match in the shop, retrace or explore in the adventure.
pub fn fallback_action(view: &PolicyView<'_>) -> String {
    match view.domain {
        Domain::Shop => shop_fallback(view),
        Domain::Adventure => adventure_fallback(view),
    }
}

fn shop_fallback(view: &PolicyView<'_>) -> String {
    let Some(page) = current_page(view) else {
        return BACK_TO_SEARCH.to_string();
    };
    let want = ShopInstruction::parse(&page.instruction);
    match page.page_type {
        PageType::Search => want.map(|w| search_for(&w)).unwrap_or_else(|| "search[item]".into()),
        PageType::SearchResults => {
            let title = want.as_ref().map(|w| w.title.as_str()).unwrap_or("");
            let cap = want.as_ref().map_or(u32::MAX, |w| w.price_cap_cents);
            let key = |i: &crate::perturb::page::Item| {
                let affordable = price_cents(&i.price).is_some_and(|p| p <= cap);
                (affordable, keyword_overlap(title, &i.title))
            };
            let candidates: Vec<_> = page.items.iter().filter(|i| page.has_clickable(&i.click())).collect();
            let top = candidates.iter().map(|i| key(i)).max();
            let first_best = candidates.into_iter().find(|i| Some(key(i)) == top);
            first_best.map(|i| i.click()).unwrap_or_else(|| BACK_TO_SEARCH.to_string())
        }
        PageType::ItemDetail => {
            let selected = selected_values(&page);
            want.and_then(|w| {
                w.options
                    .iter()
                    .map(|o| format!("click[{}]", o.value))
                    .find(|c| page.has_clickable(c) && !selected.iter().any(|s| format!("click[{s}]") == *c))
            })
            .unwrap_or_else(|| BUY_NOW.to_string())
        }
        PageType::Done => BUY_NOW.to_string(),
    }
}

fn adventure_fallback(view: &PolicyView<'_>) -> String {
    let allowed = admissible(view);
    let plan = adventure::parse_task_statement(view.initial).unwrap_or_default();
    // undo the latest successful move if it was not part of the walkthrough
    let mut k = 0;
    let mut last_detour = None;
    for (a, o) in &view.steps {
        let ok = !adventure::is_rejection(o);
        if k < plan.len() && *a == plan[k] && ok {
            k += 1;
            if a.starts_with("go ") {
                last_detour = None;
            }
        } else if ok && a.starts_with("go ") {
            last_detour = a.strip_prefix("go ").and_then(|d| {
                Direction::ALL
                    .into_iter()
                    .find(|x| x.as_str() == d)
                    .map(|x| format!("go {}", x.opposite().as_str()))
            });
        }
    }
    if let Some(back) = last_detour.filter(|b| allowed.contains(b)) {
        return back;
    }
    allowed
        .iter()
        .find(|a| a.starts_with("go "))
        .cloned()
        .unwrap_or_else(|| "look".to_string())
}
