//! Miniature shop: search, open an item, pick options, buy.

use serde::{Deserialize, Serialize};

use super::{EnvError, EnvStep, Environment, SpecError, DEFAULT_MAX_STEPS, INVALID_ACTION};
use crate::model::{Action, Domain, Observation};
use crate::perturb::page::{format_cents, Item, PageState, PageType};

pub const RESULTS_PAGE_SIZE: usize = 10;
pub const BACK_TO_SEARCH: &str = "click[back to search]";
pub const PREV: &str = "click[< prev]";
pub const BUY_NOW: &str = "click[buy now]";
pub const SEARCH_PLACEHOLDER: &str = "search[<keywords>]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionGroup {
    pub name: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Product {
    pub id: String,
    pub title: String,
    pub price_cents: u32,
    #[serde(default)]
    pub options: Vec<OptionGroup>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequiredOption {
    pub name: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShopTask {
    pub instruction: String,
    pub target_id: String,
    #[serde(default)]
    pub required_options: Vec<RequiredOption>,
    pub price_cap_cents: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyShopSpec {
    pub task_id: String,
    pub catalog: Vec<Product>,
    pub task: ShopTask,
}

/// The parsed form of a shop instruction line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShopInstruction {
    pub title: String,
    pub options: Vec<RequiredOption>,
    pub price_cap_cents: u32,
}

impl ShopInstruction {
    pub fn render(&self) -> String {
        let mut parts: Vec<String> = self
            .options
            .iter()
            .map(|o| format!("{}: {}", o.name, o.value))
            .collect();
        parts.push(format!("price lower than {}", format_cents(self.price_cap_cents)));
        format!("Find me {} with {}", self.title, parts.join(", "))
    }

    pub fn parse(text: &str) -> Option<Self> {
        let rest = text.strip_prefix("Find me ")?;
        let (title, rest) = rest.split_once(" with ")?;
        let mut parts: Vec<&str> = rest.split(", ").collect();
        let cap = parts.pop()?.strip_prefix("price lower than ")?;
        let price_cap_cents = parse_cents(cap)?;
        let options = parts
            .into_iter()
            .map(|p| {
                let (name, value) = p.split_once(": ")?;
                Some(RequiredOption {
                    name: name.to_string(),
                    value: value.to_string(),
                })
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Self {
            title: title.to_string(),
            options,
            price_cap_cents,
        })
    }
}

pub fn parse_cents(price: &str) -> Option<u32> {
    let norm = crate::perturb::page::normalize_price(price)?;
    let (w, f) = norm.trim_start_matches('$').split_once('.')?;
    Some(w.parse::<u32>().ok()? * 100 + f.parse::<u32>().ok()?)
}

pub fn tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(|t| t.to_ascii_lowercase()).collect()
}

/// Count of distinct query tokens that also occur in the title.
pub fn keyword_overlap(query: &str, title: &str) -> usize {
    let title = tokens(title);
    let mut q = tokens(query);
    q.sort();
    q.dedup();
    q.iter().filter(|t| title.contains(t)).count()
}

impl ToyShopSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        let err = |m: String| Err(SpecError(format!("{}: {m}", self.task_id)));
        if self.catalog.is_empty() {
            return err("empty catalog".into());
        }
        let mut ids: Vec<String> = self.catalog.iter().map(|p| p.id.to_ascii_lowercase()).collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return err("duplicate product ids".into());
        }
        for p in &self.catalog {
            if p.title.contains(" with ") || p.title.contains(" | ") || p.title.contains('\n') {
                return err(format!("title {:?} breaks the page grammar", p.title));
            }
            if p.id.contains(' ') || p.id.is_empty() {
                return err(format!("bad id {:?}", p.id));
            }
            let mut values: Vec<&str> = p.options.iter().flat_map(|g| g.values.iter().map(String::as_str)).collect();
            values.sort();
            if values.windows(2).any(|w| w[0] == w[1]) {
                return err(format!("option values of {} are not unique", p.id));
            }
        }
        let Some(target) = self.product(&self.task.target_id) else {
            return err("target_id not in catalog".into());
        };
        for req in &self.task.required_options {
            let ok = target
                .options
                .iter()
                .any(|g| g.name == req.name && g.values.contains(&req.value));
            if !ok {
                return err(format!("required option {}={} not offered by target", req.name, req.value));
            }
        }
        if self.task.instruction != self.expected_instruction().render() {
            return err("instruction does not match task fields".into());
        }
        Ok(())
    }

    pub fn expected_instruction(&self) -> ShopInstruction {
        let title = self
            .product(&self.task.target_id)
            .map(|p| p.title.clone())
            .unwrap_or_default();
        ShopInstruction {
            title,
            options: self.task.required_options.clone(),
            price_cap_cents: self.task.price_cap_cents,
        }
    }

    pub fn product(&self, id: &str) -> Option<&Product> {
        self.catalog.iter().find(|p| p.id.eq_ignore_ascii_case(id))
    }

    pub fn target_index(&self) -> usize {
        self.catalog
            .iter()
            .position(|p| p.id.eq_ignore_ascii_case(&self.task.target_id))
            .expect("validated spec")
    }

    /// The shortest successful action script: search, open target, pick options, buy.
    pub fn optimal_script(&self) -> Vec<Action> {
        let target = &self.catalog[self.target_index()];
        let mut out = vec![
            Action::new(format!("search[{}]", target.title.to_ascii_lowercase())).expect("valid"),
            Action::new(format!("click[{}]", target.id.to_ascii_lowercase())).expect("valid"),
        ];
        for req in &self.task.required_options {
            out.push(Action::new(format!("click[{}]", req.value)).expect("valid"));
        }
        out.push(Action::new(BUY_NOW).expect("valid"));
        out
    }
}

/// Knobs a corrupted world model flips on a copy of the real dynamics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ShopDynamics {
    pub hide_target_in_results: bool,
    pub accept_any_purchase: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum ShopPage {
    Search,
    Results(Vec<usize>),
    Item {
        product: usize,
        selected: Vec<RequiredOption>,
        results: Vec<usize>,
    },
    Done,
}

#[derive(Debug, Clone)]
pub struct ShopEnv {
    spec: ToyShopSpec,
    dynamics: ShopDynamics,
    max_steps: usize,
    page: Option<ShopPage>,
}

impl ShopEnv {
    pub fn new(spec: ToyShopSpec) -> Result<Self, SpecError> {
        spec.validate()?;
        Ok(Self {
            spec,
            dynamics: ShopDynamics::default(),
            max_steps: DEFAULT_MAX_STEPS,
            page: None,
        })
    }

    pub fn with_dynamics(mut self, dynamics: ShopDynamics) -> Self {
        self.dynamics = dynamics;
        self
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn spec(&self) -> &ToyShopSpec {
        &self.spec
    }

    fn search(&self, query: &str) -> Vec<usize> {
        let target = self.spec.target_index();
        let mut scored: Vec<(usize, usize)> = self
            .spec
            .catalog
            .iter()
            .enumerate()
            .filter(|(i, _)| !(self.dynamics.hide_target_in_results && *i == target))
            .map(|(i, p)| (i, keyword_overlap(query, &p.title)))
            .filter(|(_, s)| *s > 0)
            .collect();
        // stable: ties keep catalog order
        scored.sort_by_key(|s| std::cmp::Reverse(s.1));
        scored.into_iter().take(RESULTS_PAGE_SIZE).map(|(i, _)| i).collect()
    }

    fn item_of(&self, idx: usize) -> Item {
        let p = &self.spec.catalog[idx];
        Item::new(p.id.clone(), p.title.clone(), format_cents(p.price_cents))
    }

    fn render(&self, page: &ShopPage) -> PageState {
        let instruction = self.spec.task.instruction.clone();
        match page {
            ShopPage::Search => PageState {
                instruction,
                page_type: PageType::Search,
                items: vec![],
                details: vec![],
                clickables: vec![SEARCH_PLACEHOLDER.to_string()],
                target_item_id: None,
            },
            ShopPage::Results(idxs) => {
                let items: Vec<Item> = idxs.iter().map(|&i| self.item_of(i)).collect();
                let mut clickables = vec![BACK_TO_SEARCH.to_string()];
                clickables.extend(items.iter().map(Item::click));
                PageState {
                    instruction,
                    page_type: PageType::SearchResults,
                    items,
                    details: vec![],
                    clickables,
                    target_item_id: None,
                }
            }
            ShopPage::Item { product, selected, .. } => {
                let p = &self.spec.catalog[*product];
                let mut details: Vec<String> = p
                    .options
                    .iter()
                    .map(|g| format!("Option {}: {}", g.name, g.values.join(", ")))
                    .collect();
                details.push(render_selected(selected));
                let mut clickables = vec![PREV.to_string()];
                clickables.extend(
                    p.options
                        .iter()
                        .flat_map(|g| g.values.iter().map(|v| format!("click[{v}]"))),
                );
                clickables.push(BUY_NOW.to_string());
                PageState {
                    instruction,
                    page_type: PageType::ItemDetail,
                    items: vec![self.item_of(*product)],
                    details,
                    clickables,
                    target_item_id: None,
                }
            }
            ShopPage::Done => unreachable!("done pages are rendered at purchase time"),
        }
    }

    fn purchase(&self, product: usize, selected: &[RequiredOption]) -> (PageState, bool, f64) {
        let p = &self.spec.catalog[product];
        let is_target = p.id.eq_ignore_ascii_case(&self.spec.task.target_id);
        let options_ok = self
            .spec
            .task
            .required_options
            .iter()
            .all(|r| selected.contains(r));
        let price_ok = p.price_cents <= self.spec.task.price_cap_cents;
        let mut reward = [is_target, options_ok, price_ok].iter().filter(|b| **b).count() as f64 / 3.0;
        let mut success = is_target && options_ok && price_ok;
        if self.dynamics.accept_any_purchase {
            success = true;
            reward = 1.0;
        }
        let page = PageState {
            instruction: self.spec.task.instruction.clone(),
            page_type: PageType::Done,
            items: vec![self.item_of(product)],
            details: vec![
                render_selected(selected),
                format!("Outcome: {}", if success { "success" } else { "failure" }),
                format!("Reward: {reward:.2}"),
            ],
            clickables: vec![],
            target_item_id: None,
        };
        (page, success, reward)
    }

    fn invalid(&self) -> EnvStep {
        EnvStep {
            obs: Observation::new(INVALID_ACTION).expect("non-empty"),
            done: false,
            success: false,
            reward: 0.0,
        }
    }
}

fn render_selected(selected: &[RequiredOption]) -> String {
    if selected.is_empty() {
        "Selected: none".to_string()
    } else {
        let parts: Vec<String> = selected.iter().map(|o| format!("{}={}", o.name, o.value)).collect();
        format!("Selected: {}", parts.join(", "))
    }
}

fn bracket_arg<'a>(action: &'a str, verb: &str) -> Option<&'a str> {
    action.strip_prefix(verb)?.strip_prefix('[')?.strip_suffix(']')
}

impl Environment for ShopEnv {
    fn reset(&mut self, task_id: &str) -> Result<Observation, EnvError> {
        if task_id != self.spec.task_id {
            return Err(EnvError::UnknownTask(task_id.to_string()));
        }
        self.page = Some(ShopPage::Search);
        Ok(Observation::new(self.render(&ShopPage::Search).render()).expect("non-empty"))
    }

    fn step(&mut self, action: &Action) -> Result<EnvStep, EnvError> {
        let page = self.page.clone().ok_or(EnvError::NotReset)?;
        let a = action.as_str();
        let next = match (&page, a) {
            (ShopPage::Done, _) => return Err(EnvError::AfterDone),
            (ShopPage::Search, _) => match bracket_arg(a, "search") {
                Some(q) if !q.trim().is_empty() => ShopPage::Results(self.search(q)),
                _ => return Ok(self.invalid()),
            },
            (ShopPage::Results(_), BACK_TO_SEARCH) => ShopPage::Search,
            (ShopPage::Results(idxs), _) => {
                let hit = bracket_arg(a, "click").and_then(|id| {
                    idxs.iter()
                        .copied()
                        .find(|&i| self.spec.catalog[i].id.eq_ignore_ascii_case(id))
                });
                match hit {
                    Some(product) => ShopPage::Item {
                        product,
                        selected: vec![],
                        results: idxs.clone(),
                    },
                    None => return Ok(self.invalid()),
                }
            }
            (ShopPage::Item { results, .. }, PREV) => ShopPage::Results(results.clone()),
            (ShopPage::Item { product, selected, .. }, BUY_NOW) => {
                let (done_page, success, reward) = self.purchase(*product, selected);
                self.page = Some(ShopPage::Done);
                return Ok(EnvStep {
                    obs: Observation::new(done_page.render()).expect("non-empty"),
                    done: true,
                    success,
                    reward,
                });
            }
            (ShopPage::Item { product, selected, results }, _) => {
                let value = bracket_arg(a, "click");
                let group = value.and_then(|v| {
                    self.spec.catalog[*product]
                        .options
                        .iter()
                        .find(|g| g.values.iter().any(|x| x == v))
                });
                match (value, group) {
                    (Some(v), Some(g)) => {
                        let mut selected = selected.clone();
                        selected.retain(|o| o.name != g.name);
                        selected.push(RequiredOption {
                            name: g.name.clone(),
                            value: v.to_string(),
                        });
                        // keep selections in the product's option order
                        let order = &self.spec.catalog[*product].options;
                        selected.sort_by_key(|o| order.iter().position(|g| g.name == o.name));
                        ShopPage::Item {
                            product: *product,
                            selected,
                            results: results.clone(),
                        }
                    }
                    _ => return Ok(self.invalid()),
                }
            }
        };
        let obs = Observation::new(self.render(&next).render()).expect("non-empty");
        self.page = Some(next);
        Ok(EnvStep {
            obs,
            done: false,
            success: false,
            reward: 0.0,
        })
    }

    fn max_steps(&self) -> usize {
        self.max_steps
    }

    fn domain(&self) -> Domain {
        Domain::Shop
    }

    fn task_id(&self) -> &str {
        &self.spec.task_id
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn spec() -> ToyShopSpec {
        let catalog = vec![
            Product {
                id: "B0TARGET01".into(),
                title: "slim fit henley".into(),
                price_cents: 2350,
                options: vec![
                    OptionGroup {
                        name: "color".into(),
                        values: vec!["blue".into(), "red".into()],
                    },
                    OptionGroup {
                        name: "size".into(),
                        values: vec!["small".into(), "medium".into()],
                    },
                ],
            },
            Product {
                id: "B0OTHER002".into(),
                title: "classic henley long sleeve cotton pack of two".into(),
                price_cents: 1999,
                options: vec![],
            },
            Product {
                id: "B0OTHER003".into(),
                title: "ceramic coffee mug".into(),
                price_cents: 899,
                options: vec![],
            },
        ];
        let mut s = ToyShopSpec {
            task_id: "shop_test".into(),
            catalog,
            task: ShopTask {
                instruction: String::new(),
                target_id: "B0TARGET01".into(),
                required_options: vec![
                    RequiredOption {
                        name: "color".into(),
                        value: "blue".into(),
                    },
                    RequiredOption {
                        name: "size".into(),
                        value: "medium".into(),
                    },
                ],
                price_cap_cents: 5000,
            },
        };
        s.task.instruction = s.expected_instruction().render();
        s
    }

    fn act(s: &str) -> Action {
        Action::new(s).unwrap()
    }

    #[test]
    fn instruction_roundtrip() {
        let s = spec();
        assert_eq!(
            s.task.instruction,
            "Find me slim fit henley with color: blue, size: medium, price lower than $50.00"
        );
        assert_eq!(ShopInstruction::parse(&s.task.instruction), Some(s.expected_instruction()));
    }

    #[test]
    fn optimal_script_succeeds() {
        let s = spec();
        let mut env = ShopEnv::new(s.clone()).unwrap();
        env.reset("shop_test").unwrap();
        let script = s.optimal_script();
        assert_eq!(script.len(), 5);
        let mut last = None;
        for a in &script {
            last = Some(env.step(a).unwrap());
        }
        let last = last.unwrap();
        assert!(last.done && last.success);
        assert_eq!(last.reward, 1.0);
        assert!(matches!(env.step(&act("click[buy now]")), Err(EnvError::AfterDone)));
    }

    #[test]
    fn buy_without_option_fails() {
        let mut env = ShopEnv::new(spec()).unwrap();
        env.reset("shop_test").unwrap();
        env.step(&act("search[slim fit henley]")).unwrap();
        env.step(&act("click[b0target01]")).unwrap();
        env.step(&act("click[blue]")).unwrap();
        let out = env.step(&act("click[buy now]")).unwrap();
        assert!(out.done);
        assert!(!out.success);
        assert!((out.reward - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn search_ranks_by_overlap_then_catalog_order() {
        let mut env = ShopEnv::new(spec()).unwrap();
        env.reset("shop_test").unwrap();
        let out = env.step(&act("search[henley]")).unwrap();
        let page = out.obs.page().unwrap();
        let ids: Vec<_> = page.items.iter().map(|i| i.item_id.as_str()).collect();
        assert_eq!(ids, ["B0TARGET01", "B0OTHER002"]);
        let out = env.step(&act("click[back to search]")).unwrap();
        assert_eq!(out.obs.page().unwrap().page_type, PageType::Search);
        let out = env.step(&act("search[cotton henley pack]")).unwrap();
        let ids: Vec<_> = out.obs.page().unwrap().items.iter().map(|i| i.item_id.clone()).collect();
        assert_eq!(ids, ["B0OTHER002", "B0TARGET01"]);
    }

    #[test]
    fn invalid_action_is_noop() {
        let mut env = ShopEnv::new(spec()).unwrap();
        env.reset("shop_test").unwrap();
        let out = env.step(&act("click[b0target01]")).unwrap();
        assert_eq!(out.obs.text(), INVALID_ACTION);
        assert!(!out.done);
        let out = env.step(&act("search[henley]")).unwrap();
        assert_eq!(out.obs.page().unwrap().page_type, PageType::SearchResults);
    }

    #[test]
    fn hidden_target_and_lenient_purchase() {
        let dynamics = ShopDynamics {
            hide_target_in_results: true,
            accept_any_purchase: true,
        };
        let mut env = ShopEnv::new(spec()).unwrap().with_dynamics(dynamics);
        env.reset("shop_test").unwrap();
        let out = env.step(&act("search[slim fit henley]")).unwrap();
        assert!(out.obs.page().unwrap().item("B0TARGET01").is_none());
        env.step(&act("click[b0other002]")).unwrap();
        let out = env.step(&act("click[buy now]")).unwrap();
        assert!(out.done && out.success);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = spec();
        s.task.target_id = "nope".into();
        assert!(s.validate().is_err());
        let mut s = spec();
        s.task.instruction = "Find me anything".into();
        assert!(s.validate().is_err());
        let mut s = spec();
        s.catalog[1].title = "henley with pocket".into();
        assert!(s.validate().is_err());
    }
}
