//! Structured shop pages and the line grammar they render to.
//!
//! ```text
//! page    := header NL instr NL item* detail* actions
//! header  := "WebShop [" page_type "]"
//! instr   := "Instruction: " TEXT
//! item    := "[" ID "] " TITLE " | " PRICE NL
//! detail  := TEXT NL            (any line that is not an item, header or actions line)
//! actions := "Available actions: " ( "none" | ACTION ( "; " ACTION )* )
//! ```
//!
//! `render(parse(text)) == text` for every text that parses.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const HEADER_PREFIX: &str = "WebShop [";
const INSTRUCTION_PREFIX: &str = "Instruction: ";
const ACTIONS_PREFIX: &str = "Available actions: ";

#[derive(Debug, Error, PartialEq)]
pub enum PageParseError {
    #[error("missing or malformed header line")]
    Header,
    #[error("unknown page type {0:?}")]
    PageType(String),
    #[error("missing instruction line")]
    Instruction,
    #[error("missing available-actions line")]
    Actions,
    #[error("malformed item line {0:?}")]
    Item(String),
    #[error("item line after detail lines: {0:?}")]
    ItemOrder(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PageType {
    Search,
    SearchResults,
    ItemDetail,
    Done,
}

impl PageType {
    pub fn as_str(&self) -> &'static str {
        match self {
            PageType::Search => "search",
            PageType::SearchResults => "search_results",
            PageType::ItemDetail => "item_detail",
            PageType::Done => "done",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "search" => PageType::Search,
            "search_results" => PageType::SearchResults,
            "item_detail" => PageType::ItemDetail,
            "done" => PageType::Done,
            _ => return None,
        })
    }
}

impl fmt::Display for PageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub item_id: String,
    pub title: String,
    pub price: String,
}

impl Item {
    pub fn new(item_id: impl Into<String>, title: impl Into<String>, price: impl Into<String>) -> Self {
        Self {
            item_id: item_id.into(),
            title: title.into(),
            price: price.into(),
        }
    }

    /// The click action that opens this item.
    pub fn click(&self) -> String {
        format!("click[{}]", self.item_id.to_ascii_lowercase())
    }

    fn render(&self) -> String {
        format!("[{}] {} | {}", self.item_id, self.title, self.price)
    }

    fn parse(line: &str) -> Option<Self> {
        let rest = line.strip_prefix('[')?;
        let (id, rest) = rest.split_once("] ")?;
        let (title, price) = rest.rsplit_once(" | ")?;
        if id.is_empty() || title.is_empty() || price.is_empty() || id.contains(' ') {
            return None;
        }
        Some(Item::new(id, title, price))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageState {
    pub instruction: String,
    pub page_type: PageType,
    pub items: Vec<Item>,
    /// Non-item body lines (options, selections, outcome), kept verbatim.
    pub details: Vec<String>,
    pub clickables: Vec<String>,
    /// Ground-truth decision-critical item. Never rendered into text.
    #[serde(default)]
    pub target_item_id: Option<String>,
}

impl PageState {
    pub fn parse(text: &str) -> Result<Self, PageParseError> {
        let mut lines = text.split('\n');
        let header = lines.next().ok_or(PageParseError::Header)?;
        let page_type = header
            .strip_prefix(HEADER_PREFIX)
            .and_then(|r| r.strip_suffix(']'))
            .ok_or(PageParseError::Header)?;
        let page_type =
            PageType::parse(page_type).ok_or_else(|| PageParseError::PageType(page_type.to_string()))?;
        let instruction = lines
            .next()
            .and_then(|l| l.strip_prefix(INSTRUCTION_PREFIX))
            .ok_or(PageParseError::Instruction)?
            .to_string();

        let body: Vec<&str> = lines.collect();
        let (actions_line, body) = body.split_last().ok_or(PageParseError::Actions)?;
        let actions = actions_line
            .strip_prefix(ACTIONS_PREFIX)
            .ok_or(PageParseError::Actions)?;
        let clickables = if actions == "none" {
            Vec::new()
        } else {
            actions.split("; ").map(str::to_string).collect()
        };

        let mut items = Vec::new();
        let mut details = Vec::new();
        for line in body {
            if line.starts_with('[') {
                let item = Item::parse(line).ok_or_else(|| PageParseError::Item(line.to_string()))?;
                if !details.is_empty() {
                    return Err(PageParseError::ItemOrder(line.to_string()));
                }
                items.push(item);
            } else if line.starts_with(HEADER_PREFIX) || line.starts_with(ACTIONS_PREFIX) {
                return Err(PageParseError::Header);
            } else {
                details.push(line.to_string());
            }
        }
        Ok(PageState {
            instruction,
            page_type,
            items,
            details,
            clickables,
            target_item_id: None,
        })
    }

    pub fn render(&self) -> String {
        let mut out = format!("{HEADER_PREFIX}{}]\n{INSTRUCTION_PREFIX}{}\n", self.page_type, self.instruction);
        for item in &self.items {
            out.push_str(&item.render());
            out.push('\n');
        }
        for d in &self.details {
            out.push_str(d);
            out.push('\n');
        }
        out.push_str(ACTIONS_PREFIX);
        if self.clickables.is_empty() {
            out.push_str("none");
        } else {
            out.push_str(&self.clickables.join("; "));
        }
        out
    }

    pub fn item(&self, id: &str) -> Option<&Item> {
        self.items.iter().find(|i| i.item_id.eq_ignore_ascii_case(id))
    }

    pub fn has_clickable(&self, action: &str) -> bool {
        self.clickables.iter().any(|c| c == action)
    }

    /// Sets `target_item_id` when `action` is a click on one of this page's items.
    pub fn with_target_from_action(mut self, action: &str) -> Self {
        self.target_item_id = action
            .strip_prefix("click[")
            .and_then(|r| r.strip_suffix(']'))
            .and_then(|id| self.item(id).map(|i| i.item_id.clone()));
        self
    }

    /// Item ids are unique and, when set, the target is on the page.
    pub fn validate(&self, require_target: bool) -> bool {
        let mut ids: Vec<_> = self.items.iter().map(|i| i.item_id.to_ascii_lowercase()).collect();
        ids.sort();
        let unique = ids.windows(2).all(|w| w[0] != w[1]);
        let target_ok = match &self.target_item_id {
            Some(t) => !require_target || self.item(t).is_some(),
            None => true,
        };
        unique && target_ok
    }
}

/// Canonical `$X.YZ` form of a price string, or `None` when it is not a price.
pub fn normalize_price(raw: &str) -> Option<String> {
    let s = raw.trim().trim_start_matches('$');
    let (whole, frac) = match s.split_once('.') {
        Some((w, f)) => (w, f),
        None => (s, ""),
    };
    if whole.is_empty() || !whole.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 2 {
        return None;
    }
    if !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let whole: u64 = whole.parse().ok()?;
    let cents: u64 = format!("{frac:0<2}").parse().ok()?;
    Some(format!("${whole}.{cents:02}"))
}

pub fn format_cents(cents: u32) -> String {
    format!("${}.{:02}", cents / 100, cents % 100)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> PageState {
        PageState {
            instruction: "Find me red shoe with price lower than $40.00".into(),
            page_type: PageType::SearchResults,
            items: vec![
                Item::new("B0AAAAAAAA", "red shoe", "$12.00"),
                Item::new("B0BBBBBBBB", "blue running shoe for trail", "$30.50"),
            ],
            details: vec![],
            clickables: vec!["click[back to search]".into(), "click[b0aaaaaaaa]".into(), "click[b0bbbbbbbb]".into()],
            target_item_id: None,
        }
    }

    #[test]
    fn render_parse_roundtrip() {
        let p = sample();
        let text = p.render();
        assert_eq!(PageState::parse(&text).unwrap(), p);
        assert!(text.starts_with("WebShop [search_results]\nInstruction: "));
    }

    #[test]
    fn rejects_non_pages() {
        assert_eq!(PageState::parse("Invalid action."), Err(PageParseError::Header));
        assert!(PageState::parse("WebShop [nope]\nInstruction: x\nAvailable actions: none").is_err());
        assert!(PageState::parse("WebShop [done]\nInstruction: x").is_err());
    }

    #[test]
    fn item_after_detail_rejected() {
        let text = "WebShop [item_detail]\nInstruction: x\nSelected: none\n[B0A] t | $1.00\nAvailable actions: none";
        assert!(matches!(PageState::parse(text), Err(PageParseError::ItemOrder(_))));
    }

    #[test]
    fn target_from_click() {
        let p = sample().with_target_from_action("click[b0aaaaaaaa]");
        assert_eq!(p.target_item_id.as_deref(), Some("B0AAAAAAAA"));
        assert!(p.validate(true));
        let none = sample().with_target_from_action("click[buy now]");
        assert_eq!(none.target_item_id, None);
    }

    #[test]
    fn prices() {
        assert_eq!(normalize_price("$5").as_deref(), Some("$5.00"));
        assert_eq!(normalize_price("12.5").as_deref(), Some("$12.50"));
        assert_eq!(normalize_price("$012.05").as_deref(), Some("$12.05"));
        assert_eq!(normalize_price("$1.234"), None);
        assert_eq!(normalize_price("abc"), None);
        assert_eq!(format_cents(1234), "$12.34");
    }

    proptest! {
        #[test]
        fn roundtrip_any_page(
            titles in prop::collection::vec("[a-z]{1,8}( [a-z]{1,8}){0,5}", 0..6),
            details in prop::collection::vec("[A-Z][a-z]{0,6}: [a-z ]{0,10}", 0..3),
            cents in prop::collection::vec(0u32..100_000, 6),
        ) {
            let items: Vec<Item> = titles.iter().enumerate()
                .map(|(i, t)| Item::new(format!("B0{i:08}"), t.clone(), format_cents(cents[i])))
                .collect();
            let page = PageState {
                instruction: "Find me things".into(),
                page_type: PageType::SearchResults,
                clickables: items.iter().map(Item::click).collect(),
                items,
                details,
                target_item_id: None,
            };
            let parsed = PageState::parse(&page.render()).unwrap();
            prop_assert_eq!(&parsed, &page);
            prop_assert_eq!(parsed.render(), page.render());
        }
    }
}
