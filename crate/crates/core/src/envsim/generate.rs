//! Seeded generators for toy task specs.
//!
//! Shop targets get short titles and distractors long ones, so that removing a
//! distractor line costs more tokens than removing the target line.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adventure::{Connection, Direction, Door, Location, Object, ObjectKind, Room, Subgoal, ToyAdventureSpec};
use super::shop::{OptionGroup, Product, RequiredOption, ShopTask, ToyShopSpec};
use super::TaskSpec;
use crate::model::Domain;

const NOUNS: &[&str] = &[
    "henley shirt",
    "running shoes",
    "rain jacket",
    "coffee mug",
    "desk lamp",
    "travel backpack",
    "water bottle",
    "wool socks",
    "yoga mat",
    "phone case",
    "throw pillow",
    "wall clock",
];
const ADJECTIVES: &[&str] = &[
    "slim fit",
    "lightweight",
    "waterproof",
    "classic",
    "ergonomic",
    "vintage",
    "compact",
    "insulated",
    "organic cotton",
    "heavy duty",
];
const FILLERS: &[&str] = &[
    "premium quality",
    "for men and women",
    "pack of two",
    "machine washable",
    "limited edition",
    "easy care",
    "all season",
    "gift box included",
    "extra durable",
    "everyday use",
];
const COLORS: &[&str] = &["black", "white", "blue", "red", "green", "grey", "navy"];
const SIZES: &[&str] = &["small", "medium", "large", "x-large"];
const ID_CHARS: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

fn rng_for(domain: Domain, seed: u64, index: usize) -> ChaCha8Rng {
    let salt = match domain {
        Domain::Shop => 0x5348_4f50,
        Domain::Adventure => 0x4144_5654,
    };
    let mixed = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((index as u64) << 20)
        .wrapping_add(salt);
    ChaCha8Rng::seed_from_u64(mixed)
}

fn product_id(rng: &mut ChaCha8Rng) -> String {
    let tail: String = (0..8)
        .map(|_| *ID_CHARS.choose(rng).expect("non-empty") as char)
        .collect();
    format!("B0{tail}")
}

fn option_groups(rng: &mut ChaCha8Rng) -> Vec<OptionGroup> {
    let mut groups = Vec::new();
    for (name, pool, p) in [("color", COLORS, 0.8), ("size", SIZES, 0.6)] {
        if rng.random_bool(p) {
            let k = rng.random_range(2..=3);
            let mut values: Vec<String> = pool.choose_multiple(rng, k).map(|s| s.to_string()).collect();
            values.sort();
            groups.push(OptionGroup {
                name: name.to_string(),
                values,
            });
        }
    }
    groups
}

fn long_title(rng: &mut ChaCha8Rng, noun: &str, avoid_adj: &str) -> String {
    let adj = loop {
        let a = *ADJECTIVES.choose(rng).expect("non-empty");
        if a != avoid_adj {
            break a;
        }
    };
    let fillers: Vec<&str> = FILLERS.choose_multiple(rng, 2).copied().collect();
    format!("{adj} {noun} {} {}", fillers[0], fillers[1])
}

/// One shop task: a short-titled target, three long same-noun distractors and
/// one unrelated long-titled product.
pub fn shop_spec(seed: u64, index: usize) -> ToyShopSpec {
    let mut rng = rng_for(Domain::Shop, seed, index);
    let noun = *NOUNS.choose(&mut rng).expect("non-empty");
    let other_noun = loop {
        let n = *NOUNS.choose(&mut rng).expect("non-empty");
        if n != noun {
            break n;
        }
    };
    let adj = *ADJECTIVES.choose(&mut rng).expect("non-empty");
    let target_price = rng.random_range(500..8000u32);
    let target = Product {
        id: product_id(&mut rng),
        title: format!("{adj} {noun}"),
        price_cents: target_price,
        options: option_groups(&mut rng),
    };

    let mut catalog = vec![target.clone()];
    while catalog.len() < 5 {
        let n = if catalog.len() == 4 { other_noun } else { noun };
        let title = long_title(&mut rng, n, adj);
        let id = product_id(&mut rng);
        if catalog.iter().any(|p| p.title == title || p.id == id) {
            continue;
        }
        catalog.push(Product {
            id,
            title,
            price_cents: rng.random_range(500..9000u32),
            options: option_groups(&mut rng),
        });
    }
    catalog.shuffle(&mut rng);

    let required_options: Vec<RequiredOption> = target
        .options
        .iter()
        .map(|g| RequiredOption {
            name: g.name.clone(),
            value: g.values.choose(&mut rng).expect("non-empty").clone(),
        })
        .collect();
    let margin = rng.random_range(0..2000u32);
    let price_cap_cents = (target_price + margin).div_ceil(100) * 100;
    let mut spec = ToyShopSpec {
        task_id: format!("shop_{index:04}"),
        catalog,
        task: ShopTask {
            instruction: String::new(),
            target_id: target.id,
            required_options,
            price_cap_cents,
        },
    };
    spec.task.instruction = spec.expected_instruction().render();
    spec
}

const START_ROOMS: &[&str] = &["Bedroom", "Study", "Attic", "Cellar", "Workshop", "Library"];
const GOAL_ROOMS: &[&str] = &["Kitchen", "Pantry", "Scullery", "Galley"];
const EXTRA_ROOMS: &[&str] = &["Living Room", "Garden", "Hallway", "Porch", "Bathroom"];
const KEY_BOXES: &[&str] = &["antique trunk", "wooden chest", "metal box", "old wardrobe", "toolbox"];
const KEYS: &[&str] = &["old key", "brass key", "iron key", "silver key", "rusty key"];
const DOORS: &[&str] = &["wooden door", "oak door", "iron gate", "red door", "glass door"];
const FOOD_BOXES: &[&str] = &["refrigerator", "cupboard", "cooler", "breadbox", "cabinet"];
const FOODS: &[&str] = &["lettuce", "apple", "carrot", "loaf of bread", "tomato", "cheese wedge"];
const SUPPORTERS: &[&str] = &["stove", "counter", "table", "workbench"];
const LOUNGE: &[&str] = &["sofa", "bench", "armchair"];
const CLUTTER: &[&str] = &["sock", "book", "candle", "pencil"];

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool.choose(rng).expect("non-empty")
}

/// One adventure task: fetch a food item from a closed container behind a
/// (usually locked) door and place it on a supporter.
pub fn adventure_spec(seed: u64, index: usize) -> ToyAdventureSpec {
    let mut rng = rng_for(Domain::Adventure, seed, index);
    let start = pick(&mut rng, START_ROOMS);
    let goal = pick(&mut rng, GOAL_ROOMS);
    let extra = pick(&mut rng, EXTRA_ROOMS);
    let main_dir = *[Direction::North, Direction::South, Direction::East, Direction::West]
        .choose(&mut rng)
        .expect("non-empty");
    let extra_dir = loop {
        let d = *[Direction::North, Direction::South, Direction::East, Direction::West]
            .choose(&mut rng)
            .expect("non-empty");
        if d != main_dir.opposite() {
            break d;
        }
    };
    let locked = rng.random_bool(0.7);
    let key_box = pick(&mut rng, KEY_BOXES);
    let key = pick(&mut rng, KEYS);
    let door = pick(&mut rng, DOORS);
    let food_box = pick(&mut rng, FOOD_BOXES);
    let food = pick(&mut rng, FOODS);
    let other_food = loop {
        let f = pick(&mut rng, FOODS);
        if f != food {
            break f;
        }
    };
    let supporter = pick(&mut rng, SUPPORTERS);
    let lounge = pick(&mut rng, LOUNGE);
    let clutter = pick(&mut rng, CLUTTER);

    let room = |name: &str, description: &str| Room {
        name: name.into(),
        description: description.into(),
    };
    let obj = |name: &str, kind, location: Location| Object {
        name: name.into(),
        kind,
        location,
    };
    let mut objects = vec![];
    let mut plan = vec![];
    if locked {
        objects.push(obj(key_box, ObjectKind::Container { open: false }, Location::Room(start.into())));
        objects.push(obj(key, ObjectKind::Item, Location::In(key_box.into())));
        plan.push(format!("open {key_box}"));
        plan.push(format!("take {key}"));
        plan.push(format!("unlock {door}"));
    }
    objects.push(obj(clutter, ObjectKind::Item, Location::Room(start.into())));
    objects.push(obj(food_box, ObjectKind::Container { open: false }, Location::Room(goal.into())));
    let mut inside = vec![food, other_food];
    inside.shuffle(&mut rng);
    for f in inside {
        objects.push(obj(f, ObjectKind::Item, Location::In(food_box.into())));
    }
    objects.push(obj(supporter, ObjectKind::Supporter, Location::Room(goal.into())));
    objects.push(obj(lounge, ObjectKind::Supporter, Location::Room(extra.into())));
    plan.push(format!("open {door}"));
    plan.push(format!("go {}", main_dir.as_str()));
    plan.push(format!("open {food_box}"));
    plan.push(format!("take {food}"));
    plan.push(format!("put {food} on {supporter}"));

    ToyAdventureSpec {
        task_id: format!("adventure_{index:04}"),
        start_room: start.into(),
        rooms: vec![
            room(start, "A quiet room with dusty corners."),
            room(goal, "A small room that smells of cooking."),
            room(extra, "A bright space with a view outside."),
        ],
        connections: vec![
            Connection {
                from: start.into(),
                direction: main_dir,
                to: goal.into(),
                door: Some(door.into()),
            },
            Connection {
                from: goal.into(),
                direction: extra_dir,
                to: extra.into(),
                door: None,
            },
        ],
        doors: vec![Door {
            name: door.into(),
            locked,
            open: false,
            key: locked.then(|| key.to_string()),
        }],
        objects,
        subgoals: vec![
            Subgoal::Reach { room: goal.into() },
            Subgoal::Hold { object: food.into() },
            Subgoal::Place {
                object: food.into(),
                on: supporter.into(),
            },
        ],
        plan,
    }
}

/// `n` seeded specs for one domain, in index order.
pub fn generate(domain: Domain, n: usize, seed: u64) -> Vec<TaskSpec> {
    (0..n)
        .map(|i| match domain {
            Domain::Shop => TaskSpec::Shop(shop_spec(seed, i)),
            Domain::Adventure => TaskSpec::Adventure(adventure_spec(seed, i)),
        })
        .collect()
}
