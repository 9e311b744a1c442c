//! Miniature interactive-fiction engine: rooms, doors, containers, and an
//! ordered list of subgoals that are latched as they are reached.

use serde::{Deserialize, Serialize};

use super::{EnvError, EnvStep, Environment, SpecError, DEFAULT_MAX_STEPS};
use crate::model::{Action, Domain, Observation};

pub const UNKNOWN_VERB: &str = "That's not a verb I recognise.";
pub const NO_EXIT: &str = "You can't go that way.";
pub const NOT_VISIBLE: &str = "You can't see any such thing.";
pub const TASK_PREFIX: &str = "Your task: ";
pub const ACTIONS_PREFIX: &str = "AVAILABLE ACTIONS: ";
pub const THE_END: &str = "*** The End ***";

const REJECTIONS: &[&str] = &[
    UNKNOWN_VERB,
    NO_EXIT,
    NOT_VISIBLE,
    "You can't take that.",
    "You already have that.",
    "That's already open.",
    "That's not something you can",
    "You don't have the right key.",
    "You aren't carrying that.",
    "You can't put things there.",
];

/// True when the first line of an observation reports a refused command.
pub fn is_rejection(obs: &str) -> bool {
    let first = obs.lines().next().unwrap_or("");
    REJECTIONS.iter().any(|r| first.starts_with(r))
        || (first.starts_with("The ") && (first.ends_with(" is locked.") || first.ends_with(" is closed.")))
        || (first.starts_with("The ") && first.ends_with(" is already unlocked."))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    North,
    South,
    East,
    West,
    Up,
    Down,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::North,
        Direction::South,
        Direction::East,
        Direction::West,
        Direction::Up,
        Direction::Down,
    ];

    pub fn opposite(self) -> Self {
        match self {
            Direction::North => Direction::South,
            Direction::South => Direction::North,
            Direction::East => Direction::West,
            Direction::West => Direction::East,
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::North => "north",
            Direction::South => "south",
            Direction::East => "east",
            Direction::West => "west",
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Direction::ALL.into_iter().find(|d| d.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Room {
    pub name: String,
    pub description: String,
}

/// An exit from `from` in `direction`, traversable both ways.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Connection {
    pub from: String,
    pub direction: Direction,
    pub to: String,
    #[serde(default)]
    pub door: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Door {
    pub name: String,
    pub locked: bool,
    pub open: bool,
    #[serde(default)]
    pub key: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ObjectKind {
    Item,
    Container { open: bool },
    Supporter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Room(String),
    In(String),
    On(String),
    Inventory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Object {
    pub name: String,
    pub kind: ObjectKind,
    pub location: Location,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Subgoal {
    Reach { room: String },
    Hold { object: String },
    Place { object: String, on: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyAdventureSpec {
    pub task_id: String,
    pub start_room: String,
    pub rooms: Vec<Room>,
    pub connections: Vec<Connection>,
    #[serde(default)]
    pub doors: Vec<Door>,
    pub objects: Vec<Object>,
    pub subgoals: Vec<Subgoal>,
    /// A walkthrough shown to the player as the task statement.
    pub plan: Vec<String>,
}

impl ToyAdventureSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        let err = |m: String| Err(SpecError(format!("{}: {m}", self.task_id)));
        let room = |n: &str| self.rooms.iter().any(|r| r.name == n);
        let object = |n: &str| self.objects.iter().find(|o| o.name == n);

        let mut names: Vec<&str> = self.rooms.iter().map(|r| r.name.as_str()).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return err("duplicate room names".into());
        }
        let mut things: Vec<String> = self
            .objects
            .iter()
            .map(|o| o.name.to_ascii_lowercase())
            .chain(self.doors.iter().map(|d| d.name.to_ascii_lowercase()))
            .collect();
        things.sort();
        if things.windows(2).any(|w| w[0] == w[1]) {
            return err("duplicate object or door names".into());
        }
        if !room(&self.start_room) {
            return err(format!("unknown start room {:?}", self.start_room));
        }
        for (i, c) in self.connections.iter().enumerate() {
            if !room(&c.from) || !room(&c.to) || c.from == c.to {
                return err(format!("bad connection {} -> {}", c.from, c.to));
            }
            for other in &self.connections[..i] {
                let clash = |r: &str, d: Direction| {
                    (other.from == r && other.direction == d) || (other.to == r && other.direction.opposite() == d)
                };
                if clash(&c.from, c.direction) || clash(&c.to, c.direction.opposite()) {
                    return err(format!("two exits share a direction near {}", c.from));
                }
            }
            if let Some(d) = &c.door {
                if !self.doors.iter().any(|x| &x.name == d) {
                    return err(format!("unknown door {d:?}"));
                }
            }
        }
        for d in &self.doors {
            let uses = self.connections.iter().filter(|c| c.door.as_ref() == Some(&d.name)).count();
            if uses != 1 {
                return err(format!("door {:?} must sit on exactly one connection", d.name));
            }
            if d.locked && d.open {
                return err(format!("door {:?} cannot be open and locked", d.name));
            }
            if let Some(k) = &d.key {
                if !matches!(object(k), Some(o) if o.kind == ObjectKind::Item) {
                    return err(format!("key {k:?} is not a portable object"));
                }
            } else if d.locked {
                return err(format!("locked door {:?} has no key", d.name));
            }
        }
        for o in &self.objects {
            let ok = match (&o.kind, &o.location) {
                (_, Location::Room(r)) => room(r),
                (ObjectKind::Item, Location::In(c)) => {
                    matches!(object(c), Some(x) if matches!(x.kind, ObjectKind::Container { .. }) && matches!(x.location, Location::Room(_)))
                }
                (ObjectKind::Item, Location::On(s)) => {
                    matches!(object(s), Some(x) if x.kind == ObjectKind::Supporter && matches!(x.location, Location::Room(_)))
                }
                (ObjectKind::Item, Location::Inventory) => true,
                _ => false,
            };
            if !ok {
                return err(format!("object {:?} has an invalid location", o.name));
            }
            if o.name.contains(',') || o.name.contains('.') || o.name.contains(" on ") || o.name.contains(" in ") {
                return err(format!("object name {:?} breaks the command grammar", o.name));
            }
        }
        for g in &self.subgoals {
            let ok = match g {
                Subgoal::Reach { room: r } => room(r),
                Subgoal::Hold { object: o } => matches!(object(o), Some(x) if x.kind == ObjectKind::Item),
                Subgoal::Place { object: o, on } => {
                    matches!(object(o), Some(x) if x.kind == ObjectKind::Item)
                        && matches!(object(on), Some(x) if x.kind != ObjectKind::Item)
                }
            };
            if !ok {
                return err(format!("invalid subgoal {g:?}"));
            }
        }
        if self.subgoals.is_empty() {
            return err("no subgoals".into());
        }
        for step in &self.plan {
            if Action::new(step.clone()).is_err() || step.contains(',') || step.contains('.') {
                return err(format!("plan step {step:?} is not a single command"));
            }
        }
        Ok(())
    }

    pub fn task_statement(&self) -> String {
        format!("{TASK_PREFIX}{}.", self.plan.join(", then "))
    }

    /// Copy of the spec with the exit used by the first `go` step of the plan removed.
    pub fn without_first_plan_exit(&self) -> Self {
        let mut out = self.clone();
        let mut env = match AdventureEnv::new(self.clone()) {
            Ok(e) => e,
            Err(_) => return out,
        };
        let _ = env.reset(&self.task_id);
        for step in &self.plan {
            let Ok(action) = Action::new(step.clone()) else { break };
            if let Some(dir) = step.strip_prefix("go ").and_then(Direction::parse) {
                let room = env.state.as_ref().map(|s| s.room.clone()).unwrap_or_default();
                out.connections.retain(|c| {
                    !((c.from == room && c.direction == dir) || (c.to == room && c.direction.opposite() == dir))
                });
                let removed_doors: Vec<String> = self
                    .connections
                    .iter()
                    .filter(|c| !out.connections.contains(c))
                    .filter_map(|c| c.door.clone())
                    .collect();
                out.doors.retain(|d| !removed_doors.contains(&d.name));
                return out;
            }
            if env.step(&action).is_err() {
                break;
            }
        }
        out
    }
}

/// The two-room key-and-door task: open a trunk, fetch a key, unlock the door,
/// then put a lettuce from the fridge on the stove.
pub fn fig5_spec() -> ToyAdventureSpec {
    let obj = |name: &str, kind, location| Object {
        name: name.into(),
        kind,
        location,
    };
    ToyAdventureSpec {
        task_id: "adventure_key_and_door".into(),
        start_room: "Bedroom".into(),
        rooms: vec![
            Room {
                name: "Bedroom".into(),
                description: "A small bedroom with a creaky floor.".into(),
            },
            Room {
                name: "Kitchen".into(),
                description: "A tidy kitchen that smells of bread.".into(),
            },
            Room {
                name: "Living Room".into(),
                description: "A cosy room with a worn sofa.".into(),
            },
        ],
        connections: vec![
            Connection {
                from: "Bedroom".into(),
                direction: Direction::East,
                to: "Kitchen".into(),
                door: Some("wooden door".into()),
            },
            Connection {
                from: "Kitchen".into(),
                direction: Direction::South,
                to: "Living Room".into(),
                door: None,
            },
        ],
        doors: vec![Door {
            name: "wooden door".into(),
            locked: true,
            open: false,
            key: Some("old key".into()),
        }],
        objects: vec![
            obj("antique trunk", ObjectKind::Container { open: false }, Location::Room("Bedroom".into())),
            obj("old key", ObjectKind::Item, Location::In("antique trunk".into())),
            obj("refrigerator", ObjectKind::Container { open: false }, Location::Room("Kitchen".into())),
            obj("half bag of chips", ObjectKind::Item, Location::In("refrigerator".into())),
            obj("lettuce", ObjectKind::Item, Location::In("refrigerator".into())),
            obj("stove", ObjectKind::Supporter, Location::Room("Kitchen".into())),
            obj("sofa", ObjectKind::Supporter, Location::Room("Living Room".into())),
        ],
        subgoals: vec![
            Subgoal::Reach { room: "Kitchen".into() },
            Subgoal::Hold {
                object: "lettuce".into(),
            },
            Subgoal::Place {
                object: "lettuce".into(),
                on: "stove".into(),
            },
        ],
        plan: [
            "open antique trunk",
            "take old key",
            "unlock wooden door",
            "open wooden door",
            "go east",
            "open refrigerator",
            "take lettuce",
            "put lettuce on stove",
        ]
        .map(String::from)
        .to_vec(),
    }
}

#[derive(Debug, Clone, PartialEq)]
struct DoorState {
    locked: bool,
    open: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct State {
    room: String,
    doors: Vec<DoorState>,
    open: Vec<bool>,
    locations: Vec<Location>,
    achieved: usize,
    done: bool,
}

#[derive(Debug, Clone)]
pub struct AdventureEnv {
    spec: ToyAdventureSpec,
    max_steps: usize,
    state: Option<State>,
}

fn article(name: &str) -> String {
    let vowel = name.chars().next().is_some_and(|c| "aeiouAEIOU".contains(c));
    format!("{} {name}", if vowel { "an" } else { "a" })
}

fn join_list(parts: &[String]) -> String {
    match parts {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

impl AdventureEnv {
    pub fn new(spec: ToyAdventureSpec) -> Result<Self, SpecError> {
        spec.validate()?;
        Ok(Self {
            spec,
            max_steps: DEFAULT_MAX_STEPS,
            state: None,
        })
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn spec(&self) -> &ToyAdventureSpec {
        &self.spec
    }

    /// Current location of every object, in spec order.
    pub fn object_locations(&self) -> Vec<(String, Location)> {
        let Some(st) = &self.state else { return vec![] };
        self.spec
            .objects
            .iter()
            .zip(&st.locations)
            .map(|(o, l)| (o.name.clone(), l.clone()))
            .collect()
    }

    pub fn score(&self) -> usize {
        self.state.as_ref().map_or(0, |s| s.achieved)
    }

    fn obj_index(&self, name: &str) -> Option<usize> {
        self.spec.objects.iter().position(|o| o.name.eq_ignore_ascii_case(name))
    }

    fn door_index(&self, name: &str) -> Option<usize> {
        self.spec.doors.iter().position(|d| d.name.eq_ignore_ascii_case(name))
    }

    fn is_container(&self, i: usize) -> bool {
        matches!(self.spec.objects[i].kind, ObjectKind::Container { .. })
    }

    /// Exits of `room` as (direction, destination, door index).
    fn exits(&self, room: &str) -> Vec<(Direction, String, Option<usize>)> {
        self.spec
            .connections
            .iter()
            .filter_map(|c| {
                let door = c.door.as_deref().and_then(|d| self.door_index(d));
                if c.from == room {
                    Some((c.direction, c.to.clone(), door))
                } else if c.to == room {
                    Some((c.direction.opposite(), c.from.clone(), door))
                } else {
                    None
                }
            })
            .collect()
    }

    fn adjacent_door(&self, st: &State, name: &str) -> Option<usize> {
        let d = self.door_index(name)?;
        self.exits(&st.room).iter().any(|(_, _, x)| *x == Some(d)).then_some(d)
    }

    /// Objects placed directly in the current room.
    fn room_objects<'a>(&'a self, st: &'a State) -> impl Iterator<Item = usize> + 'a {
        (0..self.spec.objects.len()).filter(move |&i| st.locations[i] == Location::Room(st.room.clone()))
    }

    fn contents(&self, st: &State, holder: usize) -> Vec<usize> {
        let name = &self.spec.objects[holder].name;
        (0..self.spec.objects.len())
            .filter(|&i| match &st.locations[i] {
                Location::In(c) | Location::On(c) => c == name,
                _ => false,
            })
            .collect()
    }

    /// Reachable without moving: in the room, on a supporter here, or in an open container here.
    fn visible(&self, st: &State, i: usize) -> bool {
        match &st.locations[i] {
            Location::Room(r) => *r == st.room,
            Location::Inventory => true,
            Location::On(s) => self
                .obj_index(s)
                .is_some_and(|s| st.locations[s] == Location::Room(st.room.clone())),
            Location::In(c) => self
                .obj_index(c)
                .is_some_and(|c| st.open[c] && st.locations[c] == Location::Room(st.room.clone())),
        }
    }

    fn describe(&self, st: &State, i: usize) -> String {
        let o = &self.spec.objects[i];
        let names = |v: Vec<usize>| join_list(&v.iter().map(|&j| article(&self.spec.objects[j].name)).collect::<Vec<_>>());
        match o.kind {
            ObjectKind::Item => article(&o.name),
            ObjectKind::Container { .. } if !st.open[i] => format!("{} (closed)", article(&o.name)),
            ObjectKind::Container { .. } => {
                let inside = self.contents(st, i);
                if inside.is_empty() {
                    format!("{} (open, empty)", article(&o.name))
                } else {
                    format!("{} (open, containing {})", article(&o.name), names(inside))
                }
            }
            ObjectKind::Supporter => {
                let on = self.contents(st, i);
                if on.is_empty() {
                    article(&o.name)
                } else {
                    format!("{} (holding {})", article(&o.name), names(on))
                }
            }
        }
    }

    fn admissible(&self, st: &State) -> Vec<String> {
        let mut out = Vec::new();
        let here: Vec<usize> = self.room_objects(st).collect();
        for i in 0..self.spec.objects.len() {
            if self.spec.objects[i].kind == ObjectKind::Item
                && st.locations[i] != Location::Inventory
                && self.visible(st, i)
            {
                out.push(format!("take {}", self.spec.objects[i].name));
            }
        }
        for &i in &here {
            if self.is_container(i) && !st.open[i] {
                out.push(format!("open {}", self.spec.objects[i].name));
            }
        }
        let exits = self.exits(&st.room);
        for (_, _, d) in &exits {
            if let Some(d) = *d {
                let ds = &st.doors[d];
                let door = &self.spec.doors[d];
                if !ds.locked && !ds.open {
                    out.push(format!("open {}", door.name));
                }
                let has_key = door
                    .key
                    .as_deref()
                    .and_then(|k| self.obj_index(k))
                    .is_some_and(|k| st.locations[k] == Location::Inventory);
                if ds.locked && has_key {
                    out.push(format!("unlock {}", door.name));
                }
            }
        }
        for i in 0..self.spec.objects.len() {
            if st.locations[i] != Location::Inventory {
                continue;
            }
            for &h in &here {
                match self.spec.objects[h].kind {
                    ObjectKind::Supporter => {
                        out.push(format!("put {} on {}", self.spec.objects[i].name, self.spec.objects[h].name))
                    }
                    ObjectKind::Container { .. } if st.open[h] => {
                        out.push(format!("put {} in {}", self.spec.objects[i].name, self.spec.objects[h].name))
                    }
                    _ => {}
                }
            }
        }
        for (dir, _, d) in &exits {
            if d.is_none_or(|d| st.doors[d].open) {
                out.push(format!("go {}", dir.as_str()));
            }
        }
        out.push("look".into());
        out.push("inventory".into());
        out
    }

    fn view(&self, st: &State) -> String {
        let room = self.spec.rooms.iter().find(|r| r.name == st.room).expect("valid room");
        let seen: Vec<String> = self.room_objects(st).map(|i| self.describe(st, i)).collect();
        let exits: Vec<String> = self
            .exits(&st.room)
            .into_iter()
            .map(|(dir, _, d)| match d {
                None => dir.as_str().to_string(),
                Some(d) => {
                    let ds = &st.doors[d];
                    let state = if ds.locked {
                        "locked"
                    } else if ds.open {
                        "open"
                    } else {
                        "closed"
                    };
                    format!("{} ({}, {state})", dir.as_str(), self.spec.doors[d].name)
                }
            })
            .collect();
        format!(
            "-= {} =-\n{}\nYou see: {}.\nExits: {}.\nScore: {}/{}\n{ACTIONS_PREFIX}{}",
            room.name,
            room.description,
            if seen.is_empty() { "nothing".to_string() } else { seen.join(", ") },
            if exits.is_empty() { "none".to_string() } else { exits.join(", ") },
            st.achieved,
            self.spec.subgoals.len(),
            self.admissible(st).join(", "),
        )
    }

    fn subgoal_met(&self, st: &State, g: &Subgoal) -> bool {
        let loc = |o: &str| self.obj_index(o).map(|i| &st.locations[i]);
        match g {
            Subgoal::Reach { room } => st.room == *room,
            Subgoal::Hold { object } => loc(object) == Some(&Location::Inventory),
            Subgoal::Place { object, on } => {
                matches!(loc(object), Some(Location::On(x) | Location::In(x)) if x == on)
            }
        }
    }

    /// Executes one command and returns the message line (empty for pure movement or look).
    fn execute(&self, st: &mut State, cmd: &str) -> String {
        let cmd = cmd.trim().to_ascii_lowercase();
        let (verb, rest) = cmd.split_once(' ').unwrap_or((cmd.as_str(), ""));
        let rest = rest.trim();
        match verb {
            "look" | "l" if rest.is_empty() => String::new(),
            "inventory" | "i" if rest.is_empty() => {
                let held: Vec<String> = (0..self.spec.objects.len())
                    .filter(|&i| st.locations[i] == Location::Inventory)
                    .map(|i| article(&self.spec.objects[i].name))
                    .collect();
                if held.is_empty() {
                    "You are carrying nothing.".into()
                } else {
                    format!("You are carrying: {}.", join_list(&held))
                }
            }
            "go" => self.go(st, rest),
            v if rest.is_empty() && Direction::parse(v).is_some() => self.go(st, v),
            "take" | "get" => {
                let name = rest.split_once(" from ").map_or(rest, |(o, _)| o);
                let Some(i) = self.obj_index(name).filter(|&i| self.visible(st, i)) else {
                    return NOT_VISIBLE.into();
                };
                let o = &self.spec.objects[i];
                if o.kind != ObjectKind::Item {
                    return "You can't take that.".into();
                }
                let msg = match &st.locations[i] {
                    Location::Inventory => return "You already have that.".into(),
                    Location::In(h) | Location::On(h) => format!("You take the {} from the {h}.", o.name),
                    Location::Room(_) => format!("You pick up the {}.", o.name),
                };
                st.locations[i] = Location::Inventory;
                msg
            }
            "open" => {
                if let Some(d) = self.adjacent_door(st, rest) {
                    let name = &self.spec.doors[d].name;
                    let ds = &mut st.doors[d];
                    return if ds.locked {
                        format!("The {name} is locked.")
                    } else if ds.open {
                        "That's already open.".into()
                    } else {
                        ds.open = true;
                        format!("You open the {name}.")
                    };
                }
                let Some(i) = self.obj_index(rest).filter(|&i| self.visible(st, i)) else {
                    return NOT_VISIBLE.into();
                };
                if !self.is_container(i) {
                    return "That's not something you can open.".into();
                }
                if st.open[i] {
                    return "That's already open.".into();
                }
                st.open[i] = true;
                let name = &self.spec.objects[i].name;
                let inside: Vec<String> = self
                    .contents(st, i)
                    .iter()
                    .map(|&j| article(&self.spec.objects[j].name))
                    .collect();
                if inside.is_empty() {
                    format!("You open the {name}. It is empty.")
                } else {
                    format!("You open the {name}, revealing {}.", join_list(&inside))
                }
            }
            "unlock" => {
                let name = rest.split_once(" with ").map_or(rest, |(d, _)| d);
                let Some(d) = self.adjacent_door(st, name) else {
                    return if self.obj_index(name).is_some_and(|i| self.visible(st, i)) {
                        "That's not something you can unlock.".into()
                    } else {
                        NOT_VISIBLE.into()
                    };
                };
                let door = &self.spec.doors[d];
                if !st.doors[d].locked {
                    return format!("The {} is already unlocked.", door.name);
                }
                let key = door.key.as_deref().and_then(|k| self.obj_index(k));
                match key {
                    Some(k) if st.locations[k] == Location::Inventory => {
                        st.doors[d].locked = false;
                        format!("(with the {}) You unlock the {}.", self.spec.objects[k].name, door.name)
                    }
                    _ => "You don't have the right key.".into(),
                }
            }
            "put" => {
                let (obj, prep, target) = if let Some((o, t)) = rest.split_once(" on ") {
                    (o, "on", t)
                } else if let Some((o, t)) = rest.split_once(" in ") {
                    (o, "in", t)
                } else {
                    return "You can't put things there.".into();
                };
                let Some(i) = self.obj_index(obj).filter(|&i| st.locations[i] == Location::Inventory) else {
                    return "You aren't carrying that.".into();
                };
                let Some(h) = self.obj_index(target).filter(|&h| {
                    h != i && st.locations[h] == Location::Room(st.room.clone())
                }) else {
                    return NOT_VISIBLE.into();
                };
                match (self.spec.objects[h].kind, prep) {
                    (ObjectKind::Supporter, "on") => {
                        st.locations[i] = Location::On(self.spec.objects[h].name.clone());
                    }
                    (ObjectKind::Container { .. }, "in") => {
                        if !st.open[h] {
                            return format!("The {} is closed.", self.spec.objects[h].name);
                        }
                        st.locations[i] = Location::In(self.spec.objects[h].name.clone());
                    }
                    _ => return "You can't put things there.".into(),
                }
                format!("You put the {} {prep} the {}.", self.spec.objects[i].name, self.spec.objects[h].name)
            }
            _ => UNKNOWN_VERB.into(),
        }
    }

    fn go(&self, st: &mut State, dir: &str) -> String {
        let Some(dir) = Direction::parse(dir) else {
            return NO_EXIT.into();
        };
        let Some((_, to, door)) = self.exits(&st.room).into_iter().find(|(d, _, _)| *d == dir) else {
            return NO_EXIT.into();
        };
        if let Some(d) = door {
            let name = &self.spec.doors[d].name;
            if st.doors[d].locked {
                return format!("The {name} is locked.");
            }
            if !st.doors[d].open {
                return format!("The {name} is closed.");
            }
        }
        st.room = to;
        String::new()
    }
}

impl Environment for AdventureEnv {
    fn reset(&mut self, task_id: &str) -> Result<Observation, EnvError> {
        if task_id != self.spec.task_id {
            return Err(EnvError::UnknownTask(task_id.to_string()));
        }
        let st = State {
            room: self.spec.start_room.clone(),
            doors: self
                .spec
                .doors
                .iter()
                .map(|d| DoorState {
                    locked: d.locked,
                    open: d.open,
                })
                .collect(),
            open: self
                .spec
                .objects
                .iter()
                .map(|o| matches!(o.kind, ObjectKind::Container { open: true }))
                .collect(),
            locations: self.spec.objects.iter().map(|o| o.location.clone()).collect(),
            achieved: 0,
            done: false,
        };
        let text = format!("{}\n{}", self.spec.task_statement(), self.view(&st));
        self.state = Some(st);
        Ok(Observation::new(text).expect("non-empty"))
    }

    fn step(&mut self, action: &Action) -> Result<EnvStep, EnvError> {
        let mut st = self.state.take().ok_or(EnvError::NotReset)?;
        if st.done {
            self.state = Some(st);
            return Err(EnvError::AfterDone);
        }
        let mut msg = self.execute(&mut st, action.as_str());
        let before = st.achieved;
        while st.achieved < self.spec.subgoals.len() && self.subgoal_met(&st, &self.spec.subgoals[st.achieved]) {
            st.achieved += 1;
        }
        if st.achieved > before {
            let gain = st.achieved - before;
            let line = if gain == 1 {
                "Your score has just gone up by one point.".to_string()
            } else {
                format!("Your score has just gone up by {gain} points.")
            };
            msg = if msg.is_empty() { line } else { format!("{msg}\n{line}") };
        }
        let total = self.spec.subgoals.len();
        let done = st.achieved == total;
        let text = if done {
            format!("{msg}\n{THE_END}\nScore: {total}/{total}")
        } else if msg.is_empty() {
            self.view(&st)
        } else {
            format!("{msg}\n{}", self.view(&st))
        };
        st.done = done;
        self.state = Some(st);
        Ok(EnvStep {
            obs: Observation::new(text).expect("non-empty"),
            done,
            success: done,
            reward: if done { 1.0 } else { 0.0 },
        })
    }

    fn max_steps(&self) -> usize {
        self.max_steps
    }

    fn domain(&self) -> Domain {
        Domain::Adventure
    }

    fn task_id(&self) -> &str {
        &self.spec.task_id
    }
}

/// Parses the walkthrough out of an initial observation.
pub fn parse_task_statement(initial_obs: &str) -> Option<Vec<String>> {
    let line = initial_obs.lines().find_map(|l| l.strip_prefix(TASK_PREFIX))?;
    let line = line.strip_suffix('.')?;
    Some(line.split(", then ").map(str::to_string).collect())
}

/// Admissible commands listed in an observation, if it carries the list.
pub fn listed_actions(obs: &str) -> Option<Vec<String>> {
    let line = obs.lines().rev().find_map(|l| l.strip_prefix(ACTIONS_PREFIX))?;
    Some(line.split(", ").filter(|s| !s.is_empty()).map(str::to_string).collect())
}
