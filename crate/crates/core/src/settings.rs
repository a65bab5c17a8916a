//! Run configuration as flat `key = value` text.
//!
//! Keys live in sections (`[deck]`, `[archive]`, ...). A line may also name
//! its section inline as `section.key = value`; `#` starts a comment. Unknown
//! keys are rejected with the full list of valid ones. [`Settings::to_flat_text`]
//! writes one `section.key=value` per line and parses back to the same value.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::archive::{MeasureDim, MeasureSpace};
use crate::deck::{generate_cardset, DeckConstraints, DeckSpace};
use crate::dsa_me::{DsaMeConfig, Problem, SurrogateKind, TrainingMode};
use crate::experiment::Variant;
use crate::sim::{EvalConfig, GameRules, MiniCardEvaluator, OpponentSuite};
use crate::surrogate::{AdamConfig, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DeckSettings {
    pub cardset_size: usize,
    pub cardset_seed: u64,
    pub deck_size: u32,
    pub max_copies: u32,
    pub geometric_p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveSettings {
    pub turns_lower: f64,
    pub turns_upper: f64,
    pub turns_resolution: usize,
    pub hand_lower: f64,
    pub hand_upper: f64,
    pub hand_resolution: usize,
    pub objective_floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateSettings {
    pub model: SurrogateKind,
    pub training_mode: TrainingMode,
    pub use_ancillary: bool,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub offline_pretrain_count: usize,
    pub pretrain_repetitions: usize,
    /// Model file for frozen-checkpoint mode; empty means none.
    pub checkpoint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapElitesSettings {
    pub initial_population: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsaMeSettings {
    pub evaluations: usize,
    pub inner_iterations: usize,
    pub reset_inner_archive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub games_per_opponent: usize,
    pub base_seed: u64,
    pub suite_seed: u64,
    pub starting_health: i32,
    pub starting_hand_first: usize,
    pub starting_hand_second: usize,
    pub max_mana: u32,
    pub max_hand: usize,
    pub max_turns: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSettings {
    pub variants: Vec<Variant>,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub deck: DeckSettings,
    pub archive: ArchiveSettings,
    pub surrogate: SurrogateSettings,
    pub map_elites: MapElitesSettings,
    pub dsa_me: DsaMeSettings,
    pub sim: SimSettings,
    pub experiment: ExperimentSettings,
}

impl Default for Settings {
    fn default() -> Self {
        let rules = GameRules::default();
        let train = TrainConfig::default();
        let run = DsaMeConfig::default();
        let constraints = DeckConstraints::default();
        Self {
            deck: DeckSettings {
                cardset_size: 40,
                cardset_seed: 7,
                deck_size: constraints.deck_size,
                max_copies: constraints.max_copies,
                geometric_p: 0.5,
            },
            archive: ArchiveSettings {
                turns_lower: 6.0,
                turns_upper: 9.0,
                turns_resolution: 20,
                hand_lower: 3.0,
                hand_upper: 8.0,
                hand_resolution: 20,
                objective_floor: run.objective_floor,
            },
            surrogate: SurrogateSettings {
                model: run.surrogate,
                training_mode: run.training_mode,
                use_ancillary: run.use_ancillary,
                learning_rate: train.adam.learning_rate,
                beta1: train.adam.beta1,
                beta2: train.adam.beta2,
                epsilon: train.adam.epsilon,
                batch_size: train.batch_size,
                epochs: train.epochs,
                offline_pretrain_count: run.offline_pretrain_count,
                pretrain_repetitions: run.pretrain_repetitions,
                checkpoint: String::new(),
            },
            map_elites: MapElitesSettings { initial_population: run.initial_population, batch_size: run.inner_batch_size },
            dsa_me: DsaMeSettings {
                evaluations: run.evaluations,
                inner_iterations: run.inner_iterations,
                reset_inner_archive: run.reset_inner_archive,
            },
            sim: SimSettings {
                games_per_opponent: EvalConfig::default().games_per_opponent,
                base_seed: 0,
                suite_seed: 1,
                starting_health: rules.starting_health,
                starting_hand_first: rules.starting_hand_first,
                starting_hand_second: rules.starting_hand_second,
                max_mana: rules.max_mana,
                max_hand: rules.max_hand,
                max_turns: rules.max_turns,
            },
            experiment: ExperimentSettings {
                variants: vec![Variant::MapElites, Variant::LsaMe, Variant::DsaMe],
                trials: 5,
                seed: 0,
            },
        }
    }
}

/// Key, one-line description.
const DOCS: &[(&str, &str)] = &[
    ("deck.cardset_size", "number of distinct cards"),
    ("deck.cardset_seed", "seed of the generated card pool"),
    ("deck.deck_size", "cards per deck"),
    ("deck.max_copies", "copies allowed per card"),
    ("deck.geometric_p", "success probability of the cards-replaced distribution"),
    ("archive.turns_lower", "lower bound of the average-turns measure"),
    ("archive.turns_upper", "upper bound of the average-turns measure"),
    ("archive.turns_resolution", "bins along average turns"),
    ("archive.hand_lower", "lower bound of the average-hand-size measure"),
    ("archive.hand_upper", "upper bound of the average-hand-size measure"),
    ("archive.hand_resolution", "bins along average hand size"),
    ("archive.objective_floor", "offset for the floored QD-score"),
    ("surrogate.model", "mlp, linear or none"),
    ("surrogate.training_mode", "online, offline_random_pretrain, frozen_checkpoint or from_scratch_each_outer"),
    ("surrogate.use_ancillary", "also predict the nine ancillary game statistics"),
    ("surrogate.learning_rate", "Adam step size"),
    ("surrogate.beta1", "Adam first-moment decay"),
    ("surrogate.beta2", "Adam second-moment decay"),
    ("surrogate.epsilon", "Adam denominator guard"),
    ("surrogate.batch_size", "minibatch size"),
    ("surrogate.epochs", "epochs per training call"),
    ("surrogate.offline_pretrain_count", "random decks evaluated for offline pretraining"),
    ("surrogate.pretrain_repetitions", "epoch multiplier for offline and elite-data training"),
    ("surrogate.checkpoint", "model file for frozen_checkpoint mode (empty: none)"),
    ("map_elites.initial_population", "random decks before perturbation starts"),
    ("map_elites.batch_size", "candidates evaluated per batch"),
    ("dsa_me.evaluations", "ground-truth evaluation budget"),
    ("dsa_me.inner_iterations", "surrogate evaluations per inner loop"),
    ("dsa_me.reset_inner_archive", "start each inner loop from an empty archive"),
    ("sim.games_per_opponent", "games against each suite deck per evaluation"),
    ("sim.base_seed", "seed mixed into every game seed"),
    ("sim.suite_seed", "seed of the opponent decks"),
    ("sim.starting_health", "hero health"),
    ("sim.starting_hand_first", "opening hand of the first player"),
    ("sim.starting_hand_second", "opening hand of the second player"),
    ("sim.max_mana", "mana cap"),
    ("sim.max_hand", "hand limit; extra draws burn"),
    ("sim.max_turns", "rounds before a game is drawn"),
    ("experiment.variants", "comma-separated variant names"),
    ("experiment.trials", "trials per variant"),
    ("experiment.seed", "base seed; trial seeds derive from it"),
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

impl FromStr for SurrogateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(Self::Mlp),
            "linear" => Ok(Self::Linear),
            "none" => Ok(Self::None),
            _ => Err(Error::Config(format!("unknown model {s:?} (mlp, linear, none)"))),
        }
    }
}

impl SurrogateKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Mlp => "mlp",
            Self::Linear => "linear",
            Self::None => "none",
        }
    }
}

impl FromStr for TrainingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "online" => Ok(Self::Online),
            "offline_random_pretrain" => Ok(Self::OfflineRandomPretrain),
            "frozen_checkpoint" => Ok(Self::FrozenCheckpoint),
            "from_scratch_each_outer" => Ok(Self::FromScratchEachOuter),
            _ => Err(Error::Config(format!(
                "unknown training mode {s:?} (online, offline_random_pretrain, frozen_checkpoint, from_scratch_each_outer)"
            ))),
        }
    }
}

impl TrainingMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Online => "online",
            Self::OfflineRandomPretrain => "offline_random_pretrain",
            Self::FrozenCheckpoint => "frozen_checkpoint",
            Self::FromScratchEachOuter => "from_scratch_each_outer",
        }
    }
}

impl Settings {
    pub fn keys() -> Vec<&'static str> {
        DOCS.iter().map(|(k, _)| *k).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Self::default();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {}: unterminated section header", n + 1)))?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let full = if key.contains('.') || section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
            s.set(&full, value)?;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "deck.cardset_size" => self.deck.cardset_size = parse_value(key, v)?,
            "deck.cardset_seed" => self.deck.cardset_seed = parse_value(key, v)?,
            "deck.deck_size" => self.deck.deck_size = parse_value(key, v)?,
            "deck.max_copies" => self.deck.max_copies = parse_value(key, v)?,
            "deck.geometric_p" => self.deck.geometric_p = parse_value(key, v)?,
            "archive.turns_lower" => self.archive.turns_lower = parse_value(key, v)?,
            "archive.turns_upper" => self.archive.turns_upper = parse_value(key, v)?,
            "archive.turns_resolution" => self.archive.turns_resolution = parse_value(key, v)?,
            "archive.hand_lower" => self.archive.hand_lower = parse_value(key, v)?,
            "archive.hand_upper" => self.archive.hand_upper = parse_value(key, v)?,
            "archive.hand_resolution" => self.archive.hand_resolution = parse_value(key, v)?,
            "archive.objective_floor" => self.archive.objective_floor = parse_value(key, v)?,
            "surrogate.model" => self.surrogate.model = v.parse()?,
            "surrogate.training_mode" => self.surrogate.training_mode = v.parse()?,
            "surrogate.use_ancillary" => self.surrogate.use_ancillary = parse_bool(key, v)?,
            "surrogate.learning_rate" => self.surrogate.learning_rate = parse_value(key, v)?,
            "surrogate.beta1" => self.surrogate.beta1 = parse_value(key, v)?,
            "surrogate.beta2" => self.surrogate.beta2 = parse_value(key, v)?,
            "surrogate.epsilon" => self.surrogate.epsilon = parse_value(key, v)?,
            "surrogate.batch_size" => self.surrogate.batch_size = parse_value(key, v)?,
            "surrogate.epochs" => self.surrogate.epochs = parse_value(key, v)?,
            "surrogate.offline_pretrain_count" => self.surrogate.offline_pretrain_count = parse_value(key, v)?,
            "surrogate.pretrain_repetitions" => self.surrogate.pretrain_repetitions = parse_value(key, v)?,
            "surrogate.checkpoint" => self.surrogate.checkpoint = v.to_string(),
            "map_elites.initial_population" => self.map_elites.initial_population = parse_value(key, v)?,
            "map_elites.batch_size" => self.map_elites.batch_size = parse_value(key, v)?,
            "dsa_me.evaluations" => self.dsa_me.evaluations = parse_value(key, v)?,
            "dsa_me.inner_iterations" => self.dsa_me.inner_iterations = parse_value(key, v)?,
            "dsa_me.reset_inner_archive" => self.dsa_me.reset_inner_archive = parse_bool(key, v)?,
            "sim.games_per_opponent" => self.sim.games_per_opponent = parse_value(key, v)?,
            "sim.base_seed" => self.sim.base_seed = parse_value(key, v)?,
            "sim.suite_seed" => self.sim.suite_seed = parse_value(key, v)?,
            "sim.starting_health" => self.sim.starting_health = parse_value(key, v)?,
            "sim.starting_hand_first" => self.sim.starting_hand_first = parse_value(key, v)?,
            "sim.starting_hand_second" => self.sim.starting_hand_second = parse_value(key, v)?,
            "sim.max_mana" => self.sim.max_mana = parse_value(key, v)?,
            "sim.max_hand" => self.sim.max_hand = parse_value(key, v)?,
            "sim.max_turns" => self.sim.max_turns = parse_value(key, v)?,
            "experiment.variants" => {
                self.experiment.variants = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "experiment.trials" => self.experiment.trials = parse_value(key, v)?,
            "experiment.seed" => self.experiment.seed = parse_value(key, v)?,
            _ => {
                return Err(Error::Config(format!("unknown key {key:?}; valid keys: {}", Self::keys().join(", "))));
            }
        }
        Ok(())
    }

    /// Every key with its current value, in documentation order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let variants: Vec<&str> = self.experiment.variants.iter().map(|v| v.name()).collect();
        let values = [
            self.deck.cardset_size.to_string(),
            self.deck.cardset_seed.to_string(),
            self.deck.deck_size.to_string(),
            self.deck.max_copies.to_string(),
            self.deck.geometric_p.to_string(),
            self.archive.turns_lower.to_string(),
            self.archive.turns_upper.to_string(),
            self.archive.turns_resolution.to_string(),
            self.archive.hand_lower.to_string(),
            self.archive.hand_upper.to_string(),
            self.archive.hand_resolution.to_string(),
            self.archive.objective_floor.to_string(),
            self.surrogate.model.name().to_string(),
            self.surrogate.training_mode.name().to_string(),
            self.surrogate.use_ancillary.to_string(),
            self.surrogate.learning_rate.to_string(),
            self.surrogate.beta1.to_string(),
            self.surrogate.beta2.to_string(),
            self.surrogate.epsilon.to_string(),
            self.surrogate.batch_size.to_string(),
            self.surrogate.epochs.to_string(),
            self.surrogate.offline_pretrain_count.to_string(),
            self.surrogate.pretrain_repetitions.to_string(),
            self.surrogate.checkpoint.clone(),
            self.map_elites.initial_population.to_string(),
            self.map_elites.batch_size.to_string(),
            self.dsa_me.evaluations.to_string(),
            self.dsa_me.inner_iterations.to_string(),
            self.dsa_me.reset_inner_archive.to_string(),
            self.sim.games_per_opponent.to_string(),
            self.sim.base_seed.to_string(),
            self.sim.suite_seed.to_string(),
            self.sim.starting_health.to_string(),
            self.sim.starting_hand_first.to_string(),
            self.sim.starting_hand_second.to_string(),
            self.sim.max_mana.to_string(),
            self.sim.max_hand.to_string(),
            self.sim.max_turns.to_string(),
            variants.join(","),
            self.experiment.trials.to_string(),
            self.experiment.seed.to_string(),
        ];
        DOCS.iter().map(|(k, _)| *k).zip(values).collect()
    }

    /// One `section.key=value` per line.
    pub fn to_flat_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Sectioned form with a comment above every key.
    pub fn to_documented_text(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for ((key, value), (_, doc)) in self.entries().into_iter().zip(DOCS) {
            let (section, name) = key.split_once('.').expect("keys are dotted");
            if section != current {
                if !current.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{section}]");
                current = section;
            }
            let _ = writeln!(out, "# {doc}\n{name} = {value}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiment.trials == 0 {
            return Err(Error::Config("experiment.trials must be >= 1".into()));
        }
        let mut seen = Vec::new();
        for v in &self.experiment.variants {
            if seen.contains(v) {
                return Err(Error::Config(format!("variant {} listed twice", v.name())));
            }
            seen.push(*v);
        }
        if !(self.deck.geometric_p > 0.0 && self.deck.geometric_p <= 1.0) {
            return Err(Error::Config("deck.geometric_p must be in (0, 1]".into()));
        }
        if self.sim.games_per_opponent == 0 {
            return Err(Error::Config("sim.games_per_opponent must be >= 1".into()));
        }
        self.measure_space().map_err(|e| Error::Config(e.to_string()))?;
        self.constraints().validate(self.deck.cardset_size).map_err(|e| Error::Config(e.to_string()))?;
        self.run_config(0).validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn constraints(&self) -> DeckConstraints {
        DeckConstraints { deck_size: self.deck.deck_size, max_copies: self.deck.max_copies }
    }

    pub fn measure_space(&self) -> Result<MeasureSpace> {
        let a = &self.archive;
        MeasureSpace::new([
            MeasureDim { lower: a.turns_lower, upper: a.turns_upper, resolution: a.turns_resolution },
            MeasureDim { lower: a.hand_lower, upper: a.hand_upper, resolution: a.hand_resolution },
        ])
    }

    pub fn rules(&self) -> GameRules {
        let s = &self.sim;
        GameRules {
            starting_health: s.starting_health,
            starting_hand_first: s.starting_hand_first,
            starting_hand_second: s.starting_hand_second,
            max_mana: s.max_mana,
            max_hand: s.max_hand,
            max_turns: s.max_turns,
        }
    }

    pub fn problem(&self) -> Result<Problem> {
        let cardset = generate_cardset(self.deck.cardset_seed, self.deck.cardset_size)?;
        Ok(Problem {
            decks: DeckSpace::new(cardset, self.constraints(), self.deck.geometric_p)?,
            measures: self.measure_space()?,
        })
    }

    pub fn evaluator(&self, problem: &Problem) -> Result<MiniCardEvaluator> {
        let cardset = problem.decks.cardset.clone();
        let suite = OpponentSuite::default_for(&cardset, &self.constraints(), self.sim.suite_seed)?;
        Ok(MiniCardEvaluator {
            cardset,
            suite,
            config: EvalConfig { games_per_opponent: self.sim.games_per_opponent, base_seed: self.sim.base_seed },
            rules: self.rules(),
        })
    }

    /// The configured run with the given seed, before any variant preset.
    pub fn run_config(&self, seed: u64) -> DsaMeConfig {
        let s = &self.surrogate;
        DsaMeConfig {
            evaluations: self.dsa_me.evaluations,
            inner_iterations: self.dsa_me.inner_iterations,
            initial_population: self.map_elites.initial_population,
            inner_batch_size: self.map_elites.batch_size,
            surrogate: s.model,
            training_mode: s.training_mode,
            reset_inner_archive: self.dsa_me.reset_inner_archive,
            use_ancillary: s.use_ancillary,
            offline_pretrain_count: s.offline_pretrain_count,
            pretrain_repetitions: s.pretrain_repetitions,
            train: TrainConfig {
                adam: AdamConfig { learning_rate: s.learning_rate, beta1: s.beta1, beta2: s.beta2, epsilon: s.epsilon },
                batch_size: s.batch_size,
                epochs: s.epochs,
                shuffle_seed: 0,
            },
            objective_floor: self.archive.objective_floor,
            seed,
        }
    }
}
