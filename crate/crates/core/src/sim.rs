//! MiniCard: a deterministic two-player card battle used as ground truth.
//!
//! Each player starts at 30 health with a shuffled 30-card deck. On their
//! turn a player draws (fatigue when the deck is empty, burn when the hand is
//! full), gets `min(turn, 10)` mana and follows a fixed greedy policy: play
//! the most expensive affordable card repeatedly, then attack with every
//! minion that has been in play since the start of the turn. Shuffling is the
//! only randomness.
//!
//! Trace lines (when requested) follow this grammar, one action per line:
//!
//! ```text
//! <round> <A|B> draw <card>
//! <round> <A|B> burn <card>
//! <round> <A|B> fatigue <damage>
//! <round> <A|B> play <card> cost <cost>
//! <round> <A|B> spell <card> hero <damage>
//! <round> <A|B> attack <card> minion <card>
//! <round> <A|B> attack <card> hero <damage>
//! <round> <A|B> pass wasted <mana>
//! end <A|B|draw> <health_a> <health_b>
//! ```

use rand::seq::SliceRandom;
use rand::Rng;

use crate::archive::{MeasureDim, MeasureSpace};
use crate::deck::{deck_static_stats, CardKind, CardSet, DeckConstraints, DeckGenome};
use crate::qd::{EvaluationResult, Evaluator};
use crate::rng::{self, tag};
use crate::surrogate::AncillaryData;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GameRules {
    pub starting_health: i32,
    pub starting_hand_first: usize,
    pub starting_hand_second: usize,
    pub max_mana: u32,
    pub max_hand: usize,
    /// Hard stop, in rounds (one turn per player).
    pub max_turns: u32,
}

impl Default for GameRules {
    fn default() -> Self {
        Self {
            starting_health: 30,
            starting_hand_first: 3,
            starting_hand_second: 4,
            max_mana: 10,
            max_hand: 10,
            max_turns: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Winner {
    PlayerA,
    PlayerB,
    Draw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameRecord {
    pub winner: Winner,
    /// Rounds played: player-turns divided by two, rounded up.
    pub turns: u32,
    /// A's health minus B's health, each floored at 0.
    pub final_health_diff: f64,
    /// A's hand size at the start of each of A's turns, after the draw.
    pub hand_sizes_a: Vec<usize>,
    pub damage_dealt_a: u32,
    pub damage_dealt_b: u32,
    pub cards_drawn_a: u32,
    pub mana_spent_a: u32,
    pub mana_wasted_a: u32,
    pub fatigue_damage_a: u32,
    pub fatigue_damage_b: u32,
    pub health_a: i32,
    pub health_b: i32,
}

impl GameRecord {
    pub fn mean_hand_size_a(&self) -> f64 {
        if self.hand_sizes_a.is_empty() {
            0.0
        } else {
            self.hand_sizes_a.iter().sum::<usize>() as f64 / self.hand_sizes_a.len() as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Minion {
    card: usize,
    attack: u32,
    health: u32,
    ready: bool,
}

#[derive(Debug, Clone, Default)]
struct PlayerState {
    health: i32,
    deck: Vec<usize>,
    hand: Vec<usize>,
    board: Vec<Minion>,
    fatigue: u32,
    fatigue_taken: u32,
    turns_taken: u32,
    damage_dealt: u32,
    cards_drawn: u32,
    mana_spent: u32,
    mana_wasted: u32,
}

impl PlayerState {
    fn new(deck: Vec<usize>, health: i32) -> Self {
        Self { health, deck, ..Default::default() }
    }

    fn draw(&mut self, rules: &GameRules, log: &mut Tracer, who: char, round: u32) {
        match self.deck.pop() {
            Some(card) => {
                self.cards_drawn += 1;
                if self.hand.len() >= rules.max_hand {
                    log.line(|| format!("{round} {who} burn {card}"));
                } else {
                    log.line(|| format!("{round} {who} draw {card}"));
                    self.hand.push(card);
                }
            }
            None => {
                self.fatigue += 1;
                self.fatigue_taken += self.fatigue;
                self.health -= self.fatigue as i32;
                let f = self.fatigue;
                log.line(|| format!("{round} {who} fatigue {f}"));
            }
        }
    }
}

struct Tracer<'a>(Option<&'a mut Vec<String>>);

impl Tracer<'_> {
    fn line(&mut self, f: impl FnOnce() -> String) {
        if let Some(out) = self.0.as_deref_mut() {
            out.push(f());
        }
    }
}

/// Both players: `actor` acts against `enemy`.
struct TurnState<'a> {
    cardset: &'a CardSet,
    actor: &'a mut PlayerState,
    enemy: &'a mut PlayerState,
    mana: u32,
}

/// The fixed greedy policy for one turn. Returns true if the enemy hero died.
fn greedy_policy_turn(state: TurnState<'_>, log: &mut Tracer, who: char, round: u32) -> bool {
    let TurnState { cardset, actor, enemy, mana } = state;
    let mut left = mana;
    loop {
        let pick = actor
            .hand
            .iter()
            .enumerate()
            .filter(|(_, &c)| cardset.card(c).cost <= left)
            .max_by(|(_, &a), (_, &b)| {
                let (ca, cb) = (cardset.card(a).cost, cardset.card(b).cost);
                ca.cmp(&cb).then(b.cmp(&a))
            })
            .map(|(pos, _)| pos);
        let Some(pos) = pick else { break };
        let id = actor.hand.remove(pos);
        let card = cardset.card(id);
        left -= card.cost;
        actor.mana_spent += card.cost;
        log.line(|| format!("{round} {who} play {id} cost {}", card.cost));
        match card.kind {
            CardKind::Spell { damage } => {
                enemy.health -= damage as i32;
                actor.damage_dealt += damage;
                log.line(|| format!("{round} {who} spell {id} hero {damage}"));
                if enemy.health <= 0 {
                    actor.mana_wasted += left;
                    return true;
                }
            }
            CardKind::Minion { attack, health } => actor.board.push(Minion {
                card: id,
                attack,
                health,
                ready: false,
            }),
        }
    }
    actor.mana_wasted += left;
    if left > 0 {
        log.line(|| format!("{round} {who} pass wasted {left}"));
    }

    for k in 0..actor.board.len() {
        let attacker = actor.board[k];
        if !attacker.ready {
            continue;
        }
        let target = enemy
            .board
            .iter()
            .enumerate()
            .filter(|(_, t)| attacker.attack >= t.health && t.attack < attacker.health)
            .min_by_key(|(pos, t)| (t.card, *pos))
            .map(|(pos, _)| pos);
        actor.damage_dealt += attacker.attack;
        match target {
            Some(pos) => {
                let t = enemy.board.remove(pos);
                actor.board[k].health -= t.attack;
                log.line(|| format!("{round} {who} attack {} minion {}", attacker.card, t.card));
            }
            None => {
                enemy.health -= attacker.attack as i32;
                log.line(|| format!("{round} {who} attack {} hero {}", attacker.card, attacker.attack));
                if enemy.health <= 0 {
                    return true;
                }
            }
        }
    }
    false
}

fn shuffled(deck: &DeckGenome, seed: u64) -> Vec<usize> {
    let mut cards = deck.instances();
    cards.shuffle(&mut rng::stream(seed));
    cards
}

/// Plays one game; shuffle streams are derived from `seed`.
pub fn play_game(cardset: &CardSet, deck_a: &DeckGenome, deck_b: &DeckGenome, rules: &GameRules, seed: u64) -> GameRecord {
    play_game_with_shuffles(
        cardset,
        deck_a,
        deck_b,
        rules,
        rng::derive_seed(seed, &[tag::SHUFFLE_A]),
        rng::derive_seed(seed, &[tag::SHUFFLE_B]),
        None,
    )
}

/// Plays one game with explicit per-player shuffle seeds, optionally
/// appending trace lines.
pub fn play_game_with_shuffles(
    cardset: &CardSet,
    deck_a: &DeckGenome,
    deck_b: &DeckGenome,
    rules: &GameRules,
    shuffle_a: u64,
    shuffle_b: u64,
    trace: Option<&mut Vec<String>>,
) -> GameRecord {
    let mut log = Tracer(trace);
    let mut players = [
        PlayerState::new(shuffled(deck_a, shuffle_a), rules.starting_health),
        PlayerState::new(shuffled(deck_b, shuffle_b), rules.starting_health),
    ];
    let names = ['A', 'B'];
    for _ in 0..rules.starting_hand_first {
        players[0].draw(rules, &mut log, 'A', 0);
    }
    for _ in 0..rules.starting_hand_second {
        players[1].draw(rules, &mut log, 'B', 0);
    }
    let mut hand_sizes_a = Vec::new();
    let mut player_turns = 0u32;
    let mut winner = None;
    while winner.is_none() {
        let active = (player_turns % 2) as usize;
        let round = player_turns / 2 + 1;
        if round > rules.max_turns {
            break;
        }
        player_turns += 1;
        let who = names[active];
        let (first, second) = players.split_at_mut(1);
        let (actor, enemy) = if active == 0 {
            (&mut first[0], &mut second[0])
        } else {
            (&mut second[0], &mut first[0])
        };
        actor.turns_taken += 1;
        actor.board.iter_mut().for_each(|m| m.ready = true);
        let mana = actor.turns_taken.min(rules.max_mana);
        actor.draw(rules, &mut log, who, round);
        if actor.health <= 0 {
            winner = Some(if active == 0 { Winner::PlayerB } else { Winner::PlayerA });
            break;
        }
        if active == 0 {
            hand_sizes_a.push(actor.hand.len());
        }
        let state = TurnState { cardset, actor, enemy, mana };
        if greedy_policy_turn(state, &mut log, who, round) {
            winner = Some(if active == 0 { Winner::PlayerA } else { Winner::PlayerB });
        }
    }
    let [a, b] = players;
    let winner = winner.unwrap_or(match a.health.cmp(&b.health) {
        std::cmp::Ordering::Greater => Winner::PlayerA,
        std::cmp::Ordering::Less => Winner::PlayerB,
        std::cmp::Ordering::Equal => Winner::Draw,
    });
    log.line(|| {
        let w = match winner {
            Winner::PlayerA => "A",
            Winner::PlayerB => "B",
            Winner::Draw => "draw",
        };
        format!("end {w} {} {}", a.health, b.health)
    });
    GameRecord {
        winner,
        turns: player_turns.div_ceil(2),
        final_health_diff: (a.health.max(0) - b.health.max(0)) as f64,
        hand_sizes_a,
        damage_dealt_a: a.damage_dealt,
        damage_dealt_b: b.damage_dealt,
        cards_drawn_a: a.cards_drawn,
        mana_spent_a: a.mana_spent,
        mana_wasted_a: a.mana_wasted,
        fatigue_damage_a: a.fatigue_taken,
        fatigue_damage_b: b.fatigue_taken,
        health_a: a.health,
        health_b: b.health,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Archetype {
    Aggro,
    Midrange,
    Control,
}

impl Archetype {
    /// Relative pick weight of a card of the given cost.
    fn weight(&self, cost: u32) -> f64 {
        let c = cost as f64;
        match self {
            Archetype::Aggro => (11.0 - c).powi(2),
            Archetype::Midrange => (-(c - 5.5).powi(2) / 8.0).exp(),
            Archetype::Control => c * c,
        }
    }
}

/// Fixed opponents, built by cost-biased sampling from a suite seed.
#[derive(Debug, Clone, PartialEq)]
pub struct OpponentSuite {
    pub decks: Vec<DeckGenome>,
}

impl OpponentSuite {
    pub const DEFAULT_ARCHETYPES: [Archetype; 3] = [Archetype::Aggro, Archetype::Midrange, Archetype::Control];

    pub fn generate(cardset: &CardSet, constraints: &DeckConstraints, archetypes: &[Archetype], seed: u64) -> Result<Self> {
        constraints.validate(cardset.len())?;
        if archetypes.is_empty() {
            return Err(Error::invalid("opponent suite needs at least one deck"));
        }
        let decks = archetypes
            .iter()
            .enumerate()
            .map(|(idx, arch)| {
                let mut rng = rng::derived_stream(seed, &[tag::SUITE, idx as u64]);
                let weights: Vec<f64> = cardset.cards().iter().map(|c| arch.weight(c.cost)).collect();
                let mut counts = vec![0u32; cardset.len()];
                let mut placed = 0;
                while placed < constraints.deck_size {
                    let total: f64 = weights
                        .iter()
                        .zip(&counts)
                        .filter(|(_, &n)| n < constraints.max_copies)
                        .map(|(w, _)| w)
                        .sum();
                    let mut u = rng.gen::<f64>() * total;
                    let mut chosen = None;
                    for (id, (w, &n)) in weights.iter().zip(&counts).enumerate() {
                        if n >= constraints.max_copies {
                            continue;
                        }
                        chosen = Some(id);
                        if u < *w {
                            break;
                        }
                        u -= w;
                    }
                    let id = chosen.expect("capacity checked by constraints");
                    counts[id] += 1;
                    placed += 1;
                }
                DeckGenome::new(counts, constraints)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { decks })
    }

    pub fn default_for(cardset: &CardSet, constraints: &DeckConstraints, seed: u64) -> Result<Self> {
        Self::generate(cardset, constraints, &Self::DEFAULT_ARCHETYPES, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalConfig {
    pub games_per_opponent: usize,
    pub base_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            games_per_opponent: 20,
            base_seed: 0,
        }
    }
}

/// Plays `games_per_opponent` games against every opponent (opponent-major,
/// game-minor) and aggregates objective, measures and ancillary data.
/// `eval_seed` is mixed into every game seed.
pub fn evaluate_deck(
    deck: &DeckGenome,
    cardset: &CardSet,
    suite: &OpponentSuite,
    config: &EvalConfig,
    rules: &GameRules,
    eval_seed: u64,
) -> Result<EvaluationResult> {
    if config.games_per_opponent == 0 {
        return Err(Error::invalid("games_per_opponent must be >= 1"));
    }
    if deck.len() != cardset.len() {
        return Err(Error::invalid("deck does not match the card set"));
    }
    let (mut diff, mut turns, mut hand, mut wins) = (0.0, 0.0, 0.0, 0.0);
    let (mut dmg, mut drawn, mut spent, mut wasted) = (0.0, 0.0, 0.0, 0.0);
    for (o, opp) in suite.decks.iter().enumerate() {
        for g in 0..config.games_per_opponent {
            let seed = rng::derive_seed(config.base_seed, &[tag::GAME, eval_seed, o as u64, g as u64]);
            let rec = play_game(cardset, deck, opp, rules, seed);
            diff += rec.final_health_diff;
            turns += rec.turns as f64;
            hand += rec.mean_hand_size_a();
            if rec.winner == Winner::PlayerA {
                wins += 1.0;
            }
            dmg += rec.damage_dealt_a as f64;
            drawn += rec.cards_drawn_a as f64;
            spent += rec.mana_spent_a as f64;
            wasted += rec.mana_wasted_a as f64;
        }
    }
    let n = (suite.decks.len() * config.games_per_opponent) as f64;
    let stats = deck_static_stats(deck, cardset);
    Ok(EvaluationResult {
        f: diff / n,
        m: [turns / n, hand / n],
        alpha: Some(AncillaryData {
            win_percentage: wins / n,
            total_damage: dmg / n,
            cards_drawn: drawn / n,
            mana_spent: spent / n,
            mana_wasted: wasted / n,
            mana_sum: stats.mana_sum,
            mana_variance: stats.mana_variance,
            minion_count: stats.minion_count as f64,
            spell_count: stats.spell_count as f64,
        }),
    })
}

/// Average turns in `[6, 9]` by average hand size in `[3, 8]`, 20 x 20. Greedy
/// MiniCard games are short races, so the reachable region is narrow.
pub fn default_measure_space() -> MeasureSpace {
    MeasureSpace::new([
        MeasureDim { lower: 6.0, upper: 9.0, resolution: 20 },
        MeasureDim { lower: 3.0, upper: 8.0, resolution: 20 },
    ])
    .expect("static bounds are valid")
}

/// Ground-truth evaluator backed by the simulator.
#[derive(Debug, Clone)]
pub struct MiniCardEvaluator {
    pub cardset: CardSet,
    pub suite: OpponentSuite,
    pub config: EvalConfig,
    pub rules: GameRules,
}

impl Evaluator for MiniCardEvaluator {
    fn evaluate(&self, genome: &DeckGenome, seed: u64) -> Result<EvaluationResult> {
        evaluate_deck(genome, &self.cardset, &self.suite, &self.config, &self.rules, seed)
    }

    fn has_ancillary(&self) -> bool {
        true
    }
}
