//! The discrete deck search space.
//!
//! A deck is a [`DeckGenome`]: a copy-count per card of a [`CardSet`], with at
//! most `max_copies` of any card and exactly `deck_size` cards in total.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;

use crate::rng::{self, tag};
use crate::{Error, Result};

pub const DEFAULT_DECK_SIZE: u32 = 30;
pub const DEFAULT_MAX_COPIES: u32 = 2;
pub const DEFAULT_GEOMETRIC_P: f64 = 0.5;
pub const MAX_CARD_COST: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CardKind {
    Minion { attack: u32, health: u32 },
    Spell { damage: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Card {
    pub id: usize,
    pub cost: u32,
    pub kind: CardKind,
}

impl Card {
    pub fn is_minion(&self) -> bool {
        matches!(self.kind, CardKind::Minion { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CardSet {
    cards: Vec<Card>,
    pub seed: u64,
}

impl CardSet {
    /// Builds a card set from explicit cards. Ids must be `0..len` in order.
    pub fn from_cards(cards: Vec<Card>, seed: u64) -> Result<Self> {
        if cards.len() < 2 {
            return Err(Error::invalid("a card set needs at least 2 cards"));
        }
        for (i, card) in cards.iter().enumerate() {
            if card.id != i {
                return Err(Error::invalid(format!("card at position {i} has id {}", card.id)));
            }
            if card.cost > MAX_CARD_COST {
                return Err(Error::invalid(format!("card {i} costs more than {MAX_CARD_COST}")));
            }
            if let CardKind::Minion { health, .. } = card.kind {
                if health == 0 {
                    return Err(Error::invalid(format!("minion {i} has zero health")));
                }
            }
        }
        Ok(Self { cards, seed })
    }

    pub fn len(&self) -> usize {
        self.cards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cards.is_empty()
    }

    pub fn cards(&self) -> &[Card] {
        &self.cards
    }

    pub fn card(&self, id: usize) -> &Card {
        &self.cards[id]
    }

    /// Serializes as CSV with header `id,kind,cost,attack,health,damage`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,kind,cost,attack,health,damage\n");
        for c in &self.cards {
            match c.kind {
                CardKind::Minion { attack, health } => {
                    out.push_str(&format!("{},minion,{},{},{},\n", c.id, c.cost, attack, health))
                }
                CardKind::Spell { damage } => {
                    out.push_str(&format!("{},spell,{},,,{}\n", c.id, c.cost, damage))
                }
            }
        }
        out
    }

    pub fn from_csv(text: &str, seed: u64) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "id,kind,cost,attack,health,damage" => {}
            other => return Err(Error::parse("cardset csv", format!("bad header {other:?}"))),
        }
        let num = |s: &str, line: usize| -> Result<u32> {
            s.trim()
                .parse::<u32>()
                .map_err(|e| Error::parse("cardset csv", format!("line {line}: {e}")))
        };
        let mut cards = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::parse("cardset csv", format!("line {}: expected 6 fields", n + 2)));
            }
            let id = num(f[0], n + 2)? as usize;
            let cost = num(f[2], n + 2)?;
            let kind = match f[1].trim() {
                "minion" => CardKind::Minion {
                    attack: num(f[3], n + 2)?,
                    health: num(f[4], n + 2)?,
                },
                "spell" => CardKind::Spell {
                    damage: num(f[5], n + 2)?,
                },
                k => return Err(Error::parse("cardset csv", format!("unknown kind {k}"))),
            };
            cards.push(Card { id, cost, kind });
        }
        Self::from_cards(cards, seed)
    }
}

/// Generates a MiniCard card set.
///
/// Draws come from a ChaCha8 stream seeded by `(seed, size)`. Per card, in
/// order: cost uniform in `1..=10`; minion with probability 0.7; for minions
/// attack `cost + u` (u in {-1,0,1}, floored at 0) and health `cost + v`
/// (v in {0,1,2}); spells deal `cost + 1` damage.
pub fn generate_cardset(seed: u64, size: usize) -> Result<CardSet> {
    if size < 2 {
        return Err(Error::invalid(format!("cardset size must be >= 2, got {size}")));
    }
    let mut rng = rng::derived_stream(seed, &[tag::CARDSET, size as u64]);
    let cards = (0..size)
        .map(|id| {
            let cost: u32 = rng.gen_range(1..=MAX_CARD_COST);
            let kind = if rng.gen_bool(0.7) {
                let u: i64 = rng.gen_range(-1..=1);
                let v: u32 = rng.gen_range(0..=2);
                CardKind::Minion {
                    attack: (cost as i64 + u).max(0) as u32,
                    health: cost + v,
                }
            } else {
                CardKind::Spell { damage: cost + 1 }
            };
            Card { id, cost, kind }
        })
        .collect();
    CardSet::from_cards(cards, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeckConstraints {
    pub deck_size: u32,
    pub max_copies: u32,
}

impl Default for DeckConstraints {
    fn default() -> Self {
        Self {
            deck_size: DEFAULT_DECK_SIZE,
            max_copies: DEFAULT_MAX_COPIES,
        }
    }
}

impl DeckConstraints {
    pub fn validate(&self, cardset_size: usize) -> Result<()> {
        if self.deck_size == 0 || self.max_copies == 0 {
            return Err(Error::invalid("deck_size and max_copies must be >= 1"));
        }
        if self.deck_size as usize > cardset_size * self.max_copies as usize {
            return Err(Error::invalid(format!(
                "deck_size {} exceeds capacity {} x {}",
                self.deck_size, cardset_size, self.max_copies
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DeckGenome {
    counts: Vec<u32>,
}

impl DeckGenome {
    pub fn new(counts: Vec<u32>, constraints: &DeckConstraints) -> Result<Self> {
        let genome = Self { counts };
        genome.check(constraints)?;
        Ok(genome)
    }

    pub fn check(&self, constraints: &DeckConstraints) -> Result<()> {
        if let Some(i) = self.counts.iter().position(|&c| c > constraints.max_copies) {
            return Err(Error::invalid(format!(
                "card {i} has {} copies, max is {}",
                self.counts[i], constraints.max_copies
            )));
        }
        let total = self.total();
        if total != constraints.deck_size {
            return Err(Error::invalid(format!(
                "deck has {total} cards, expected {}",
                constraints.deck_size
            )));
        }
        Ok(())
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    /// Card ids of every instance in the deck, ascending.
    pub fn instances(&self) -> Vec<usize> {
        self.counts
            .iter()
            .enumerate()
            .flat_map(|(id, &c)| std::iter::repeat_n(id, c as usize))
            .collect()
    }

    pub fn l1_distance(&self, other: &DeckGenome) -> u32 {
        self.counts
            .iter()
            .zip(&other.counts)
            .map(|(a, b)| a.abs_diff(*b))
            .sum()
    }

    pub fn join(&self, sep: &str) -> String {
        self.counts
            .iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join(sep)
    }

    /// Parses a count list separated by `,` or `;`. Constraints are not checked.
    pub fn parse_counts(text: &str) -> Result<Self> {
        let counts = text
            .trim()
            .split([',', ';'])
            .map(|s| {
                s.trim()
                    .parse::<u32>()
                    .map_err(|e| Error::parse("deck genome", format!("{s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { counts })
    }
}

impl fmt::Display for DeckGenome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.join(","))
    }
}

impl FromStr for DeckGenome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse_counts(s)
    }
}

/// Uniform random deck: pick ids uniformly, keep a pick while the card has
/// spare copies, until `deck_size` cards are placed.
pub fn random_deck<R: Rng + ?Sized>(
    cardset_size: usize,
    constraints: &DeckConstraints,
    rng: &mut R,
) -> DeckGenome {
    let mut counts = vec![0u32; cardset_size];
    let mut placed = 0;
    while placed < constraints.deck_size {
        let id = rng.gen_range(0..cardset_size);
        if counts[id] < constraints.max_copies {
            counts[id] += 1;
            placed += 1;
        }
    }
    DeckGenome { counts }
}

/// Draws `k` from a geometric distribution on `1..` with success probability
/// `p`, truncated (and renormalized) at `max_k` by rejection.
pub fn sample_k_geometric<R: Rng + ?Sized>(rng: &mut R, p: f64, max_k: u32) -> Result<u32> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("geometric p must be in (0,1), got {p}")));
    }
    if max_k == 0 {
        return Err(Error::invalid("max_k must be >= 1"));
    }
    'retry: loop {
        let mut k = 1;
        while !rng.gen_bool(p) {
            k += 1;
            if k > max_k {
                continue 'retry;
            }
        }
        return Ok(k);
    }
}

/// Replaces exactly `k` card instances of `parent`: removes `k` instances
/// uniformly without replacement, then inserts `k` uniform card ids,
/// redrawing any id already at `max_copies`.
pub fn replace_cards<R: Rng + ?Sized>(
    parent: &DeckGenome,
    k: u32,
    constraints: &DeckConstraints,
    rng: &mut R,
) -> DeckGenome {
    let mut counts = parent.counts.clone();
    let instances = parent.instances();
    let k = (k as usize).min(instances.len());
    for pos in index::sample(rng, instances.len(), k).into_iter() {
        counts[instances[pos]] -= 1;
    }
    let mut inserted = 0;
    while inserted < k {
        let id = rng.gen_range(0..counts.len());
        if counts[id] < constraints.max_copies {
            counts[id] += 1;
            inserted += 1;
        }
    }
    DeckGenome { counts }
}

/// The perturbation operator: `k ~ TruncGeom(p, deck_size)` replacements.
pub fn perturb_deck<R: Rng + ?Sized>(
    parent: &DeckGenome,
    constraints: &DeckConstraints,
    geometric_p: f64,
    rng: &mut R,
) -> Result<DeckGenome> {
    let k = sample_k_geometric(rng, geometric_p, constraints.deck_size)?;
    Ok(replace_cards(parent, k, constraints, rng))
}

/// Bag-of-Cards encoding: the copy counts as reals.
pub fn encode_bag_of_cards(deck: &DeckGenome) -> Vec<f64> {
    deck.counts.iter().map(|&c| c as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeckStats {
    pub mana_sum: f64,
    /// Population variance of the instance costs.
    pub mana_variance: f64,
    pub minion_count: u32,
    pub spell_count: u32,
}

pub fn deck_static_stats(deck: &DeckGenome, cardset: &CardSet) -> DeckStats {
    let mut n = 0u32;
    let mut sum = 0.0;
    let mut minions = 0;
    for id in deck.instances() {
        let card = cardset.card(id);
        n += 1;
        sum += card.cost as f64;
        if card.is_minion() {
            minions += 1;
        }
    }
    let mean = if n > 0 { sum / n as f64 } else { 0.0 };
    let var = if n > 0 {
        deck.instances()
            .iter()
            .map(|&id| (cardset.card(id).cost as f64 - mean).powi(2))
            .sum::<f64>()
            / n as f64
    } else {
        0.0
    };
    DeckStats {
        mana_sum: sum,
        mana_variance: var,
        minion_count: minions,
        spell_count: n - minions,
    }
}

/// A card set, deck constraints and perturbation parameter bundled together.
#[derive(Debug, Clone)]
pub struct DeckSpace {
    pub cardset: CardSet,
    pub constraints: DeckConstraints,
    pub geometric_p: f64,
}

impl DeckSpace {
    pub fn new(cardset: CardSet, constraints: DeckConstraints, geometric_p: f64) -> Result<Self> {
        constraints.validate(cardset.len())?;
        if !(geometric_p > 0.0 && geometric_p < 1.0) {
            return Err(Error::invalid(format!("geometric p must be in (0,1), got {geometric_p}")));
        }
        Ok(Self {
            cardset,
            constraints,
            geometric_p,
        })
    }

    pub fn cardset_size(&self) -> usize {
        self.cardset.len()
    }

    pub fn random_deck<R: Rng + ?Sized>(&self, rng: &mut R) -> DeckGenome {
        random_deck(self.cardset.len(), &self.constraints, rng)
    }

    pub fn perturb<R: Rng + ?Sized>(&self, parent: &DeckGenome, rng: &mut R) -> DeckGenome {
        perturb_deck(parent, &self.constraints, self.geometric_p, rng)
            .expect("geometric p validated at construction")
    }

    pub fn parse_deck(&self, text: &str) -> Result<DeckGenome> {
        let deck = DeckGenome::parse_counts(text)?;
        if deck.len() != self.cardset.len() {
            return Err(Error::invalid(format!(
                "deck has {} entries, cardset has {} cards",
                deck.len(),
                self.cardset.len()
            )));
        }
        deck.check(&self.constraints)?;
        Ok(deck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn defaults() -> DeckConstraints {
        DeckConstraints::default()
    }

    #[test]
    fn cardset_is_deterministic_and_seed_sensitive() {
        let a = generate_cardset(7, 40).unwrap();
        let b = generate_cardset(7, 40).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let c = generate_cardset(8, 40).unwrap();
        assert_ne!(a.cards(), c.cards());
        assert!(matches!(generate_cardset(0, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn cardset_respects_attribute_rules() {
        let cs = generate_cardset(3, 500).unwrap();
        let mut minions = 0;
        for c in cs.cards() {
            assert!((1..=10).contains(&c.cost));
            match c.kind {
                CardKind::Minion { attack, health } => {
                    minions += 1;
                    assert!(attack + 1 >= c.cost && attack <= c.cost + 1);
                    assert!(health >= c.cost && health <= c.cost + 2);
                }
                CardKind::Spell { damage } => assert_eq!(damage, c.cost + 1),
            }
        }
        let frac = minions as f64 / 500.0;
        assert!((frac - 0.7).abs() < 0.07, "minion fraction {frac}");
    }

    #[test]
    fn cardset_csv_round_trip() {
        let cs = generate_cardset(11, 40).unwrap();
        let text = cs.to_csv();
        assert!(text.starts_with("id,kind,cost,attack,health,damage\n"));
        assert_eq!(CardSet::from_csv(&text, 11).unwrap(), cs);
    }

    #[test]
    fn constraints_validation() {
        assert!(defaults().validate(15).is_ok());
        assert!(defaults().validate(14).is_err());
        assert!(DeckConstraints { deck_size: 0, max_copies: 2 }.validate(40).is_err());
    }

    #[test]
    fn pigeonhole_deck_is_forced() {
        let mut rng = stream(1);
        let deck = random_deck(15, &defaults(), &mut rng);
        assert!(deck.counts().iter().all(|&c| c == 2));
    }

    #[test]
    fn random_deck_marginal_is_uniform() {
        // Expected count per id is 30/40 = 0.75 per draw; over 10^4 draws the
        // per-id total is ~7500 with sd well under 100.
        let mut rng = stream(2);
        let mut totals = vec![0u64; 40];
        for _ in 0..10_000 {
            let d = random_deck(40, &defaults(), &mut rng);
            for (t, &c) in totals.iter_mut().zip(d.counts()) {
                *t += c as u64;
            }
        }
        let expected = 7500.0;
        let chi2: f64 = totals
            .iter()
            .map(|&t| (t as f64 - expected).powi(2) / expected)
            .sum();
        // 39 dof; the 0.999 quantile is about 72.
        assert!(chi2 < 72.0, "chi2 {chi2}");
    }

    #[test]
    fn geometric_truncation_and_errors() {
        let mut rng = stream(3);
        for _ in 0..1000 {
            assert_eq!(sample_k_geometric(&mut rng, 0.5, 1).unwrap(), 1);
        }
        assert!(sample_k_geometric(&mut rng, 0.0, 5).is_err());
        assert!(sample_k_geometric(&mut rng, 1.0, 5).is_err());
        assert!(sample_k_geometric(&mut rng, 0.5, 0).is_err());
    }

    #[test]
    fn geometric_matches_analytic_moments() {
        // Summation oracle for the truncated distribution.
        let p: f64 = 0.5;
        let max_k = 30;
        let w: Vec<f64> = (1..=max_k).map(|k| (1.0 - p).powi(k - 1) * p).collect();
        let z: f64 = w.iter().sum();
        let mean: f64 = w.iter().enumerate().map(|(i, wk)| (i + 1) as f64 * wk / z).sum();
        let p1 = w[0] / z;

        let mut rng = stream(4);
        let n = 100_000;
        let samples: Vec<u32> = (0..n)
            .map(|_| sample_k_geometric(&mut rng, p, max_k as u32).unwrap())
            .collect();
        let emp_p1 = samples.iter().filter(|&&k| k == 1).count() as f64 / n as f64;
        let emp_mean = samples.iter().map(|&k| k as f64).sum::<f64>() / n as f64;
        assert!((emp_p1 - p1).abs() < 0.02, "P(k=1) {emp_p1} vs {p1}");
        assert!((emp_mean - mean).abs() < 0.05, "mean {emp_mean} vs {mean}");
        assert!(samples.iter().all(|&k| (1..=30).contains(&k)));
    }

    #[test]
    fn full_replacement_matches_random_marginal() {
        let c = defaults();
        let mut rng = stream(5);
        let parent = random_deck(40, &c, &mut rng);
        let mut totals = vec![0u64; 40];
        for _ in 0..10_000 {
            let child = replace_cards(&parent, c.deck_size, &c, &mut rng);
            for (t, &n) in totals.iter_mut().zip(child.counts()) {
                *t += n as u64;
            }
        }
        let expected = 7500.0;
        let chi2: f64 = totals
            .iter()
            .map(|&t| (t as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 72.0, "chi2 {chi2}");
    }

    #[test]
    fn perturb_is_deterministic() {
        let c = defaults();
        let parent = random_deck(40, &c, &mut stream(6));
        let a = perturb_deck(&parent, &c, 0.5, &mut stream(77)).unwrap();
        let b = perturb_deck(&parent, &c, 0.5, &mut stream(77)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn encoding_is_a_cast_and_injective() {
        let c = DeckConstraints { deck_size: 3, max_copies: 2 };
        let g = DeckGenome::new(vec![2, 0, 1, 0], &c).unwrap();
        assert_eq!(encode_bag_of_cards(&g), vec![2.0, 0.0, 1.0, 0.0]);

        // Exhaustive enumeration of the 4-card, size-3 space.
        let mut seen = std::collections::HashSet::new();
        let mut n = 0;
        for a in 0..=2u32 {
            for b in 0..=2 {
                for cc in 0..=2 {
                    for d in 0..=2 {
                        if let Ok(g) = DeckGenome::new(vec![a, b, cc, d], &c) {
                            n += 1;
                            let e = encode_bag_of_cards(&g);
                            assert_eq!(e.iter().sum::<f64>(), 3.0);
                            assert!(seen.insert(e.iter().map(|x| x.to_bits()).collect::<Vec<_>>()));
                        }
                    }
                }
            }
        }
        assert_eq!(n, 16);
    }

    #[test]
    fn static_stats() {
        let cards = vec![
            Card { id: 0, cost: 1, kind: CardKind::Minion { attack: 1, health: 1 } },
            Card { id: 1, cost: 3, kind: CardKind::Spell { damage: 4 } },
            Card { id: 2, cost: 5, kind: CardKind::Minion { attack: 5, health: 5 } },
        ];
        let cs = CardSet::from_cards(cards, 0).unwrap();
        let c = DeckConstraints { deck_size: 2, max_copies: 2 };
        let s = deck_static_stats(&DeckGenome::new(vec![1, 1, 0], &c).unwrap(), &cs);
        assert_eq!(s.mana_sum, 4.0);
        assert_eq!(s.mana_variance, 1.0);
        assert_eq!((s.minion_count, s.spell_count), (1, 1));

        let s = deck_static_stats(&DeckGenome::new(vec![0, 0, 2], &c).unwrap(), &cs);
        assert_eq!(s.mana_variance, 0.0);
        assert_eq!(s.mana_sum, 10.0);
    }

    #[test]
    fn genome_text_round_trip() {
        let g = random_deck(40, &defaults(), &mut stream(8));
        assert_eq!(g.to_string().parse::<DeckGenome>().unwrap(), g);
        assert_eq!(DeckGenome::parse_counts(&g.join(";")).unwrap(), g);
    }

    proptest! {
        #[test]
        fn operators_preserve_validity(seed in any::<u64>(), size in 15usize..60, steps in 1usize..40) {
            let c = defaults();
            let mut rng = stream(seed);
            let mut deck = random_deck(size, &c, &mut rng);
            prop_assert!(deck.check(&c).is_ok());
            for _ in 0..steps {
                let child = perturb_deck(&deck, &c, 0.5, &mut rng).unwrap();
                prop_assert!(child.check(&c).is_ok());
                prop_assert!(encode_bag_of_cards(&child).iter().all(|&x| x <= c.max_copies as f64));
                deck = child;
            }
        }

        #[test]
        fn replacement_moves_at_most_2k(seed in any::<u64>(), k in 1u32..=30) {
            let c = defaults();
            let mut rng = stream(seed);
            let parent = random_deck(40, &c, &mut rng);
            let child = replace_cards(&parent, k, &c, &mut rng);
            prop_assert!(parent.l1_distance(&child) <= 2 * k);
        }
    }
}
