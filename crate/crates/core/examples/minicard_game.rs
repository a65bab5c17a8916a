// Usage: cargo run --release --example minicard_game
//
// Plays one traced game between two random decks, then scores a deck against
// the opponent suite.

use dsame::deck::DeckGenome;
use dsame::qd::Evaluator;
use dsame::rng::stream;
use dsame::settings::Settings;
use dsame::sim::play_game_with_shuffles;

fn main() -> dsame::Result<()> {
    let settings = Settings::default();
    let problem = settings.problem()?;
    let evaluator = settings.evaluator(&problem)?;
    let cards = &problem.decks.cardset;

    for card in cards.cards().iter().take(5) {
        println!("{card:?}");
    }

    let mut rng = stream(3);
    let a = problem.decks.random_deck(&mut rng);
    let b = problem.decks.random_deck(&mut rng);
    let mut trace = Vec::new();
    let record = play_game_with_shuffles(cards, &a, &b, &settings.rules(), 10, 20, Some(&mut trace));
    for line in trace.iter().take(12) {
        println!("  {line}");
    }
    println!("  ... {} more lines", trace.len().saturating_sub(13));
    println!("  {}", trace.last().unwrap());
    println!("{:?} after {} rounds, health difference {}", record.winner, record.turns, record.final_health_diff);

    let deck: DeckGenome = problem.decks.parse_deck(&a.join(","))?;
    let r = evaluator.evaluate(&deck, 0)?;
    println!("vs suite: f = {:+.2}, turns = {:.2}, hand = {:.2}", r.f, r.m[0], r.m[1]);
    if let Some(alpha) = r.alpha {
        println!("win rate {:.2}, damage {:.1}, mana wasted {:.1}", alpha.win_percentage, alpha.total_damage, alpha.mana_wasted);
    }
    Ok(())
}
