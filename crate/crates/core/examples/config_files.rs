// Usage: cargo run --example config_files

use dsame::settings::Settings;

fn main() {
    let text = "
        # sections and dotted keys can be mixed
        [dsa_me]
        evaluations = 2000
        inner_iterations = 50000

        surrogate.model = linear
        experiment.variants = map_elites, lsa_me
    ";
    let settings = Settings::parse(text).expect("valid");
    println!("{:?}", settings.run_config(1));
    println!("{}", settings.to_flat_text().lines().filter(|l| l.starts_with("dsa_me.")).collect::<Vec<_>>().join("\n"));

    match Settings::parse("[dsa_me]\nbudget = 10\n") {
        Ok(_) => unreachable!(),
        Err(e) => println!("{}", &e.to_string()[..120]),
    }
}
