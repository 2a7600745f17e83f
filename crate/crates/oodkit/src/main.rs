use clap::Parser;
use oodkit::cli::{run, thread_cap, Cli};

fn main() {
    let cli = Cli::parse();
    if let Some(n) = thread_cap() {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if let Err(e) = run(cli) {
        eprintln!("oodkit: {e}");
        std::process::exit(e.exit_code());
    }
}
