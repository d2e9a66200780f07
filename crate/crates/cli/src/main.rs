use std::io::Write;

use clap::Parser;
use scenemem_cli::commands::{run, Cli};

fn main() {
    match run(Cli::parse()) {
        Ok(serde_json::Value::Null) => {}
        Ok(v) => {
            let text = serde_json::to_string_pretty(&v).expect("JSON values serialize");
            // a closed pipe (e.g. `| head`) is not an error worth reporting
            let _ = writeln!(std::io::stdout().lock(), "{text}");
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
