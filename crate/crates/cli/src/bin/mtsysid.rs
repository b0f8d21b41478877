use std::process::ExitCode;

use clap::Parser;
use mtsysid_cli::command::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let line = serde_json::json!({"error": {"category": e.category(), "message": e.to_string()}});
            eprintln!("{line}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
