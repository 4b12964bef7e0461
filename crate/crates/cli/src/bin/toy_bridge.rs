//! Serves the toy backend over the framed stdin/stdout protocol.

use std::io::{self, BufReader, BufWriter, Write};
use std::process::ExitCode;

use clap::Parser;
use pcawalk_core::backend::protocol::{serve, GenerateReply, RequestHandler, ToyHandler};
use pcawalk_core::backend::ToyConfig;
use serde_json::Value;

#[derive(Parser)]
#[command(name = "toy-bridge", about = "Toy generator/embedder speaking the backend protocol")]
struct Args {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 16)]
    embed_dim: usize,
    /// Answer generate requests with an error after this many (fault injection)
    #[arg(long)]
    fail_after: Option<usize>,
}

struct Bridge {
    toy: ToyHandler,
    remaining: Option<usize>,
}

impl RequestHandler for Bridge {
    fn hello(&mut self, version: u64, dim: u64, embed_dim: u64) -> Result<Value, String> {
        self.toy.hello(version, dim, embed_dim)
    }

    fn generate(&mut self, id: &str, latent: Vec<f64>) -> Result<GenerateReply, String> {
        match &mut self.remaining {
            Some(0) => return Err("generator unavailable".into()),
            Some(n) => *n -= 1,
            None => {}
        }
        self.toy.generate(id, latent)
    }

    fn embed(&mut self, id: &str) -> Result<Vec<f64>, String> {
        self.toy.embed(id)
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let toy = match ToyHandler::new(ToyConfig {
        seed: args.seed,
        dim: args.dim,
        embed_dim: args.embed_dim,
    }) {
        Ok(h) => h,
        Err(e) => {
            eprintln!("toy-bridge: {e}");
            return ExitCode::from(2);
        }
    };
    let mut bridge = Bridge {
        toy,
        remaining: args.fail_after,
    };
    let mut reader = BufReader::new(io::stdin().lock());
    let mut writer = BufWriter::new(io::stdout().lock());
    let result = serve(&mut reader, &mut writer, &mut bridge).and_then(|()| writer.flush());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("toy-bridge: {e}");
            ExitCode::from(1)
        }
    }
}
