//! Protocol test double: serves `MockBackend` on stdio or a TCP port.

use std::io::{self, BufReader};
use std::net::TcpListener;

use clap::{Parser, ValueEnum};
use tsa_core::tagger::protocol::{serve, PROTOCOL_VERSION};
use tsa_core::tagger::{MockBackend, MockMode};

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Words,
    Pieces,
    Uniform,
}

#[derive(Parser)]
#[command(
    name = "tsa-mock-tagger",
    about = "Memorizing tagger speaking the tagger wire protocol"
)]
struct Args {
    #[arg(long, value_enum, default_value = "words")]
    mode: Mode,
    /// Version announced in the handshake.
    #[arg(long, default_value_t = PROTOCOL_VERSION)]
    protocol_version: u32,
    /// Listen on this address and serve connections one at a time.
    #[arg(long)]
    listen: Option<String>,
}

fn main() -> io::Result<()> {
    let args = Args::parse();
    let mode = match args.mode {
        Mode::Words => MockMode::Words,
        Mode::Pieces => MockMode::Pieces,
        Mode::Uniform => MockMode::Uniform,
    };
    let backend = || MockBackend::new(mode).with_version(args.protocol_version);
    match args.listen {
        None => serve(&mut backend(), io::stdin().lock(), io::stdout().lock()),
        Some(addr) => {
            let listener = TcpListener::bind(&addr)?;
            eprintln!("listening on {}", listener.local_addr()?);
            for stream in listener.incoming() {
                let stream = stream?;
                let reader = BufReader::new(stream.try_clone()?);
                if let Err(e) = serve(&mut backend(), reader, stream) {
                    eprintln!("connection closed: {e}");
                }
            }
            Ok(())
        }
    }
}
