use std::path::PathBuf;
use std::process::ExitCode;

use g2flow::commands::{
    cmd_calibrate, cmd_check, cmd_flow, cmd_pullback, cmd_symbol, CalibrateArgs, CheckArgs,
    FlowArgs, FlowStatus, PullbackArgs, SymbolArgs,
};

const USAGE: &str = "\
g2flow: flows and checks for closed G2-structures on flat 7-tori

USAGE:
  g2flow calibrate-a --seed N [--samples K] [--n RES] [--axes 1,2] [--out DIR]
  g2flow check --suite variation|symbol|identities --seed N [--out DIR]
  g2flow symbol [--lambda L] [--mu M] --xi x1,...,x7 [--seed N] [--out DIR]
  g2flow flow --config PATH.json [--out DIR]
  g2flow pullback --run DIR [--out DIR]

Common flags:
  --out DIR      output directory (default g2flow-out); nothing is written
                 outside it
  --threads N    accepted for compatibility; execution is single threaded

Exit codes: 0 success, 1 configuration error, 2 flow breakdown,
3 check-suite failure.
";

struct Flags {
    map: Vec<(String, String)>,
}

impl Flags {
    fn parse(args: &[String]) -> Result<Self, String> {
        let mut map = Vec::new();
        let mut i = 0;
        while i < args.len() {
            let key = &args[i];
            if !key.starts_with("--") {
                return Err(format!("unexpected argument '{key}'"));
            }
            let value = args
                .get(i + 1)
                .cloned()
                .ok_or(format!("flag {key} needs a value"))?;
            map.push((key[2..].to_string(), value));
            i += 2;
        }
        Ok(Self { map })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.map
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn require(&self, key: &str) -> Result<&str, String> {
        self.get(key)
            .ok_or(format!("missing required flag --{key}"))
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, String> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| format!("--{key}: bad number '{v}'")),
        }
    }

    fn u64_required(&self, key: &str) -> Result<u64, String> {
        self.require(key)?
            .parse()
            .map_err(|_| format!("--{key}: expected an integer"))
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize, String> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| format!("--{key}: expected an integer")),
        }
    }

    fn out(&self) -> PathBuf {
        PathBuf::from(self.get("out").unwrap_or("g2flow-out"))
    }

    fn unknown_check(&self, allowed: &[&str]) -> Result<(), String> {
        for (k, _) in &self.map {
            if !allowed.contains(&k.as_str()) {
                return Err(format!("unknown flag --{k}"));
            }
        }
        Ok(())
    }
}

fn parse_axes(text: &str) -> Result<Vec<u8>, String> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<u8>()
                .map_err(|_| format!("bad axis '{t}'"))
        })
        .collect()
}

fn parse_xi(text: &str) -> Result<[f64; 7], String> {
    let parts: Vec<_> = text.split(',').collect();
    if parts.len() != 7 {
        return Err("--xi needs exactly seven comma-separated numbers".into());
    }
    let mut xi = [0.0; 7];
    for (i, p) in parts.iter().enumerate() {
        xi[i] = p
            .trim()
            .parse()
            .map_err(|_| format!("bad covector entry '{p}'"))?;
    }
    Ok(xi)
}

fn run() -> Result<ExitCode, String> {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let Some(command) = argv.first() else {
        eprint!("{USAGE}");
        return Ok(ExitCode::from(1));
    };
    if matches!(command.as_str(), "--help" | "-h" | "help") {
        print!("{USAGE}");
        return Ok(ExitCode::SUCCESS);
    }
    let flags = Flags::parse(&argv[1..])?;

    match command.as_str() {
        "calibrate-a" => {
            flags.unknown_check(&["seed", "samples", "n", "axes", "out", "threads"])?;
            let args = CalibrateArgs {
                seed: flags.u64_required("seed")?,
                samples: flags.usize_or("samples", 6)?,
                n: flags.usize_or("n", 16)?,
                axes: match flags.get("axes") {
                    Some(a) => parse_axes(a)?,
                    None => vec![1, 2],
                },
                out: flags.out(),
            };
            let line = cmd_calibrate(&args).map_err(|e| e.to_string())?;
            println!("{line}");
            Ok(ExitCode::SUCCESS)
        }
        "check" => {
            flags.unknown_check(&["suite", "seed", "out", "threads"])?;
            let args = CheckArgs {
                suite: flags.require("suite")?.to_string(),
                seed: flags.u64_required("seed")?,
                out: flags.out(),
            };
            let (lines, pass) = cmd_check(&args).map_err(|e| e.to_string())?;
            for line in lines {
                println!("{line}");
            }
            Ok(if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            })
        }
        "symbol" => {
            flags.unknown_check(&["lambda", "mu", "xi", "seed", "out", "threads"])?;
            let args = SymbolArgs {
                lambda: flags.f64_or("lambda", g2core::flow::PARABOLIC_LAMBDA)?,
                mu: flags.f64_or("mu", g2core::flow::PARABOLIC_MU)?,
                xi: parse_xi(flags.require("xi")?)?,
                seed: match flags.get("seed") {
                    Some(v) => v
                        .parse()
                        .map_err(|_| "--seed: expected an integer".to_string())?,
                    None => 1,
                },
                out: flags.out(),
            };
            let output = cmd_symbol(&args).map_err(|e| e.to_string())?;
            print!("{output}");
            Ok(ExitCode::SUCCESS)
        }
        "flow" => {
            flags.unknown_check(&["config", "out", "threads"])?;
            let args = FlowArgs {
                config: PathBuf::from(flags.require("config")?),
                out: flags.out(),
            };
            match cmd_flow(&args).map_err(|e| e.to_string())? {
                FlowStatus::ReachedEnd => Ok(ExitCode::SUCCESS),
                FlowStatus::Breakdown => Ok(ExitCode::from(2)),
            }
        }
        "pullback" => {
            flags.unknown_check(&["run", "out", "threads"])?;
            let args = PullbackArgs {
                run_dir: PathBuf::from(flags.require("run")?),
                out: flags.out(),
            };
            let line = cmd_pullback(&args).map_err(|e| e.to_string())?;
            println!("{line}");
            Ok(ExitCode::SUCCESS)
        }
        other => Err(format!("unknown subcommand '{other}'")),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("g2flow: {msg}");
            ExitCode::from(1)
        }
    }
}
