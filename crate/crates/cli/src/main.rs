//! `roadseg` command-line front end.
//!
//! Each subcommand reads its parameters from, in increasing precedence,
//! built-in defaults, the JSON file given by `--config`, and command-line
//! flags. Commands that write to `--out` also write `manifest.txt` there with
//! every resolved parameter; `roadseg replay --manifest <file>` re-runs it.
//!
//! Exit codes: 0 success, 1 input error, 2 internal error.

mod commands;
mod params;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches};
use roadseg::manifest::Manifest;
use roadseg::{Error, Execution};

use commands::{find, is_known_key, CmdResult, COMMANDS};
use params::{load_config, InputError, Kind, Params};

fn cli() -> clap::Command {
    let mut app = clap::Command::new("roadseg")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Weakly supervised road segmentation toolkit")
        .subcommand_required(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .help("JSON file of flat key/value parameters; flags take precedence"),
        )
        .arg(
            Arg::new("sequential")
                .long("sequential")
                .global(true)
                .action(ArgAction::SetTrue)
                .help("Run on a single thread (outputs are identical)"),
        );
    for c in COMMANDS {
        let mut sub = clap::Command::new(c.name).about(c.about);
        for s in c.specs {
            let mut help = s.help.to_string();
            if let Some(d) = s.default {
                help.push_str(&format!(" [default: {d}]"));
            }
            let value_name = match s.kind {
                Kind::Input | Kind::Output => "PATH",
                Kind::Value => "VALUE",
            };
            sub = sub.arg(Arg::new(s.key).long(s.key).value_name(value_name).help(help));
        }
        app = app.subcommand(sub);
    }
    app.subcommand(
        clap::Command::new("replay")
            .about("Re-run a command from its manifest")
            .arg(Arg::new("manifest").long("manifest").value_name("PATH").required(true))
            .arg(
                Arg::new("out")
                    .long("out")
                    .value_name("PATH")
                    .help("write outputs here instead"),
            ),
    )
}

fn flag_layer(m: &ArgMatches, specs: &[params::Spec]) -> BTreeMap<String, String> {
    specs
        .iter()
        .filter_map(|s| m.get_one::<String>(s.key).map(|v| (s.key.to_string(), v.clone())))
        .collect()
}

fn run(m: &ArgMatches) -> CmdResult {
    let exec = if m.get_flag("sequential") {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let file_layer = match m.get_one::<String>("config") {
        Some(path) => load_config(&PathBuf::from(path), &is_known_key)?,
        None => BTreeMap::new(),
    };
    let (name, sub) = m.subcommand().expect("subcommand required");
    if name == "replay" {
        let path = sub.get_one::<String>("manifest").expect("required");
        let manifest = Manifest::read(path).map_err(|e| params::invalid("manifest", e))?;
        let cmd_name = manifest
            .get("command")
            .ok_or_else(|| params::invalid("manifest", "no `command` entry"))?;
        let cmd = find(cmd_name).ok_or_else(|| params::invalid("manifest", format!("unknown command `{cmd_name}`")))?;
        // result.* and iteration.* entries are outputs, not parameters
        let mut recorded: BTreeMap<String, String> = manifest
            .entries()
            .iter()
            .filter(|(k, _)| k != "command" && !k.contains('.'))
            .cloned()
            .collect();
        if let Some(bad) = recorded.keys().find(|k| !cmd.specs.iter().any(|s| s.key == k.as_str())) {
            return Err(params::invalid("manifest", format!("`{bad}` is not a parameter of {cmd_name}")).into());
        }
        if let Some(out) = sub.get_one::<String>("out") {
            recorded.insert("out".into(), out.clone());
        }
        let mut p = Params::resolve(cmd.name, cmd.specs, &[&recorded]);
        return (cmd.run)(&mut p, exec);
    }
    let cmd = find(name).expect("registered subcommand");
    let flags = flag_layer(sub, cmd.specs);
    let mut p = Params::resolve(cmd.name, cmd.specs, &[&file_layer, &flags]);
    (cmd.run)(&mut p, exec)
}

/// 1 for problems with the user's input, 2 for everything else.
fn exit_code(err: &(dyn std::error::Error + 'static)) -> u8 {
    if err.is::<InputError>() {
        return 1;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Divergence { .. }) => 2,
        Some(_) => 1,
        None => 2,
    }
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(&matches))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.as_ref()))
        }
        Err(_) => ExitCode::from(2),
    }
}
