use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(value) = std::env::var("UWB_THREADS") {
        let threads = match value.parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => {
                eprintln!("error: UWB_THREADS must be a positive integer, got {value:?}");
                return ExitCode::from(2);
            }
        };
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot start {threads} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    ExitCode::from(uwb_core::cli::run_command(std::env::args_os()) as u8)
}
