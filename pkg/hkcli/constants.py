from pathlib import Path


BASE_PATH = Path("~/.hkcli").expanduser()

# Env var that caps the denominators of randomly drawn opinions.
ENV_MAX_DENOM = "HK_MAX_DENOM"

DEFAULT_MAX_DENOMINATOR = 1_000_000

# Process exit codes shared by all subcommands.
EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_INPUT_ERROR = 2
EXIT_TRUNCATED = 3
EXIT_DYNAMICS_MISMATCH = 4
