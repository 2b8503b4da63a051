"""
Main CLI application entry point
"""
import sys
from pathlib import Path

import typer

# Add the parent directory to Python path
sys.path.append(str(Path(__file__).parent))

# Import commands and middleware
from api.commands import create_commands
from api.middleware import setup_middleware

# Create Typer app
app = typer.Typer(
    name="levy-im",
    help="Random inertial manifolds for evolution equations driven by alpha-stable Levy noise",
    no_args_is_help=True,
    add_completion=False,
)

# Setup middleware (logging, error handling)
setup_middleware(app)

# Register commands
create_commands(app)


if __name__ == "__main__":
    app()
