"""
Startup script for the patternflow simulator.
Loads .env, checks the numeric stack and hands the command line to the CLI.
"""

import sys

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


def check_environment() -> bool:
    """Check that the numeric and templating stack imports cleanly."""
    missing = []
    for module in ("numpy", "pydantic", "pydantic_settings", "matplotlib"):
        try:
            __import__(module)
        except ImportError:
            missing.append(module)

    if missing:
        print("❌ Missing required packages:")
        for module in missing:
            print(f"   - {module}")
        print("\n💡 Install them with: pip install -r requirements.txt")
        return False

    return True


def main() -> int:
    """Main entry point."""
    if not check_environment():
        return 1

    # Import here so settings pick up the .env values loaded above
    from patternflow.main import main as cli_main

    return cli_main(sys.argv[1:])


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\n👋 Shutting down patternflow...")
        sys.exit(0)
