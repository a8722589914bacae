"""LLM-driven evolution of interpretable lunar-lander control programs."""

from pathlib import Path

__version__ = "0.1.0"

FIXTURE_DIR = Path(__file__).parent / "fixtures"
REFERENCE_POLICY = FIXTURE_DIR / "reference_policy.pol"


def reference_policy_text() -> str:
    return REFERENCE_POLICY.read_text()
