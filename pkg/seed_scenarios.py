"""
Scenario seeding script: writes the built-in case-study scenarios and a few
worked examples as JSON files under scenarios/.
"""

import sys
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

from patternflow.models.models import FlowMode, PatternTask, Scenario  # noqa: E402
from patternflow.runner.case_studies import CASE_STUDIES  # noqa: E402
from patternflow.runner.scenarios import dump_scenario  # noqa: E402
from patternflow.utils import atomic_write_text  # noqa: E402

SCENARIO_DIR = Path(__file__).parent / "scenarios"


def example_scenarios() -> dict[str, Scenario]:
    two_patterns = PatternTask.from_rates((0.9, 0.1))
    three_patterns = PatternTask.from_rates((0.9, 0.6, 0.1))
    return {
        "kl_two_patterns": Scenario(task=two_patterns, ref_probs=(0.5, 0.5), beta=0.4, horizon=500.0, step=0.1),
        "sft_three_patterns": Scenario(
            task=three_patterns,
            ref_probs=(0.05, 0.70, 0.25),
            horizon=100.0,
            step=0.1,
            mode=FlowMode.SFT_FLOW,
            p_sft=(0.90, 0.05, 0.05),
        ),
        "sampled_regime1": Scenario(
            task=three_patterns,
            ref_probs=(0.5, 0.3, 0.2),
            horizon=100.0,
            step=0.05,
            record_stride=20,
            seed=7,
            mode=FlowMode.SAMPLED,
        ),
    }


def seed_scenarios() -> int:
    scenarios = {name: study.scenario for name, study in CASE_STUDIES.items()}
    scenarios.update(example_scenarios())

    written = 0
    for name, scenario in scenarios.items():
        path = SCENARIO_DIR / f"{name}.json"
        atomic_write_text(path, dump_scenario(scenario))
        print(f"✅ {path}")
        written += 1
    return written


if __name__ == "__main__":
    try:
        count = seed_scenarios()
        print(f"🎉 Wrote {count} scenario files to {SCENARIO_DIR}")
    except Exception as e:
        print(f"❌ Error writing scenarios: {e}")
        sys.exit(1)
