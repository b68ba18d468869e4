"""Rewrite tests/golden/<preset>.csv from the current code.

    python tests/regenerate_goldens.py

Run this only after a deliberate change to model output, and review the diff.
"""

from pathlib import Path

from hfqubit import presets
from hfqubit.config import preset_config
from hfqubit.results import atomic_write_text
from hfqubit.runner import compute

GOLDEN_DIR = Path(__file__).with_name("golden")


def main():
    for name in presets.experiment_names():
        path = atomic_write_text(GOLDEN_DIR / f"{name}.csv", compute(preset_config(name)).to_csv())
        print(path)


if __name__ == "__main__":
    main()
