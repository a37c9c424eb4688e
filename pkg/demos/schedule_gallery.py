"""Print and export one sampled schedule per family.

Writes demo_out/schedule_gallery/<family>.csv with (fraction, multiplier)
rows, ready to plot with any tool.
"""

from pathlib import Path

import numpy as np

from lrslab.schedules import FAMILIES, SEARCH_SPACE, eval_shape, sample_shape

OUT = Path("demo_out/schedule_gallery")
PROBE = (0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0)


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(7)
    grid = np.linspace(0.0, 1.0, 401)

    header = "family     " + "".join(f"  f={f:<5g}" for f in PROBE)
    print(header)
    print("-" * len(header))
    for family in FAMILIES:
        shape = sample_shape(family, rng)
        vals = eval_shape(shape, np.array(PROBE))
        print(f"{family:<11}" + "".join(f"  {v:7.3f}" for v in vals))

        curve = eval_shape(shape, grid)
        path = OUT / f"{family}.csv"
        with path.open("w") as fh:
            fh.write("fraction,multiplier\n")
            for f, v in zip(grid, curve):
                fh.write(f"{f},{v}\n")

    print()
    print("Parameter spaces:")
    for family, specs in SEARCH_SPACE.items():
        names = ", ".join(s.name for s in specs)
        unit = "param" if len(specs) == 1 else "params"
        print(f"  {family:<8} ({len(specs)} {unit}): {names}")
    print(f"\nCurves written to {OUT}/")


if __name__ == "__main__":
    main()
