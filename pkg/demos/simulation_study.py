"""
A small simulation study
========================

Fit both estimators on a handful of replicates of each scenario and print
the coefficient medians. Raise ``N_REPLICATES`` to 200 for the full study;
``ppmide simulate`` does the same from the shell and writes CSV files.
"""

import numpy as np

from ppmide.simulation import preset, run_scenario, selection_frequencies, summary_rows

N_REPLICATES = 5

for name in ("none", "light", "heavy"):
    table = run_scenario(preset(name), n_replicates=N_REPLICATES)
    print(f"\n{name}: {len(table.failures)} failed replicates")
    rows = summary_rows(table)
    for est in ("MLE", "MIDE"):
        med = [r[4] for r in rows if r[1] == est]
        print(f"  {est:4s} median beta {np.round(med, 2)}")
    freq = ", ".join(f"{t}: {f:.2f}" for t, f in selection_frequencies(table))
    print("  selected tau frequencies:", freq)
