"""
Published live-model numbers, kept for context in report summaries.

These depend on proprietary model behaviour and are never asserted.
"""

# Posterior mass on "Japanese, then Chinese, then Mexican" after study1-closed.
STUDY1_CLOSED_H2_MASS = {
    'laip-full': 0.484,
    'zero-shot-cot': 0.119,
    'react': 0.037,
    'reflexion': 0.003,
    'zero-shot': 0.012,
}
STUDY1_OPEN_H2_MASS = {
    'laip-full': 0.003,
    'zero-shot': 0.019,
}

MODE_COLUMNS = ('laip-full', 'laip-lcp', 'laip-single-cot', 'generic-cot', 'zero-shot')

# Agreement with the optimal observer over trajectories t1-t10, strongest live model.
STUDY2_PEARSON = dict(zip(MODE_COLUMNS, (0.943, 0.971, 0.796, 0.264, 0.219)))
STUDY2_SPEARMAN = dict(zip(MODE_COLUMNS, (0.923, 0.951, 0.828, 0.294, 0.330)))
STUDY2_JSD = dict(zip(MODE_COLUMNS, (0.015, 0.011, 0.042, 0.109, 0.112)))
STUDY2_HELLINGER = dict(zip(MODE_COLUMNS, (0.118, 0.100, 0.191, 0.324, 0.317)))

# Alice scenario: mass on the true preferences (Indian, Thai) and on plain/comfort food.
STUDY3_TRUE_PREFERENCES = ('H9', 'H10')
STUDY3_PLAIN_FOOD = ('H1', 'H4', 'H19')
STUDY3_TRUE_PREFERENCE_MASS = {'laip-full': 0.371, 'zero-shot': 0.047}
STUDY3_PLAIN_FOOD_MASS = {'zero-shot': 0.622}


def reference_lines(modes):
    """Summary lines for the published numbers relevant to ``modes``."""
    lines = []
    for mode in sorted(set(modes)):
        parts = []
        if mode in STUDY2_PEARSON:
            parts.append(
                f"r={STUDY2_PEARSON[mode]:.3f} rho={STUDY2_SPEARMAN[mode]:.3f} "
                f"JSD={STUDY2_JSD[mode]:.3f} H={STUDY2_HELLINGER[mode]:.3f}"
            )
        if mode in STUDY1_CLOSED_H2_MASS:
            parts.append(f"study1-closed H2 mass={STUDY1_CLOSED_H2_MASS[mode]:.3f}")
        if mode in STUDY3_TRUE_PREFERENCE_MASS:
            parts.append(f"alice H9+H10 mass={STUDY3_TRUE_PREFERENCE_MASS[mode]:.3f}")
        if parts:
            lines.append(f"  {mode}: " + '; '.join(parts))
    return lines
