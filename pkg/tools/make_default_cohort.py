"""Regenerate ``src/dnrisk/data/default_cohort.ini`` from the baseline table.

Usage: python3 tools/make_default_cohort.py [target_effect] [min_signal]

Continuous rows list the two group means and the dispersion column as
printed; the dispersion is read as a variance, so the written scale is its
square root. Binary and categorical rows are converted from group counts.
Each of the 38 tabulated features gets a signal that tops its standardised
group difference up to ``target`` (never below ``min_signal``), signed by the
tabulated direction. For continuous rows the difference is counted in pooled
SDs; for binary/categorical rows it is the difference in the last category's
proportion over its pooled Bernoulli SD, and the log-odds shift reaching the
target is found by bisection.
"""
import sys
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, logit

# name, unit, NDRD mean, NDRD dispersion, DN mean, DN dispersion
CONTINUOUS = [
    ("Duration", "years", 8.99, 54.68, 14.26, 84.77),
    ("AC", "cm", 91.98, 93.95, 94.97, 99.70),
    ("SBP", "mmHg", 144.31, 392.02, 153.09, 482.23),
    ("Hb", "g/L", 143.08, 217.92, 135.98, 405.09),
    ("PCV", "%", 42.46, 29.35, 40.16, 37.49),
    ("GLB", "g/L", 27.35, 17.11, 28.93, 19.20),
    ("ALP", "U/L", 74.01, 778.13, 72.67, 490.06),
    ("UA", "umol/L", 327.36, 7740.74, 363.47, 11384.12),
    ("MAU", "mg/L", 31.65, 8476.00, 245.03, 245357.87),
    ("CHOL", "mmol/L", 5.01, 1.24, 5.09, 2.48),
    ("HDL", "mmol/L", 2.57, 0.63, 2.48, 0.76),
    ("ApoAI", "g/L", 1.41, 0.05, 1.38, 0.05),
    ("ApoB", "g/L", 1.00, 0.18, 1.01, 0.12),
    ("INS", "uU/mL", 14.52, 174.52, 21.75, 446.94),
    ("FBG", "mmol/L", 8.61, 8.90, 9.98, 14.94),
    ("GADA", "IU/mL", 6.51, 174.38, 7.46, 251.27),
    ("IGF-1", "ng/mL", 162.61, 3073.97, 151.01, 3473.32),
    ("FT3", "pmol/L", 4.84, 0.82, 4.59, 0.95),
    ("TSH", "mIU/L", 2.15, 4.69, 3.29, 93.22),
    ("Cys", "umol/L", 1.42, 0.70, 1.46, 0.82),
    ("Met", "umol/L", 15.10, 17.93, 14.15, 14.84),
    ("Ser", "umol/L", 45.14, 135.16, 44.89, 118.29),
    ("Tyr", "umol/L", 51.36, 255.07, 46.92, 252.05),
    ("C2", "umol/L", 11.60, 17.59, 12.45, 19.78),
    ("C4DC", "umol/L", 0.38, 0.04, 0.37, 0.03),
    ("C5DC", "umol/L", 0.06, 0.001, 0.07, 0.001),
    ("C24", "umol/L", 0.04, 0.0003, 0.04, 0.0004),
    ("eGFR", "ml/min/1.73m2", 95.81, 504.53, 84.97, 976.44),
]
# name, (yes_0, no_0), (yes_1, no_1); the value 1 means "Yes"
BINARY = [
    ("AGI", (188, 95), (147, 132)),
    ("TZDs", (272, 11), (263, 16)),
    ("Glinides", (260, 23), (271, 8)),
    ("Dpp-4", (266, 17), (257, 22)),
    ("GLP-1", (279, 4), (269, 10)),
    ("SGLT-2", (282, 1), (275, 4)),
    ("Hypertension", (155, 128), (102, 177)),
    ("Lipid_lowering", (169, 14), (133, 46)),
    ("Drink", (275, 8), (268, 11)),
]
HBA1C = (("<7", ">=7"), (88, 195), (44, 235))

NOISE_CLINICAL = ["Age", "Height", "Weight", "DBP", "ALT", "AST", "GGT", "TBIL", "ALB", "TP",
                  "TG", "LDL", "BUN", "Cl", "K", "Na", "Ca", "P", "Mg", "WBC", "RBC", "PLT",
                  "NEUT", "LYM", "MONO", "CRP", "FT4", "TT3", "TT4", "CPEP"]
NOISE_BINARY = ["Sex", "Smoking", "Metformin", "Sulfonylurea", "Insulin_therapy", "ACEI_ARB",
                "CCB", "Aspirin", "Beta_blocker", "Family_history"]
NOISE_METABOLITE = ["Ala", "Arg", "Asn", "Asp", "Cit", "Gln", "Glu", "Gly", "His", "Ile", "Leu",
                    "Lys", "Orn", "Phe", "Pro", "Thr", "Trp", "Val", "Hcy",
                    "C0", "C3", "C4", "C5", "C5OH", "C6", "C8", "C10", "C10_1", "C12", "C14",
                    "C14_1", "C16", "C16OH", "C18", "C18_1", "C18_2", "C20", "C22", "C26",
                    "C3DC", "C6DC"]
MAX_BINARY_SIGNAL = 4.0

SPARSE = ["ProBNP", "Cystatin_C", "Ferritin"]


def g(x):
    return f"{x:.6g}"


def binary_effect(q0, q1):
    qbar = 0.5 * (q0 + q1)
    return (q1 - q0) / np.sqrt(qbar * (1 - qbar))


def binary_signal(q0, q1, target, min_signal):
    sign = 1.0 if q1 >= q0 else -1.0
    if abs(binary_effect(q0, q1)) >= target:
        return sign * min_signal
    f = lambda s: abs(binary_effect(q0, expit(logit(q1) + sign * s))) - target
    if f(MAX_BINARY_SIGNAL) < 0:
        # proportions pushed toward 1 saturate before reaching the target
        return sign * MAX_BINARY_SIGNAL
    return sign * max(brentq(f, 0.0, MAX_BINARY_SIGNAL), min_signal)


def main(target=0.65, min_signal=0.1, seed=20230519):
    rng = np.random.default_rng(7)
    out = [
        "; Default synthetic cohort. Regenerate with tools/make_default_cohort.py.",
        "; The 38 baseline-table features keep their tabulated group means/proportions;",
        "; scales are square roots of the tabulated dispersions, read as variances.",
        f"; `signal` tops each group difference up to a standardised effect of {target:g}",
        "; (see dnrisk.synth for its meaning). The remaining features carry no signal.",
        "",
        "[cohort]", "n_0 = 283", "n_1 = 279", f"seed = {seed}", "target = DN", "",
    ]
    for name, unit, m0, v0, m1, v1 in CONTINUOUS:
        d = (m1 - m0) / np.sqrt(0.5 * (v0 + v1))
        s = (1 if m1 >= m0 else -1) * max(target - abs(d), min_signal)
        out += [f"[feature:{name}]", "kind = continuous", f"unit = {unit}",
                f"loc_0 = {g(m0)}", f"loc_1 = {g(m1)}",
                f"scale_0 = {g(np.sqrt(v0))}   ; table dispersion {v0}",
                f"scale_1 = {g(np.sqrt(v1))}   ; table dispersion {v1}",
                "floor = 0", f"signal = {s:.4f}   ; tabulated effect {d:+.3f} SD", ""]
    cats, c0, c1 = HBA1C
    p0 = c0[0] / sum(c0)
    p1 = c1[0] / sum(c1)
    out += ["[feature:HbA1c]", "kind = categorical", "unit = %", f"categories = {', '.join(cats)}",
            f"probs_0 = {p0:.6f}, {1 - float(f'{p0:.6f}'):.6f}",
            f"probs_1 = {p1:.6f}, {1 - float(f'{p1:.6f}'):.6f}",
            f"signal = {binary_signal(1 - p0, 1 - p1, target, min_signal):.4f}", ""]
    for name, (y0, n0), (y1, n1) in BINARY:
        q0, q1 = y0 / (y0 + n0), y1 / (y1 + n1)
        s = binary_signal(q0, q1, target, min_signal)
        out += [f"[feature:{name}]", "kind = binary", f"p_0 = {q0:.6f}", f"p_1 = {q1:.6f}",
                f"signal = {s:.4f}   ; tabulated effect {binary_effect(q0, q1):+.3f}", ""]
    for name in NOISE_CLINICAL + NOISE_METABOLITE:
        loc = float(np.round(10 ** rng.uniform(-1, 2.5), 3))
        scale = float(np.round(loc * rng.uniform(0.1, 0.35), 4))
        out += [f"[feature:{name}]", "kind = continuous", f"loc = {g(loc)}", f"scale = {g(scale)}",
                "floor = 0", ""]
    for name in NOISE_BINARY:
        p = float(np.round(rng.uniform(0.15, 0.85), 4))
        out += [f"[feature:{name}]", "kind = binary", f"p = {p}", ""]
    for name in SPARSE:
        loc = float(np.round(10 ** rng.uniform(0, 2.5), 3))
        out += [f"[feature:{name}]", "kind = continuous", f"loc = {g(loc)}",
                f"scale = {g(round(loc * 0.3, 4))}", "floor = 0", "missing_rate = 0.6", ""]
    return "\n".join(out)


if __name__ == "__main__":
    args = [float(a) for a in sys.argv[1:3]]
    text = main(*args)
    dest = Path(__file__).resolve().parents[1] / "src" / "dnrisk" / "data" / "default_cohort.ini"
    dest.write_text(text, encoding="utf-8")
    print(f"wrote {dest}")
