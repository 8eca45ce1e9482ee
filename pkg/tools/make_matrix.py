"""Regenerate the n=32 configuration matrix in configs/matrix/."""

import json
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "configs" / "matrix"


def term(k, cos=0.0, sin=0.0):
    return {"k": k, "cos": cos, "sin": sin}


LAGRANGIANS = {
    1: {
        "mechanical": {"family": "MECHANICAL",
                       "potential": {"terms": [term([1], 1.0), term([2], 0.0, 0.3)]}},
        "drift": {"family": "QUADRATIC_DRIFT",
                  "drift": [{"const": 0.6, "terms": [term([1], 0.0, 0.4)]}]},
    },
    2: {
        "mechanical": {"family": "MECHANICAL",
                       "potential": {"terms": [term([1, 0], 0.7), term([0, 1], 0.4),
                                               term([1, 1], 0.0, 0.1)]}},
        "drift": {"family": "QUADRATIC_DRIFT",
                  "drift": [{"const": 0.5, "terms": [term([0, 1], 0.0, 0.3)]},
                            {"terms": [term([1, 0], 0.3)]}]},
    },
}


def couplings(dim):
    e1 = [1] if dim == 1 else [1, 0]
    e2 = [1] if dim == 1 else [0, 1]
    return {
        "zero": {"family": "ZERO"},
        "separable": {"family": "SEPARABLE",
                      "f": {"terms": [term(e1, 0.5)]},
                      "phi": {"terms": [term(e2, 1.0)]},
                      "G": {"kind": "clamp", "lo": -0.5, "hi": 0.5}},
        "convolution": {"family": "CONVOLUTION", "kappa": 1.0,
                        "kernel": {"gaussian": {"amplitude": 0.5, "width": 0.25, "order": 6}}},
    }


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for dim in (1, 2):
        for lname, lag in LAGRANGIANS[dim].items():
            for cname, cpl in couplings(dim).items():
                name = f"{lname}_{cname}_{dim}d"
                doc = {
                    "name": name,
                    "grid": {"dim": dim, "n": 32},
                    "lagrangian": lag,
                    "coupling": cpl,
                    "solver": {"tau": 0.1, "window_D": 3.0, "max_iters": 50},
                }
                (OUT / f"{name}.json").write_text(json.dumps(doc, indent=2) + "\n")


if __name__ == "__main__":
    main()
