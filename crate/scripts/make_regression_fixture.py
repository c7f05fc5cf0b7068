"""Freeze an OLS reference fit (statsmodels) for 30 synthetic clusters.

x = total publications per cluster, y = AI4Science publications per cluster.
Records slope, intercept and the pointwise 95% confidence band of the mean,
with and without an intercept.
"""
import json
import sys

import numpy as np
import statsmodels
import statsmodels.api as sm


def fit(x, y, with_const):
    X = sm.add_constant(x) if with_const else x.reshape(-1, 1)
    res = sm.OLS(y, X).fit()
    frame = res.get_prediction(X).summary_frame(alpha=0.05)
    params = list(res.params)
    return {
        "intercept": params[0] if with_const else 0.0,
        "slope": params[1] if with_const else params[0],
        "fitted": frame["mean"].tolist(),
        "lower": frame["mean_ci_lower"].tolist(),
        "upper": frame["mean_ci_upper"].tolist(),
    }


def main(out):
    rng = np.random.default_rng(7)
    x = rng.integers(20, 600, size=30).astype(float)
    y = np.round(0.12 * x + rng.normal(scale=6.0, size=30) + 3).clip(0)
    y[4] = 0.0
    y[11] = np.round(0.4 * x[11])
    doc = {
        "reference": f"statsmodels {statsmodels.__version__}",
        "x": x.tolist(),
        "y": y.tolist(),
        "with_intercept": fit(x, y, True),
        "through_origin": fit(x, y, False),
    }
    with open(out, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1])
