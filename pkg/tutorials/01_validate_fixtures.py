"""Run the nine constraint validators on reference and faulty models.

Each faulty model breaks a known subset of the constraints. The report
lists which checks failed and a witness state for each failure.
"""

from cannlab.model import (
    mooney_rivlin,
    negative_weight_fixture,
    neo_hookean,
    rawf_fixture,
    sine_fixture,
    skew_fixture,
    softplus_raw_fixture,
)
from cannlab.validators import ToleranceConfig, validate_all

# a coarser ellipticity sweep keeps this walk-through quick
tol = ToleranceConfig(grid_n=20, n_dirs=80)

models = {
    "neo_hookean": neo_hookean(),
    "mooney_rivlin": mooney_rivlin(),
    "raw F33 input": rawf_fixture(),
    "sine activation": sine_fixture(),
    "unshifted softplus": softplus_raw_fixture(),
    "negative weight": negative_weight_fixture(),
    "skew stress term": skew_fixture(),
}

for name, model in models.items():
    report = validate_all(model, tol)
    failed = ", ".join(c.value for c in report.failed) or "none"
    print(f"{name:<20} {report.n_passed}/9 passed; failed: {failed}")

# witness for one failure
v = validate_all(sine_fixture(), tol).verdicts
ell = [x for x in v.values() if x.id.value == "ellipticity"][0]
print("\nsine ellipticity witness:", ell.witness["state"], "value", f"{ell.witness['value']:.3e}")
