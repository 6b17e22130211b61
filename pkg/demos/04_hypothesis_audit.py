"""
Auditing the structural hypotheses
==================================

check_hypotheses samples field pairs and times, evaluates each inequality
and reports the tightest supported constant plus any violations. Flipping
the sign of the drift breaks monotonicity and coercivity, and the report
says so.
"""
from timereg.field import Grid1D, laplacian_eigs
from timereg.noise import NoiseSpec
from timereg.operators import DiffusionSpec, DriftSpec, LinearHeat, PLaplaceSpec, check_hypotheses

basis = laplacian_eigs(Grid1D(64))
noise = NoiseSpec(32, 2.0, basis)

cases = {
    "heat, additive": (DriftSpec(LinearHeat()), DiffusionSpec(1.0, 0.0, noise)),
    "p=3 kappa=0.01, multiplicative": (DriftSpec(PLaplaceSpec(3.0, 0.01)), DiffusionSpec(0.2, 0.5, noise)),
    "heat, sign flipped": (DriftSpec(LinearHeat(), sign=-1), DiffusionSpec(1.0, 0.0, noise)),
}
for name, (drift, diff) in cases.items():
    report = check_hypotheses(drift, diff, 10_000, seed=0)
    print(f"\n{name}: {'all hold' if report.passed else 'violated: ' + ', '.join(report.failed())}")
    for rec in report.records.values():
        flag = "ok " if rec.passed else "BAD"
        print(f"  {flag} {rec.id}  constant {rec.constant:12.4g}  margin {rec.margin:12.4g}  {rec.note}")
