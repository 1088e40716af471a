"""Noise admissibility: trace report, sampled covariance and the smearing table."""
from stochch.experiments import noise_check
from stochch.noise import QSpectrum

checks, info = noise_check(QSpectrum(s=2.5), samples=10_000)
for c in checks:
    print(c.line())
sm = info["smearing"]
print("\nsup |W^eps - W| on a fixed path")
print("gamma  " + "  ".join(f"eps={e:<6}" for e in sm["eps"]))
for g, col in sm["sup_diff"].items():
    print(f"{g:<6} " + "  ".join(f"{x:10.4e}" for x in col))
