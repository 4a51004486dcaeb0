# %% [markdown]
# # Epidemic spread of a single fact
#
# One Critical fact is written by agent 0 in a 256-agent population and
# spread by push-pull gossip with fan-out 1. The informed count should
# trace a logistic S-curve, and the uninformed fraction should collapse
# faster than exponentially once push-pull takes over.

# %%
import matplotlib.pyplot as plt
import numpy as np

from geacl import metrics as M
from geacl.config import RunConfig, SyntheticSection
from geacl.scenarios.synthetic import run_synthetic

N = 256
report, result = run_synthetic(RunConfig(seed=3, synthetic=SyntheticSection(N=N)))
curve = M.epidemic_curve(result.trace, "x/0")
print("informed per round:", curve)
print("FCT", report.metrics["FCT"], "rounds; RO", round(report.metrics["RO"], 2))

# %% [markdown]
# ## Logistic fit
#
# `fit_beta` fits I(t) = N / (1 + (N - 1) e^{-βt}) by least squares.

# %%
fit = M.fit_beta(curve, N)
t = np.arange(len(curve))
print(f"beta_hat {fit.beta_hat:.2f}, R2 {fit.r_squared:.3f}")
plt.plot(t, curve, "o", label="simulated")
plt.plot(t, M.logistic(t, fit.beta_hat, N), label="logistic fit")
plt.xlabel("round")
plt.ylabel("informed agents")
plt.legend()
plt.show()

# %% [markdown]
# ## Scaling with N
#
# Median full-convergence time over 20 seeds grows with log2 N.

# %%
sizes = [16, 32, 64, 128, 256]
med = []
for n in sizes:
    fcts = [run_synthetic(RunConfig(seed=s, synthetic=SyntheticSection(N=n)))[0].metrics["FCT"]
            for s in range(20)]
    med.append(float(np.median(fcts)))
print(dict(zip(sizes, med)))
print("R2 against log2 N:", round(M.linear_r2(np.log2(sizes), med), 3))
plt.plot(np.log2(sizes), med, "o-")
plt.xlabel("log2 N")
plt.ylabel("median FCT (rounds)")
plt.show()
