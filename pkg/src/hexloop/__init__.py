"""Loop O(n) model on the honeycomb lattice with its discrete stress-energy
tensor, Ising (n=1) fermionic observables, s-holomorphic boundary value
solvers and closed-form Ising-CFT correlation kernels."""

__version__ = "0.1.0"
