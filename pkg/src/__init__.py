"""pbmix: mixed finite elements for the linearised Poisson-Boltzmann equation."""
