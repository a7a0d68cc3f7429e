# Unit tests for the surrogate, optimizers, benchmarks and scoring
