# Test package for the mixed-variable BO benchmark suite
