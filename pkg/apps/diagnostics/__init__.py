# Collinearity, stability and memory diagnostics
