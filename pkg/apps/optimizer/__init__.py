# Hyperparameter search: genetic algorithm and grid sweeps
