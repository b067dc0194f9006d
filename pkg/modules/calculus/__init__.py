# Calculus modules (trees, increments, Pickands functions, tail trees, max-linear, tail measure)
