"""Formation motion planning over Cosserat rod fields discretized as Bernstein surfaces."""
