# Echo-state reservoir layers
