# Dimension-reduction encoders placed between reservoirs
