# Prediction-error metrics
