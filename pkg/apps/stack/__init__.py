# Deep-ESN composition, readout training and model files
