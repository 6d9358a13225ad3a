# Deep-ESN project package
