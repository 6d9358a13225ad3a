# Declarative experiments and the command-line surface
