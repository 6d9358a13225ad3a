# Settings module