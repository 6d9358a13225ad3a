# Shared errors, validation mixins and numerical helpers
