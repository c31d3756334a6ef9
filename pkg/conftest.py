# The bundled examples corpus is reference material, not part of this
# package's test suite.
collect_ignore = ["examples"]
