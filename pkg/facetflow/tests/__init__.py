# Tests package for facetflow
