# Tools package for the facetflow agent
