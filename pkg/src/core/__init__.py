# Numerical core: model, fitter, slice pipeline, analyses, statistics, phantoms
