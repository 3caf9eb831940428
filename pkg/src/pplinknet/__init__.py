"""PP-LinkNet road segmentation toolkit in plain numpy.

Subpackages and modules:

``geo``       affine pixel/geo transforms and world files
``raster``    PGM/PPM rasters, polyline and polygon rasterisation
``vector``    GeoJSON road and building ingestion, tile clipping
``nn``        layers, the PP-LinkNet-mu model, checkpoints, gradient checks
``losses``    BCE, focal and dice losses with analytic gradients
``train``     Adam, LR schedules, single- and two-stage training
``graph``     skeletons, road graphs, control nodes and snapping
``metrics``   IoU, APLS and building F1
``synth``     seeded synthetic road tiles
``cli``       the ``pplinknet`` command
"""

__version__ = "0.1.0"
