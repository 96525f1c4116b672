"""Caption remote-sensing images from their object annotations."""
from .ingest import AnnotatedImage, Box, SceneObject, apply_object_cap, parse_canonical, write_canonical
from .spatial import Clustering, Edge, ThresholdStats, box_distance, kruskal_mst

__version__ = "0.1.0"
