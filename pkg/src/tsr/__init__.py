"""Two-stage shape retrieval: irrelevant cluster filtering, then local matching."""

from .index import BuildConfig, RetrievalIndex
from .pipeline import QueryResult, build_index, query, query_gallery
from .shapeio import BinaryShape, Gallery, load_dataset, load_index, load_shape, save_index

__version__ = "0.1.0"

__all__ = [
    "BinaryShape", "BuildConfig", "Gallery", "QueryResult", "RetrievalIndex", "build_index",
    "load_dataset", "load_index", "load_shape", "query", "query_gallery", "save_index",
]
