"""
Custom tool initialization
"""

from .impact_tool import SchemeImpactTool
from .similarity_tool import BytecodeSimilarityTool


def get_similarity_tool():
    """Get instance of Bytecode Similarity tool"""
    return BytecodeSimilarityTool()


def get_impact_tool():
    """Get instance of Scheme Impact tool"""
    return SchemeImpactTool()
