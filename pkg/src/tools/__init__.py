"""
Tools package initialization
"""

from .custom_tools import get_impact_tool, get_similarity_tool
from .impact_tool import SchemeImpactTool
from .similarity_tool import BytecodeSimilarityTool

__all__ = ['BytecodeSimilarityTool', 'SchemeImpactTool', 'get_impact_tool', 'get_similarity_tool']
