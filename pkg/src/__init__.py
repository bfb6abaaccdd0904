"""
ML-LIF - 確率的Morris-Lecarニューロンとradial OU型LIFモデルの解析ツールキット

このパッケージは、確率的Morris-Lecarモデルのシミュレーション、
平衡点まわりの線形化とOU近似、ハザード型発火を持つLIFモデル、
および発火統計の推定手法を提供します。
"""

__version__ = "0.1.0"
__author__ = "charoro"
