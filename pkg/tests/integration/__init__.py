"""
統合テストモジュール

複数のコンポーネント間の連携をテストします。
"""
