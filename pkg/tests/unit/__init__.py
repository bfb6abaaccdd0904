"""
ユニットテストモジュール

個々のコンポーネントの単体テストを含みます。
"""
