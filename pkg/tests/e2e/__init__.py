"""
エンドツーエンドテストモジュール

アプリケーション全体のワークフローをテストします。
"""
