"""
テストモジュール

このパッケージには、アプリケーションのテストコードが含まれます。
"""
