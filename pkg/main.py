"""
Chronoweave Entry Point
=======================
Builds background timelines for news articles: retrieve earlier context
articles, ask a model which ones are relevant (optionally with a background
story task), and export the result.

Usage:
    python main.py timeline --backend mock --out out/
    python main.py eval --backend mock --gold-from-mock --out out/
    python main.py ingest --corpus data/synthetic_corpus.jsonl --out out/
    python main.py cache inspect
"""

import sys
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent))

from src.cli import main


if __name__ == '__main__':
    sys.exit(main())
