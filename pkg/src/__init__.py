# chronoweave - news background timelines from LLM relevance judgments
