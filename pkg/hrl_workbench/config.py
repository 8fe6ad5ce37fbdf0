# hrl_workbench/config.py

import os
from dotenv import load_dotenv

load_dotenv() # Load environment variables from .env file

# LLM endpoint (OpenAI-compatible chat completions)
OPENAI_API_KEY = os.getenv("OPENAI_API_KEY")
LLM_BASE_URL = os.getenv("LLM_BASE_URL", "https://api.openai.com/v1")
LLM_MODEL = os.getenv("LLM_MODEL", "gpt-3.5-turbo")

# Prior cache shared by every run on this machine
PRIOR_CACHE_PATH = os.getenv("PRIOR_CACHE_PATH", ".cache/priors.tsv")

# Paths (adjust as needed)
RESULTS_DIR = os.getenv("RESULTS_DIR", "results")

LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
