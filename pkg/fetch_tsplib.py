#!/usr/bin/env python3
"""
TSPLIB Instance Fetcher
Downloads the benchmark instances (gr48, kroA100, eil101, kroB200) into data/
"""

import gzip
import logging
import os
import sys
import time
from typing import Dict, List, Optional

import requests

from pega.errors import ParseError
from pega.io_utils import backup_file_if_exists
from pega.tsp import parse_tsplib

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

BENCHMARK_INSTANCES = ['gr48', 'kroA100', 'eil101', 'kroB200']


class TsplibFetcher:
    """Fetches TSPLIB instance files, trying each mirror in turn"""

    MIRRORS = [
        ("http://comopt.ifi.uni-heidelberg.de/software/TSPLIB95/tsp/{name}.tsp.gz", True),
        ("https://raw.githubusercontent.com/mastqe/tsplib/master/{name}.tsp", False),
    ]

    def __init__(self, data_dir: Optional[str] = None):
        self.data_dir = data_dir or os.path.join(os.path.dirname(os.path.abspath(__file__)), 'data')
        self.session = requests.Session()
        self.session.headers['User-Agent'] = 'pega-tsplib-fetcher (research use)'

    def download(self, url: str, max_retries: int = 3) -> Optional[bytes]:
        """GET with exponential backoff on rate limits and transient failures"""
        for attempt in range(max_retries):
            try:
                response = self.session.get(url, timeout=30)
                response.raise_for_status()
                return response.content
            except requests.exceptions.HTTPError as e:
                status = e.response.status_code if e.response is not None else None
                if status == 429 and attempt < max_retries - 1:
                    wait_time = (2 ** attempt) * 5
                    logger.warning(f"Rate limited by {url}; waiting {wait_time}s")
                    time.sleep(wait_time)
                    continue
                logger.warning(f"HTTP error for {url}: {e}")
                return None
            except requests.exceptions.RequestException as e:
                logger.warning(f"Attempt {attempt + 1}/{max_retries} failed for {url}: {e}")
                if attempt < max_retries - 1:
                    time.sleep(2 ** attempt)
        return None

    def fetch(self, name: str) -> Optional[str]:
        """Download, check that the file parses, and save it. Returns the path."""
        for template, compressed in self.MIRRORS:
            url = template.format(name=name)
            content = self.download(url)
            if content is None:
                continue
            try:
                if compressed:
                    content = gzip.decompress(content)
                instance = parse_tsplib(content)
            except (OSError, ParseError) as e:
                logger.warning(f"Discarding {url}: {e}")
                continue

            os.makedirs(self.data_dir, exist_ok=True)
            filepath = os.path.join(self.data_dir, f"{name}.tsp")
            backup_file_if_exists(filepath)
            with open(filepath, 'wb') as f:
                f.write(content)
            logger.info(f"Saved {name} (m={instance.dimension}, {instance.edge_weight_type}) to {filepath}")
            return filepath

        logger.error(f"Could not fetch {name} from any mirror")
        return None


def main(names: Optional[List[str]] = None) -> bool:
    names = names or BENCHMARK_INSTANCES
    logger.info("=" * 60)
    logger.info(f"Fetching TSPLIB instances: {', '.join(names)}")
    logger.info("=" * 60)

    fetcher = TsplibFetcher()
    results: Dict[str, Optional[str]] = {name: fetcher.fetch(name) for name in names}

    fetched = [name for name, path in results.items() if path]
    logger.info("=" * 60)
    logger.info(f"Fetched {len(fetched)}/{len(names)} instances into {fetcher.data_dir}")
    for name, path in results.items():
        if not path:
            logger.error(f"  {name}: FAILED")
    logger.info("=" * 60)
    return len(fetched) == len(names)


if __name__ == "__main__":
    success = main(sys.argv[1:])
    sys.exit(0 if success else 1)
