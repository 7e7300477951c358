#!/usr/bin/env python3
"""Fetch TU-format graph classification datasets, or convert a local
GIN/DGCNN-format file into the TU text layout.

Download mode (default) pulls {NAME}.zip from the TU Dortmund collection
and extracts the *_A.txt / *_graph_indicator.txt / ... files into
<root>/<NAME>/.

Convert mode (--gin-file) reads the single-file format used by the
powerful-gnns / DGCNN repositories:

    #graphs
    n label                 (per graph)
    tag m nb_1 ... nb_m     (per node)

and writes the equivalent TU files. Social datasets in that format carry
node degrees as tags; pass --plain to drop them so the dataset parses as
a plain (attribute-free) graph collection.
"""

import argparse
import io
import os
import sys
import urllib.request
import zipfile

DEFAULT_BASE_URL = "https://www.chrsmrrs.com/graphkerneldatasets"


def download(name: str, root: str, base_url: str) -> None:
    url = f"{base_url}/{name}.zip"
    print(f"fetching {url}")
    with urllib.request.urlopen(url) as resp:
        payload = resp.read()
    zf = zipfile.ZipFile(io.BytesIO(payload))
    os.makedirs(root, exist_ok=True)
    for member in zf.namelist():
        if member.endswith(".txt"):
            zf.extract(member, root)
    print(f"extracted {name} under {root}/{name}")


def convert_gin(gin_path: str, name: str, root: str, plain: bool) -> None:
    out_dir = os.path.join(root, name)
    os.makedirs(out_dir, exist_ok=True)
    with open(gin_path) as f:
        n_graphs = int(f.readline())
        a_lines = []
        indicator = []
        graph_labels = []
        node_tags = []
        offset = 0  # global 0-based node offset of current graph
        for g in range(n_graphs):
            n, label = f.readline().split()
            n = int(n)
            graph_labels.append(label)
            for i in range(n):
                row = f.readline().split()
                tag, m = int(row[0]), int(row[1])
                node_tags.append(tag)
                indicator.append(g + 1)
                for j in row[2 : 2 + m]:
                    a_lines.append((offset + i + 1, offset + int(j) + 1))
            offset += n
    base = os.path.join(out_dir, name)
    with open(base + "_A.txt", "w") as f:
        for i, j in a_lines:
            f.write(f"{i}, {j}\n")
    with open(base + "_graph_indicator.txt", "w") as f:
        f.write("\n".join(str(g) for g in indicator) + "\n")
    with open(base + "_graph_labels.txt", "w") as f:
        f.write("\n".join(graph_labels) + "\n")
    if not plain:
        with open(base + "_node_labels.txt", "w") as f:
            f.write("\n".join(str(t) for t in node_tags) + "\n")
    print(f"wrote {n_graphs} graphs to {out_dir}")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("names", nargs="*", help="dataset names to download (e.g. PROTEINS IMDB-BINARY)")
    ap.add_argument("--root", default="data", help="output directory (default: data)")
    ap.add_argument("--base-url", default=os.environ.get("TU_BASE_URL", DEFAULT_BASE_URL))
    ap.add_argument("--gin-file", help="convert this GIN/DGCNN-format file instead of downloading")
    ap.add_argument("--name", help="dataset name for --gin-file output")
    ap.add_argument("--plain", action="store_true", help="with --gin-file: drop node tags")
    args = ap.parse_args()

    if args.gin_file:
        if not args.name:
            ap.error("--gin-file requires --name")
        convert_gin(args.gin_file, args.name, args.root, args.plain)
        return 0
    if not args.names:
        ap.error("no dataset names given")
    for name in args.names:
        download(name, args.root, args.base_url)
    return 0


if __name__ == "__main__":
    sys.exit(main())
