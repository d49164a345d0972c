import os


def output_dir(name):
    """Per-demo output folder under $S4CV_OUTPUT_ROOT (default: demos/output)."""
    root = os.environ.get("S4CV_OUTPUT_ROOT", os.path.join(os.path.dirname(__file__), "output"))
    path = os.path.join(root, name)
    os.makedirs(path, exist_ok=True)
    return path
