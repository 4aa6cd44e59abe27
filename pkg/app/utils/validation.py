"""
Shared validation utilities for image inputs and output file names
"""
import os
import re
from typing import Tuple

ALLOWED_EXTENSIONS = {'.png', '.pgm'}


def sanitize_filename(filename: str) -> str:
    """Sanitize a generated file name so subject ids cannot escape the output directory"""
    # Remove path components
    filename = os.path.basename(filename)
    # Remove any non-alphanumeric characters except dots, dashes, and underscores
    filename = re.sub(r'[^a-zA-Z0-9._-]', '_', filename)
    # Limit length
    if len(filename) > 255:
        name, ext = os.path.splitext(filename)
        filename = name[:255-len(ext)] + ext
    return filename


def validate_image_path(path: str) -> Tuple[bool, str]:
    """Validate that an image path exists and has a supported extension"""
    if not path:
        return False, "Image path is required"

    ext = os.path.splitext(path)[1].lower()
    if ext not in ALLOWED_EXTENSIONS:
        return False, f"File type {ext or '(none)'} not allowed. Allowed types: {', '.join(sorted(ALLOWED_EXTENSIONS))}"

    if not os.path.isfile(path):
        return False, f"Image not found: {path}"
    return True, ""
