#!/usr/bin/env python3
"""Colorization filter: gray PNG on stdin, RGB PNG of the same size on stdout.

Stand-in for a learned colorizer such as DeOldify.
"""
import io
import sys

from PIL import Image, ImageOps

img = Image.open(io.BytesIO(sys.stdin.buffer.read())).convert("L")
out = ImageOps.colorize(img, black="#1b1464", white="#ffe94d", mid="#c2185b")
buf = io.BytesIO()
out.save(buf, format="PNG")
sys.stdout.buffer.write(buf.getvalue())
