#!/usr/bin/env python3
"""2x super-resolution filter: PNG on stdin, PNG on stdout.

Stand-in for a learned model such as CARN; any command honouring the same
contract can replace it.
"""
import io
import sys

from PIL import Image

img = Image.open(io.BytesIO(sys.stdin.buffer.read()))
img.load()
out = img.resize((img.width * 2, img.height * 2), Image.BICUBIC)
buf = io.BytesIO()
out.save(buf, format="PNG")
sys.stdout.buffer.write(buf.getvalue())
