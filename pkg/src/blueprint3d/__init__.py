"""blueprint3d: closed vehicle meshes from four-view orthographic blueprints.

The pipeline: extract and identify the four views of a blueprint image,
scan meshes into adaptively weighted signed-distance samples, train a
pixel-aligned implicit field on them, and pull closed meshes back out with
marching cubes. A CLI (`blueprint3d`) and an HTTP review service wrap the
library.
"""

__version__ = "0.1.0"
