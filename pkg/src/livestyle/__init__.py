"""LiveStyle: a style-transfer engine with three pipelines.

* optimization-based transfer (iterative loss minimization over pixels)
* arbitrary style transfer via predicted normalization parameters, with
  style blending and strength control
* desk-scale CycleGAN for unpaired domain translation

Served as a library, an HTTP job service (:mod:`livestyle.service`) and a
CLI (:mod:`livestyle.cli`).
"""

__version__ = "0.1.0"
