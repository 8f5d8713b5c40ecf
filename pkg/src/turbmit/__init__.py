"""Teacher-student domain adaptation for atmospheric-turbulence restoration.

Subpackages:

* turbsim    — parametric degradation simulator and dataset fabrication
* nets       — generator / discriminator pair / reproduce net
* objectives — every training loss and the weighted totals
* trainer    — the alternating training loop, checkpoints, config
* iqa        — PSNR / SSIM / MSCN / PIQE and directory evaluation
* cli        — `turbmit` command: simulate | train | restore | evaluate
"""

__version__ = "0.1.0"
