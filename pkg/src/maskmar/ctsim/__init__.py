from maskmar.ctsim.export import load_mask_png, load_png_window, save_mask_png, save_png
from maskmar.ctsim.fbp import fbp, filter_sinogram, rebin_fan_to_parallel
from maskmar.ctsim.geometry import ScanGeometry, fitted_geometry
from maskmar.ctsim.phantom import (
    Ellipse,
    Ellipsoid,
    MetalInsert,
    PhantomSpec,
    load_phantom,
    parse_phantom,
    project_ellipses,
    random_limb_phantom,
    render_metal_mask,
    render_phantom,
    render_volume,
)
from maskmar.ctsim.physics import (
    MONO,
    MU_WATER,
    THREE_BIN,
    TWO_BIN,
    EnergyBin,
    hu_to_mu,
    metal_trace,
    mu_to_hu,
    simulate_metal_sinogram,
)
from maskmar.ctsim.projector import backproject_adjoint, radon, system_matrix
