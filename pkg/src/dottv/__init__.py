"""TV-regularized diffuse optical tomography on unstructured meshes."""

from .mesh import (
    Mesh,
    WeightedGraph,
    ProbeLayout,
    MeshError,
    MeshFormatError,
    MeshValidationError,
    DegenerateEdgeError,
    load_mesh,
    save_mesh,
    save_vtk,
    element_measure,
    element_measures,
    node_control_measures,
    mesh_to_graph,
)
from .fe_ops import (
    GradientMatrices,
    SingularElementError,
    basis_coefficients,
    assemble_gradient_matrices,
    fe_tv_aniso,
    fe_tv_iso,
)
from .graph_ops import (
    nonlocal_gradient,
    nonlocal_divergence,
    graph_laplacian_apply,
    graph_laplacian_matrix,
    graph_tv_aniso,
    graph_tv_iso,
)
from .forward import (
    OpticalProperties,
    BoundaryData,
    ForwardModel,
    ForwardModelError,
    solve_forward,
    compute_jacobian,
    add_noise,
    boundary_data_to_csv,
    boundary_data_from_csv,
    REFLECTION_PARAM,
)
from .inner_solvers import (
    AdmmConfig,
    AdmmTrace,
    SOLVER_KINDS,
    shrink_scalar,
    shrink_coupled,
    solve_mu_subproblem,
    solve_a_fetv,
    solve_i_fetv,
    solve_a_gtv,
    solve_i_gtv,
    solve_tikhonov,
    solve_inner,
)
from .reconstruct import (
    OuterConfig,
    ReconResult,
    ReconstructionError,
    reconstruct,
    l_curve_select,
    build_operator,
    regularizer_value,
)
from .metrics import (
    GroundTruth,
    MetricReport,
    EmptyRegionError,
    recovered_region,
    localization_error,
    average_contrast,
    psnr,
    relative_recovered_volume,
    evaluate_reconstruction,
)
from .phantoms import (
    make_circle_mesh,
    make_circle_truth,
    make_ring_layout,
    make_layered_disk,
    HEAD_LAYER_MUA,
    HEAD_LAYER_MUSP,
)
from .experiment import (
    ExperimentSpec,
    run_experiment,
    derive_seed,
    load_metrics_csv,
)

__version__ = "0.1.0"
