#pragma once

#include <utility>

#include "slowwave/core/array.hpp"
#include "slowwave/flow/flow.hpp"

namespace slowwave::helmholtz {

using flow::FlowField;

struct SolverConfig {
  double cg_tol = 1e-8;
  double max_iters_per_pixel = 10.0;  // iteration cap = factor * unknowns
};

enum class Boundary { Neumann, Dirichlet };

struct SolveReport {
  int iterations = 0;
  double relative_residual = 0.0;
  int components = 0;  // 4-connected components of the mask; > 1 means DisconnectedMask
};

/// d/d(row) of `values` restricted to `mask`: central where both neighbours are in the mask,
/// one-sided where only one is, zero where neither is or outside the mask.
Image diff_rows(const Image& values, const Mask& mask);
Image diff_cols(const Image& values, const Mask& mask);

/// du/drow + dv/dcol.
Image divergence(const FlowField& f);
/// dv/drow - du/dcol.
Image curl(const FlowField& f);

/// (grad phi) as a field: u = dphi/drow, v = dphi/dcol.
FlowField gradient(const Image& phi, const Mask& mask);
/// J grad psi, the 90 degree rotation taken in the (x = col, y = row) frame:
/// u = dpsi/dcol, v = -dpsi/drow. Divergence-free, with curl = -laplacian(psi).
FlowField rotated_gradient(const Image& psi, const Mask& mask);

/// 5-point Laplacian on the mask. Neumann: sum over in-mask 4-neighbours of (x_j - x_i).
/// Dirichlet: pixels outside the mask take `boundary` values (zero when null or off-image).
Image laplacian(const Image& x, const Mask& mask, Boundary bc, const Image* boundary = nullptr);

/// Solves laplacian(x) = rhs on the mask by Jacobi-preconditioned conjugate gradients.
/// Neumann: rhs is shifted to zero mean on every connected component and the solution is
/// returned with zero mean on every component.
Image poisson_solve(const Image& rhs, const Mask& mask, Boundary bc, const SolverConfig& cfg = {},
                    const Image* boundary = nullptr, SolveReport* report = nullptr);

/// 4-connected component label per pixel (-1 outside the mask); returns the component count.
int label_components(const Mask& mask, Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& labels);

struct HelmholtzResult {
  FlowField grad_phi;   // curl-free part
  FlowField rot_psi;    // divergence-free part
  FlowField harmonic;   // input - grad_phi - rot_psi
  Image phi;
  Image psi;
  Image source_density; // laplacian(phi)
  Image sources;        // max(source_density, 0)
  Image sinks;          // min(source_density, 0)
};

/// Splits a field into gradient, rotated-gradient and harmonic parts on its valid mask.
/// phi: laplacian(phi) = div f with zero-flux boundary; psi: laplacian(psi) = -curl f with psi = 0 outside.
HelmholtzResult decompose(const FlowField& f, const SolverConfig& cfg = {});

/// (O, I) = (max(d, 0), min(d, 0)).
std::pair<Image, Image> sources_sinks(const Image& div_map);

/// Pointwise sum of two fields on the union of their masks.
FlowField add(const FlowField& a, const FlowField& b);
FlowField subtract(const FlowField& a, const FlowField& b);

}  // namespace slowwave::helmholtz
