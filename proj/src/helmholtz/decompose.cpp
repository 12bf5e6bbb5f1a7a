#include "slowwave/helmholtz/helmholtz.hpp"

namespace slowwave::helmholtz {

HelmholtzResult decompose(const FlowField& f, const SolverConfig& cfg) {
  if (!f.valid.any()) throw Error(ErrorCode::EmptyMask, "decompose: field has no valid pixels");
  if (!same_shape(f.u, f.valid) || !same_shape(f.v, f.valid)) {
    throw Error(ErrorCode::ShapeMismatch, "decompose: field components and mask differ");
  }
  if (!f.u.allFinite() || !f.v.allFinite()) throw Error(ErrorCode::NonFiniteInput, "decompose: non-finite field");

  const Mask& mask = f.valid;
  // Only the in-mask field takes part.
  const FlowField masked{mask.select(f.u, 0.0), mask.select(f.v, 0.0), mask};

  HelmholtzResult out;
  out.phi = poisson_solve(divergence(masked), mask, Boundary::Neumann, cfg);
  out.psi = poisson_solve(-curl(masked), mask, Boundary::Dirichlet, cfg);
  out.grad_phi = gradient(out.phi, mask);
  out.rot_psi = rotated_gradient(out.psi, mask);
  out.harmonic = subtract(subtract(masked, out.grad_phi), out.rot_psi);
  out.harmonic.valid = mask;
  out.source_density = laplacian(out.phi, mask, Boundary::Neumann);
  std::tie(out.sources, out.sinks) = sources_sinks(out.source_density);
  return out;
}

}  // namespace slowwave::helmholtz
