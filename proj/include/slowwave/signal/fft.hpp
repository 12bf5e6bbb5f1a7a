#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace slowwave::signal {

/// Real-to-half-complex transform: n/2 + 1 unnormalized coefficients.
std::vector<std::complex<double>> rfft(std::span<const double> x);

/// Inverse of rfft for a length-n signal, including the 1/n normalization.
std::vector<double> irfft(std::span<const std::complex<double>> spectrum, std::size_t n);

}  // namespace slowwave::signal
