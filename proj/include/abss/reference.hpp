#pragma once

// Brute-force reference scorers. Deliberately naive: explicit nested loops,
// a fresh reflection helper and a direct (non-separable) 2D convolution. They
// share no code with the scoring module and exist to check it.

#include <cstddef>
#include <vector>

#include "abss/tensor.hpp"

namespace abss::reference {

double unet_score(const AttnTensor& stacked, std::size_t h, std::size_t w,
                  const std::vector<std::size_t>& tokens, double beta, std::size_t radius,
                  double sigma);

double dit_score(const AttnTensor& joint, std::size_t image_tokens,
                 const std::vector<std::size_t>& tokens, std::size_t radius, double sigma);

/// Quadruple-loop 2D convolution with explicit index reflection.
std::vector<double> convolve_reflect_2d(const std::vector<double>& field, std::size_t h,
                                        std::size_t w, std::size_t radius, double sigma);

}  // namespace abss::reference
