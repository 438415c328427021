#include "abss/reference.hpp"

#include <cmath>

namespace abss::reference {
namespace {

long mirror(long i, long n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

}  // namespace

std::vector<double> convolve_reflect_2d(const std::vector<double>& field, std::size_t h,
                                        std::size_t w, std::size_t radius, double sigma) {
  const long r = static_cast<long>(radius);
  double norm = 0.0;
  for (long a = -r; a <= r; ++a)
    for (long b = -r; b <= r; ++b) norm += std::exp(-double(a * a + b * b) / (2 * sigma * sigma));

  std::vector<double> out(h * w, 0.0);
  for (long y = 0; y < long(h); ++y)
    for (long x = 0; x < long(w); ++x) {
      double acc = 0.0;
      for (long a = -r; a <= r; ++a)
        for (long b = -r; b <= r; ++b) {
          const double wt = std::exp(-double(a * a + b * b) / (2 * sigma * sigma)) / norm;
          acc += wt * field[mirror(y + a, long(h)) * w + mirror(x + b, long(w))];
        }
      out[y * w + x] = acc;
    }
  return out;
}

double unet_score(const AttnTensor& stacked, std::size_t h, std::size_t w,
                  const std::vector<std::size_t>& tokens, double beta, std::size_t radius,
                  double sigma) {
  const std::size_t m = stacked.shape[0], n = stacked.shape[2];
  auto value = [&](std::size_t j, std::size_t y, std::size_t x, std::size_t i) {
    return double(stacked.data[(j * h * w + y * w + x) * n + i]);
  };

  double total = 0.0;
  for (std::size_t token : tokens) {
    std::vector<double> slice(h * w);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        // mean over stacked maps, then softmax over tokens
        std::vector<double> logits(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < m; ++j) logits[i] += value(j, y, x, i);
          logits[i] /= double(m);
        }
        double denom = 0.0;
        for (std::size_t i = 0; i < n; ++i) denom += std::exp(beta * logits[i]);
        slice[y * w + x] = std::exp(beta * logits[token]) / denom;
      }
    const auto smoothed = convolve_reflect_2d(slice, h, w, radius, sigma);
    double sum = 0.0;
    for (double v : smoothed) sum += v;
    total += sum / double(h * w);
  }
  return total / double(tokens.size());
}

double dit_score(const AttnTensor& joint, std::size_t image_tokens,
                 const std::vector<std::size_t>& tokens, std::size_t radius, double sigma) {
  const std::size_t side = joint.shape[0];
  const std::size_t text = side - image_tokens;
  std::vector<double> per_token(text, 0.0);
  for (std::size_t i = 0; i < text; ++i) {
    for (std::size_t j = 0; j < image_tokens; ++j) per_token[i] += joint.data[j * side + image_tokens + i];
    per_token[i] /= double(image_tokens);
  }
  const long r = long(radius);
  double norm = 0.0;
  for (long a = -r; a <= r; ++a) norm += std::exp(-double(a * a) / (2 * sigma * sigma));

  double total = 0.0;
  for (std::size_t token : tokens) {
    double acc = 0.0;
    for (long a = -r; a <= r; ++a) {
      acc += std::exp(-double(a * a) / (2 * sigma * sigma)) / norm *
             per_token[mirror(long(token) + a, long(text))];
    }
    total += acc;
  }
  return total / double(tokens.size());
}

}  // namespace abss::reference
