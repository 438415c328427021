#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace abss {

/// Dense, row-major, non-negative f32 attention array.
///
/// Holds stacked U-Net maps (m, h*w, n), an aggregated map (h, w, n) or a
/// DiT joint-attention matrix (M+N, M+N). Construction does not validate;
/// call validate() (the reader and writer always do).
struct AttnTensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  AttnTensor() = default;
  AttnTensor(std::vector<std::size_t> shape_, std::vector<float> data_)
      : shape(std::move(shape_)), data(std::move(data_)) {}

  static AttnTensor zeros(std::vector<std::size_t> shape);

  std::size_t ndim() const noexcept { return shape.size(); }
  std::size_t dim(std::size_t axis) const { return shape.at(axis); }
  std::size_t element_count() const noexcept;

  /// Throws Error(Shape) on bad shapes and Error(Validation) naming the flat
  /// index of the first NaN/Inf/negative element.
  void validate() const;

  friend bool operator==(const AttnTensor&, const AttnTensor&) = default;
};

inline constexpr std::uint32_t kAttnFormatVersion = 1;
inline constexpr std::uint8_t kDtypeF32Le = 0;
inline constexpr std::size_t kMaxTensorRank = 3;

std::size_t header_size(std::size_t ndim);

/// Serializes `tensor` as ATTN v1. Returns the number of bytes written.
std::uint64_t write_tensor(const AttnTensor& tensor, std::ostream& sink);
std::uint64_t write_tensor(const AttnTensor& tensor,
                           const std::filesystem::path& path);
std::vector<std::uint8_t> encode_tensor(const AttnTensor& tensor);

AttnTensor read_tensor(std::istream& source);
AttnTensor read_tensor(const std::filesystem::path& path);
AttnTensor decode_tensor(std::span<const std::uint8_t> bytes);

}  // namespace abss
