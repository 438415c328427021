#include "abss/tensor.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "abss/error.hpp"

namespace abss {
namespace {

constexpr std::array<char, 4> kMagic{'A', 'T', 'T', 'N'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void read_exact(std::istream& in, std::uint8_t* dst, std::size_t n,
                std::size_t already, std::size_t expected_total) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != n) {
    fail(ErrorKind::Truncation, "expected " + std::to_string(expected_total) +
                                    " bytes, got " + std::to_string(already + got));
  }
}

void check_shape(const std::vector<std::size_t>& shape) {
  if (shape.empty() || shape.size() > kMaxTensorRank) {
    fail(ErrorKind::Shape, "tensor rank must be in [1, 3], got " +
                               std::to_string(shape.size()));
  }
  for (std::size_t d : shape) {
    if (d == 0) fail(ErrorKind::Shape, "every dimension must be >= 1");
  }
}

}  // namespace

AttnTensor AttnTensor::zeros(std::vector<std::size_t> shape) {
  AttnTensor t;
  t.shape = std::move(shape);
  t.data.assign(t.element_count(), 0.0f);
  return t;
}

std::size_t AttnTensor::element_count() const noexcept {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void AttnTensor::validate() const {
  check_shape(shape);
  if (element_count() != data.size()) {
    fail(ErrorKind::Shape, "shape product " + std::to_string(element_count()) +
                               " does not match element count " +
                               std::to_string(data.size()));
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    const float v = data[i];
    if (!std::isfinite(v) || v < 0.0f) {
      std::ostringstream msg;
      msg << "element at flat index " << i << " is " << v
          << " (must be finite and >= 0)";
      fail(ErrorKind::Validation, msg.str());
    }
  }
}

std::size_t header_size(std::size_t ndim) { return 4 + 4 + 1 + 1 + 8 * ndim; }

std::vector<std::uint8_t> encode_tensor(const AttnTensor& tensor) {
  tensor.validate();
  std::vector<std::uint8_t> out;
  out.reserve(header_size(tensor.ndim()) + 4 * tensor.data.size());
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  put_u32(out, kAttnFormatVersion);
  out.push_back(kDtypeF32Le);
  out.push_back(static_cast<std::uint8_t>(tensor.ndim()));
  for (std::size_t d : tensor.shape) put_u64(out, d);
  for (float v : tensor.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

std::uint64_t write_tensor(const AttnTensor& tensor, std::ostream& sink) {
  const auto bytes = encode_tensor(tensor);
  sink.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  if (!sink) fail(ErrorKind::Io, "failed to write tensor bytes");
  return bytes.size();
}

std::uint64_t write_tensor(const AttnTensor& tensor,
                           const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  const auto n = write_tensor(tensor, out);
  out.flush();
  if (!out) fail(ErrorKind::Io, "failed to write " + path.string());
  return n;
}

AttnTensor read_tensor(std::istream& source) {
  std::array<std::uint8_t, 10> fixed{};
  read_exact(source, fixed.data(), fixed.size(), 0, fixed.size());
  if (!std::equal(kMagic.begin(), kMagic.end(), fixed.begin(),
                  [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; })) {
    fail(ErrorKind::Format, "bad magic (expected \"ATTN\")");
  }
  const std::uint32_t version = get_u32(fixed.data() + 4);
  if (version != kAttnFormatVersion) {
    fail(ErrorKind::Format, "unsupported version " + std::to_string(version));
  }
  if (fixed[8] != kDtypeF32Le) {
    fail(ErrorKind::Format, "unsupported dtype code " + std::to_string(fixed[8]));
  }
  const std::size_t ndim = fixed[9];
  if (ndim == 0 || ndim > kMaxTensorRank) {
    fail(ErrorKind::Format, "unsupported rank " + std::to_string(ndim));
  }

  std::vector<std::uint8_t> dims(8 * ndim);
  const std::size_t hdr = header_size(ndim);
  read_exact(source, dims.data(), dims.size(), fixed.size(), hdr);

  AttnTensor t;
  std::size_t count = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    const std::uint64_t d = get_u64(dims.data() + 8 * i);
    if (d == 0) fail(ErrorKind::Format, "dimension " + std::to_string(i) + " is zero");
    if (d > std::numeric_limits<std::size_t>::max() / 4 / count) {
      fail(ErrorKind::Format, "tensor shape overflows addressable size");
    }
    count *= static_cast<std::size_t>(d);
    t.shape.push_back(static_cast<std::size_t>(d));
  }

  std::vector<std::uint8_t> payload(4 * count);
  read_exact(source, payload.data(), payload.size(), hdr, hdr + payload.size());
  t.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    t.data[i] = std::bit_cast<float>(get_u32(payload.data() + 4 * i));
  }
  t.validate();
  return t;
}

AttnTensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  AttnTensor t = read_tensor(in);
  if (in.peek() != std::char_traits<char>::eof()) {
    fail(ErrorKind::Format, path.string() + " has trailing bytes after the payload");
  }
  return t;
}

AttnTensor decode_tensor(std::span<const std::uint8_t> bytes) {
  std::istringstream in(std::string(bytes.begin(), bytes.end()), std::ios::binary);
  AttnTensor t = read_tensor(in);
  if (in.peek() != std::char_traits<char>::eof()) {
    fail(ErrorKind::Format, "trailing bytes after the payload");
  }
  return t;
}

}  // namespace abss
