#include "qac/nn/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace qac::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 4> kMagic{'Q', 'A', 'C', 'K'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CheckpointError(path.string() + ": truncated checkpoint");
  return v;
}

}  // namespace

void write_tensors(const std::filesystem::path& path, const std::vector<const Matrix*>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, tensors.size());
  for (const Matrix* m : tensors) {
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m->rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m->cols()));
    for (Index r = 0; r < m->rows(); ++r)
      for (Index c = 0; c < m->cols(); ++c) put<double>(out, (*m)(r, c));
  }
  if (!out) throw CheckpointError("write failed for " + path.string());
}

std::vector<Matrix> read_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw CheckpointError(path.string() + ": bad magic bytes");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw CheckpointError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  const auto count = get<std::uint64_t>(in, path);
  std::vector<Matrix> tensors;
  for (std::uint64_t t = 0; t < count; ++t) {
    const auto rows = get<std::uint64_t>(in, path);
    const auto cols = get<std::uint64_t>(in, path);
    if (rows > (1u << 24) || cols > (1u << 24)) throw CheckpointError(path.string() + ": implausible tensor shape");
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) m(r, c) = get<double>(in, path);
    tensors.push_back(std::move(m));
  }
  return tensors;
}

}  // namespace qac::nn
