#pragma once

// Flat versioned parameter checkpoints.
//
// Layout (little-endian):
//   bytes 0..3   magic "QACK"
//   u32          format version (kCheckpointVersion)
//   u64          tensor ("layer") count
//   per tensor:  u64 rows, u64 cols, rows*cols f64 values in row-major order

#include "qac/nn/params.hpp"

#include <filesystem>
#include <stdexcept>

namespace qac::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_tensors(const std::filesystem::path& path, const std::vector<const Matrix*>& tensors);
std::vector<Matrix> read_tensors(const std::filesystem::path& path);

template <ParameterSet P>
void save_checkpoint(const std::filesystem::path& path, const P& params) {
  write_tensors(path, tensor_refs(params));
}

/// Loads into an already-shaped parameter set; every tensor shape must match.
template <ParameterSet P>
void load_checkpoint(const std::filesystem::path& path, P& params) {
  std::vector<Matrix> loaded = read_tensors(path);
  auto refs = tensor_refs(params);
  if (loaded.size() != refs.size())
    throw CheckpointError(path.string() + ": expected " + std::to_string(refs.size()) + " tensors, found " +
                          std::to_string(loaded.size()));
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (loaded[i].rows() != refs[i]->rows() || loaded[i].cols() != refs[i]->cols())
      throw CheckpointError(path.string() + ": tensor " + std::to_string(i) + " has the wrong shape");
    *refs[i] = std::move(loaded[i]);
  }
}

}  // namespace qac::nn
