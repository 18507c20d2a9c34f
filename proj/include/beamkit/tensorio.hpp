// Binary tensor container: a JSON manifest followed by named float64 blobs.
// Used for dictionary exports, beamformer weights, and model checkpoints.
//
// Layout: "BKTB" magic, u32 version, u64 manifest length, manifest bytes,
// then each tensor's data contiguously in manifest order, little-endian f64.
#ifndef BEAMKIT_TENSORIO_HPP
#define BEAMKIT_TENSORIO_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "beamkit/common.hpp"

namespace beamkit {

struct NamedTensor {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<double> data;

  int64_t size() const {
    int64_t s = 1;
    for (int64_t d : shape) s *= d;
    return s;
  }
};

struct TensorFile {
  std::string manifest_json;  // free-form metadata, must be a JSON object
  std::vector<NamedTensor> tensors;

  const NamedTensor& find(const std::string& name) const;
  bool contains(const std::string& name) const;
};

void save_tensor_file(const std::string& path, const TensorFile& file);
TensorFile load_tensor_file(const std::string& path);

}  // namespace beamkit

#endif  // BEAMKIT_TENSORIO_HPP
