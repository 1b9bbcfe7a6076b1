#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgbridge/tensor.hpp"

namespace kgbridge {

// "BBR1" checkpoint container: magic, u32 version, JSON header, named f32
// tensor blocks, trailing 32-byte SHA-256 over everything before it.
struct ContainerPayload {
  nlohmann::ordered_json header;
  std::vector<NamedTensor<float>> tensors;
};

void write_container(const std::string& path, const ContainerPayload& payload);

// Verifies magic, version, and the content hash.
ContainerPayload read_container(const std::string& path);

}  // namespace kgbridge
