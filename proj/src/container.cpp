#include "kgbridge/container.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "kgbridge/binio.hpp"
#include "kgbridge/hash.hpp"

namespace kgbridge {

namespace {
constexpr char kMagic[4] = {'B', 'B', 'R', '1'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void write_container(const std::string& path, const ContainerPayload& payload) {
  std::ostringstream body(std::ios::binary);
  body.write(kMagic, 4);
  binio::write_scalar<std::uint32_t>(body, kVersion);
  binio::write_string(body, payload.header.dump());
  binio::write_scalar<std::uint32_t>(body,
                                     static_cast<std::uint32_t>(payload.tensors.size()));
  for (const auto& t : payload.tensors) {
    binio::write_string(body, t.name);
    binio::write_scalar<std::uint32_t>(body,
                                       static_cast<std::uint32_t>(t.value.shape.size()));
    for (int dim : t.value.shape)
      binio::write_scalar<std::uint64_t>(body, static_cast<std::uint64_t>(dim));
    binio::write_f32_array(body, t.value.data.data(), t.value.data.size());
  }

  const std::string bytes = body.str();
  const Digest digest = sha256(bytes.data(), bytes.size());

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint file: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.write(reinterpret_cast<const char*>(digest.data()),
            static_cast<std::streamsize>(digest.size()));
  if (!out) throw DataError("write failed for checkpoint file: " + path);
}

ContainerPayload read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < 4 + 4 + 32) throw DataError("checkpoint file too short: " + path);

  const std::string body = bytes.substr(0, bytes.size() - 32);
  Digest stored{};
  std::memcpy(stored.data(), bytes.data() + body.size(), 32);
  if (sha256(body.data(), body.size()) != stored)
    throw DataError("checkpoint content hash mismatch: " + path);

  std::istringstream src(body, std::ios::binary);
  char magic[4];
  src.read(magic, 4);
  if (!src || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("bad magic in checkpoint file: " + path);
  const auto version = binio::read_scalar<std::uint32_t>(src, "checkpoint version");
  if (version != kVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));

  ContainerPayload payload;
  const std::string header_text = binio::read_string(src, "checkpoint header");
  try {
    payload.header = nlohmann::ordered_json::parse(header_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("invalid checkpoint header JSON: ") + e.what());
  }

  const auto n_tensors = binio::read_scalar<std::uint32_t>(src, "tensor count");
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    NamedTensor<float> t;
    t.name = binio::read_string(src, "tensor name");
    const auto ndim = binio::read_scalar<std::uint32_t>(src, "tensor rank");
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < ndim; ++k) {
      const auto dim = binio::read_scalar<std::uint64_t>(src, "tensor dim");
      t.value.shape.push_back(static_cast<int>(dim));
      n *= dim;
    }
    t.value.data.resize(n);
    binio::read_f32_array(src, t.value.data.data(), n, "tensor data");
    payload.tensors.push_back(std::move(t));
  }
  return payload;
}

}  // namespace kgbridge
