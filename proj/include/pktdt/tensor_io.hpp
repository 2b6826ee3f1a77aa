#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pktdt/tensor.hpp"

namespace pktdt {

// Versioned binary tensor container shared by every model type.
//
// Layout (all integers little-endian):
//   char[4]  magic "PKDT"
//   u32      format version (1)
//   u32      kind
//   u32      meta count M, then M x i64 (dims / enums, kind-specific)
//   u32      tensor count T, then per tensor:
//              u16 name length, name bytes, u32 rows, u32 cols,
//              rows*cols x f32 little-endian, row-major
enum class ContainerKind : std::uint32_t { Autoencoder = 1, SequenceModel = 2, Mlp = 3 };

inline constexpr std::uint32_t kContainerVersion = 1;

struct TensorContainer {
  ContainerKind kind = ContainerKind::Autoencoder;
  std::vector<std::int64_t> meta;
  ParamSet tensors;
};

void write_container(const std::filesystem::path& path, const TensorContainer& c);
TensorContainer read_container(const std::filesystem::path& path);

}  // namespace pktdt
