#pragma once

#include <string>

#include "core/network.hpp"

namespace gcnet {
namespace io {

// Model file format "GCWT", version 1, little-endian throughout:
//   magic "GCWT" | u32 version | u8 form (0 training, 1 inference) |
//   u8 variant (0 S, 1 M, 2 L) | u32 num_classes | u32 base_channels |
//   u32 tensor_count | tensors...
// Each tensor: u16 name_len | name bytes (UTF-8) | u8 rank | u32 dims... |
// payload as 32-bit IEEE floats. Payloads are stored as f32 regardless of
// the in-memory element type, so save -> load -> save is byte-identical.
inline constexpr std::uint32_t kModelFormatVersion = 1;

template <typename T>
void save_model(Network<T>& net, const std::string& path);

template <typename T>
Network<T> load_model(const std::string& path);

}  // namespace io
}  // namespace gcnet
