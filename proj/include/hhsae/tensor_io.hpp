#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hhsae/numerics.hpp"

namespace hhsae {

// Container used for checkpoints and ground-truth sidecars:
//
//   "HHSAE1" | u64 LE header length | JSON header | payload
//
// The header carries a "tensors" directory (name, rows, cols, offset, bytes),
// "payload_bytes" and "payload_crc32". The payload is little-endian float64,
// tensors in directory order, each row-major.
inline constexpr char kTensorMagic[] = "HHSAE1";
inline constexpr int kTensorFormatVersion = 1;

using NamedTensor = std::pair<std::string, Matrix>;

struct TensorFile {
    nlohmann::json header;
    std::vector<NamedTensor> tensors;

    const Matrix& get(const std::string& name) const;
};

std::uint32_t crc32_of(const std::string& bytes);

std::string encode_tensor_file(nlohmann::json header, const std::vector<NamedTensor>& tensors);
TensorFile decode_tensor_file(const std::string& bytes);

void write_tensor_file(const std::filesystem::path& path, nlohmann::json header,
                       const std::vector<NamedTensor>& tensors);
TensorFile read_tensor_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace hhsae
