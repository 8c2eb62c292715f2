#include "hhsae/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <zlib.h>

namespace hhsae {

namespace {

constexpr std::size_t kMagicLen = sizeof(kTensorMagic) - 1;

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    return v;
}

}  // namespace

const Matrix& TensorFile::get(const std::string& name) const {
    for (const auto& [n, m] : tensors)
        if (n == name) return m;
    throw Error("tensor file: missing tensor '" + name + "'");
}

std::uint32_t crc32_of(const std::string& bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(crc);
}

std::string encode_tensor_file(nlohmann::json header, const std::vector<NamedTensor>& tensors) {
    std::string payload;
    nlohmann::json dir = nlohmann::json::array();
    for (const auto& [name, m] : tensors) {
        const std::size_t offset = payload.size();
        for (double v : m.flat()) put_u64(payload, std::bit_cast<std::uint64_t>(v));
        dir.push_back({{"name", name},
                       {"rows", m.rows()},
                       {"cols", m.cols()},
                       {"offset", offset},
                       {"bytes", payload.size() - offset}});
    }
    header["format_version"] = kTensorFormatVersion;
    header["tensors"] = dir;
    header["payload_bytes"] = payload.size();
    header["payload_crc32"] = crc32_of(payload);

    const std::string head = header.dump();
    std::string out(kTensorMagic, kMagicLen);
    put_u64(out, head.size());
    out += head;
    out += payload;
    return out;
}

TensorFile decode_tensor_file(const std::string& bytes) {
    if (bytes.size() < kMagicLen + 8 || bytes.compare(0, kMagicLen, kTensorMagic) != 0)
        throw Error("tensor file: bad magic bytes");
    const std::uint64_t head_len = get_u64(bytes, kMagicLen);
    const std::size_t head_pos = kMagicLen + 8;
    if (head_len > bytes.size() - head_pos) throw Error("tensor file: truncated header");

    TensorFile tf;
    try {
        tf.header = nlohmann::json::parse(bytes.substr(head_pos, head_len));
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("tensor file: malformed header: ") + e.what());
    }
    if (tf.header.value("format_version", -1) != kTensorFormatVersion)
        throw Error("tensor file: unsupported format version " +
                    tf.header.value("format_version", nlohmann::json(-1)).dump());

    const std::size_t payload_pos = head_pos + head_len;
    const auto payload_bytes = tf.header.at("payload_bytes").get<std::uint64_t>();
    if (bytes.size() - payload_pos != payload_bytes)
        throw Error("tensor file: truncated payload (expected " + std::to_string(payload_bytes) +
                    " bytes, found " + std::to_string(bytes.size() - payload_pos) + ")");
    const std::string payload = bytes.substr(payload_pos);
    if (crc32_of(payload) != tf.header.at("payload_crc32").get<std::uint32_t>())
        throw Error("tensor file: payload checksum failure");

    for (const auto& e : tf.header.at("tensors")) {
        const auto rows = e.at("rows").get<std::size_t>();
        const auto cols = e.at("cols").get<std::size_t>();
        const auto offset = e.at("offset").get<std::size_t>();
        if (e.at("bytes").get<std::size_t>() != rows * cols * 8 || offset + rows * cols * 8 > payload.size())
            throw Error("tensor file: bad directory entry for " + e.at("name").get<std::string>());
        std::vector<double> data(rows * cols);
        for (std::size_t i = 0; i < data.size(); ++i)
            data[i] = std::bit_cast<double>(get_u64(payload, offset + 8 * i));
        tf.tensors.emplace_back(e.at("name").get<std::string>(), Matrix(rows, cols, std::move(data)));
    }
    return tf;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + path.string());
}

void write_tensor_file(const std::filesystem::path& path, nlohmann::json header,
                       const std::vector<NamedTensor>& tensors) {
    write_file(path, encode_tensor_file(std::move(header), tensors));
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
    return decode_tensor_file(read_file(path));
}

}  // namespace hhsae
