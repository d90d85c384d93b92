#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace seqcox {

/// One-file container: 8-byte magic, little-endian u64 header length, UTF-8
/// JSON header, then a little-endian float64 payload running to end of file.
struct Container {
    nlohmann::json header;
    std::vector<double> payload;
};

void write_container(const std::filesystem::path& path, std::string_view magic, const Container& c);
Container read_container(const std::filesystem::path& path, std::string_view magic);

std::string encode_container(std::string_view magic, const Container& c);
Container decode_container(std::string_view bytes, std::string_view magic);

/// Git blob object id (SHA-1 over "blob <size>\0" + content), lowercase hex.
std::string git_blob_hash(std::string_view content);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace seqcox
