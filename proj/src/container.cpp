#include "seqcox/container.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace seqcox {

namespace {

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_u64(std::string_view in, std::size_t at) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(in[at + i])) << (8 * i);
    return v;
}

}  // namespace

std::string encode_container(std::string_view magic, const Container& c) {
    if (magic.size() != 8) throw std::invalid_argument("container magic must be 8 bytes");
    const std::string header = c.header.dump();
    std::string out(magic);
    put_u64(out, header.size());
    out += header;
    out.reserve(out.size() + 8 * c.payload.size());
    for (double d : c.payload) put_u64(out, std::bit_cast<std::uint64_t>(d));
    return out;
}

Container decode_container(std::string_view bytes, std::string_view magic) {
    if (bytes.size() < 16 || bytes.substr(0, 8) != magic) {
        throw std::runtime_error("not a " + std::string(magic) + " container");
    }
    const std::uint64_t header_len = get_u64(bytes, 8);
    if (16 + header_len > bytes.size()) throw std::runtime_error("container header truncated");
    Container c;
    c.header = nlohmann::json::parse(bytes.substr(16, header_len));
    const std::size_t start = 16 + header_len;
    if ((bytes.size() - start) % 8 != 0) throw std::runtime_error("container payload is not a whole number of float64s");
    c.payload.resize((bytes.size() - start) / 8);
    for (std::size_t i = 0; i < c.payload.size(); ++i) {
        c.payload[i] = std::bit_cast<double>(get_u64(bytes, start + 8 * i));
    }
    return c;
}

void write_container(const std::filesystem::path& path, std::string_view magic, const Container& c) {
    write_file(path, encode_container(magic, c));
}

Container read_container(const std::filesystem::path& path, std::string_view magic) {
    return decode_container(read_file(path), magic);
}

std::string git_blob_hash(std::string_view content) {
    const std::string prefix = "blob " + std::to_string(content.size()) + '\0';
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw std::runtime_error("EVP_MD_CTX_new failed");
    EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
    EVP_DigestUpdate(ctx, prefix.data(), prefix.size());
    EVP_DigestUpdate(ctx, content.data(), content.size());
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(content.data(), std::streamsize(content.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace seqcox
