#include "earpipe/hashing.hpp"

#include <array>
#include <fstream>

#include <openssl/evp.h>

#include "earpipe/core_types.hpp"

namespace earpipe {

namespace {
EVP_MD_CTX* md(void* p) { return static_cast<EVP_MD_CTX*>(p); }
}  // namespace

Sha256::Sha256() : ctx_(EVP_MD_CTX_new()) {
    EVP_DigestInit_ex(md(ctx_), EVP_sha256(), nullptr);
}

Sha256::~Sha256() { EVP_MD_CTX_free(md(ctx_)); }

Sha256& Sha256::update(std::span<const unsigned char> bytes) {
    EVP_DigestUpdate(md(ctx_), bytes.data(), bytes.size());
    return *this;
}

Sha256& Sha256::update(std::string_view text) {
    EVP_DigestUpdate(md(ctx_), text.data(), text.size());
    return *this;
}

Sha256& Sha256::update_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot read " + file.string() + " for hashing");
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), buf.size());
        EVP_DigestUpdate(md(ctx_), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return *this;
}

std::string Sha256::hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(md(ctx_), digest.data(), &len);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out += kHex[digest[i] >> 4];
        out += kHex[digest[i] & 0xF];
    }
    return out;
}

std::string sha256_hex(std::string_view text) { return Sha256().update(text).hex(); }

std::string sha256_file(const std::filesystem::path& file) {
    return Sha256().update_file(file).hex();
}

}  // namespace earpipe

namespace earpipe {

std::string image_fingerprint(const Image& image) {
    const std::string header = std::to_string(image.width()) + "x" +
                               std::to_string(image.height()) + "x" +
                               std::to_string(image.channels()) + ":";
    auto px = image.pixels();
    return Sha256()
        .update(header)
        .update(std::span<const unsigned char>(px.data(), px.size()))
        .hex();
}

}  // namespace earpipe
