#include "cef/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <stdexcept>

namespace cef {

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> raw{};
  unsigned int raw_len = 0;
  if (EVP_Digest(data.data(), data.size(), raw.data(), &raw_len, EVP_sha256(),
                 nullptr) != 1) {
    throw std::runtime_error("sha256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.resize(static_cast<std::size_t>(raw_len) * 2);
  for (unsigned int i = 0; i < raw_len; ++i) {
    hex[2 * i] = kHex[raw[i] >> 4];
    hex[2 * i + 1] = kHex[raw[i] & 0x0F];
  }
  return hex;
}

}  // namespace cef
