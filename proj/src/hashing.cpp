#include "dreambox/hashing.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <array>
#include <stdexcept>

namespace dreambox {

namespace {

std::array<unsigned char, SHA256_DIGEST_LENGTH> sha256_raw(const void* data, std::size_t size)
{
  std::array<unsigned char, SHA256_DIGEST_LENGTH> digest{};
  SHA256(static_cast<const unsigned char*>(data), size, digest.data());
  return digest;
}

std::string to_hex(std::span<const unsigned char> bytes)
{
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char b : bytes) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xf]);
  }
  return out;
}

} // namespace

std::string sha256_hex(std::string_view bytes)
{
  return to_hex(sha256_raw(bytes.data(), bytes.size()));
}

std::string sha256_hex(std::span<const std::uint8_t> bytes)
{
  return to_hex(sha256_raw(bytes.data(), bytes.size()));
}

std::uint64_t sha256_u64(std::string_view bytes)
{
  auto d = sha256_raw(bytes.data(), bytes.size());
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v = (v << 8) | d[i];
  return v;
}

std::string base64_encode(std::span<const std::uint8_t> bytes)
{
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string base64_encode(std::string_view bytes)
{
  return base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

std::string base64_decode(std::string_view text)
{
  if (text.size() % 4 != 0)
    throw std::invalid_argument("base64 input length is not a multiple of 4");
  std::string out(3 * text.size() / 4, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0)
    throw std::invalid_argument("invalid base64 input");
  // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=')
    ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=')
    ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

} // namespace dreambox
