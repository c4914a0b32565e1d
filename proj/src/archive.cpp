#include "child/archive.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include <openssl/evp.h>

#include "child/common.hpp"

namespace child {

static_assert(std::endian::native == std::endian::little, "archive format assumes a little-endian host");

namespace {

constexpr std::array<char, 8> kMagic{'C', 'H', 'I', 'L', 'D', 'A', 'R', 'C'};
constexpr std::uint32_t kContainerVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& in, const std::string& what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IntegrityError("archive truncated while reading " + what);
  return v;
}

std::string take_bytes(std::istream& in, std::uint64_t n, const std::string& what) {
  constexpr std::uint64_t kLimit = 1ULL << 36;
  if (n > kLimit) throw IntegrityError("archive field too large: " + what);
  std::string s(static_cast<std::size_t>(n), '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw IntegrityError("archive truncated while reading " + what);
  return s;
}

}  // namespace

const NamedArray& Archive::array(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw IntegrityError("archive has no array named '" + name + "'");
}

bool Archive::has_array(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return true;
  }
  return false;
}

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kContainerVersion);
  const std::string meta = archive.metadata.dump();
  put<std::uint64_t>(out, meta.size());
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(archive.arrays.size()));
  for (const auto& a : archive.arrays) {
    std::uint64_t count = 1;
    for (auto d : a.shape) count *= d;
    if (count != a.data.size()) throw std::logic_error("array '" + a.name + "' shape does not match its data");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(a.data.data()), static_cast<std::streamsize>(a.data.size() * sizeof(double)));
  }
  if (!out) throw DataError("write failed: " + path.string());
}

Archive read_archive(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("no such file: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open for reading: " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw IntegrityError("not a CHILDARC container: " + path.string());
  const auto version = take<std::uint32_t>(in, "container version");
  if (version != kContainerVersion) {
    throw IntegrityError("unsupported container version " + std::to_string(version));
  }
  Archive archive;
  const auto meta_len = take<std::uint64_t>(in, "metadata length");
  const std::string meta = take_bytes(in, meta_len, "metadata");
  try {
    archive.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("corrupted metadata block: ") + e.what());
  }
  const auto n_arrays = take<std::uint32_t>(in, "array count");
  for (std::uint32_t k = 0; k < n_arrays; ++k) {
    NamedArray a;
    const auto name_len = take<std::uint32_t>(in, "array name length");
    a.name = take_bytes(in, name_len, "array name");
    const auto rank = take<std::uint32_t>(in, "array rank");
    if (rank > 16) throw IntegrityError("implausible rank for array " + a.name);
    std::uint64_t count = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      a.shape.push_back(take<std::uint64_t>(in, "array shape"));
      count *= a.shape.back();
    }
    const std::string raw = take_bytes(in, count * sizeof(double), "array " + a.name);
    a.data.resize(static_cast<std::size_t>(count));
    std::memcpy(a.data.data(), raw.data(), raw.size());
    archive.arrays.push_back(std::move(a));
  }
  return archive;
}

namespace {

std::string to_hex(const unsigned char* digest, unsigned int len) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xF]);
  }
  return hex;
}

// Incremental SHA-256 over OpenSSL's EVP interface.
class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
      EVP_MD_CTX_free(ctx_);
      throw std::runtime_error("SHA-256 initialization failed");
    }
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_, data, n) != 1) throw std::runtime_error("SHA-256 update failed");
  }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_, digest.data(), &len) != 1) throw std::runtime_error("SHA-256 final failed");
    return to_hex(digest.data(), len);
  }

 private:
  EVP_MD_CTX* ctx_;
};

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string payload_sha256(const std::vector<NamedArray>& arrays) {
  Sha256 h;
  for (const auto& a : arrays) {
    h.update(a.name.data(), a.name.size());
    const char sep = '\0';
    h.update(&sep, 1);
    h.update(a.shape.data(), a.shape.size() * sizeof(std::uint64_t));
    h.update(a.data.data(), a.data.size() * sizeof(double));
  }
  return h.hex();
}

std::string canonical_json(const nlohmann::json& j) { return j.dump(); }

}  // namespace child
