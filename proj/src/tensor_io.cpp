#include "pktdt/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "pktdt/error.hpp"

namespace pktdt {
namespace {

constexpr char kMagic[4] = {'P', 'K', 'D', 'T'};

template <typename T>
void put_le(std::string& out, T v) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(std::string bytes, std::string origin) : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }

  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw DataError(origin_ + ": truncated tensor container at byte " + std::to_string(pos_));
    }
  }

  std::string bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_container(const std::filesystem::path& path, const TensorContainer& c) {
  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, kContainerVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.kind));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.meta.size()));
  for (auto m : c.meta) put_le<std::int64_t>(out, m);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.tensors.count()));
  for (const auto& t : c.tensors.tensors()) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.rows()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.cols()));
    for (double v : t.value.data()) {
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

TensorContainer read_container(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open model file " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes), path.string());

  if (r.get_bytes(4) != std::string(kMagic, 4)) throw DataError(path.string() + ": not a tensor container");
  const auto version = r.get<std::uint32_t>();
  if (version != kContainerVersion) {
    throw DataError(path.string() + ": unsupported container version " + std::to_string(version));
  }
  TensorContainer c;
  c.kind = static_cast<ContainerKind>(r.get<std::uint32_t>());
  const auto n_meta = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) c.meta.push_back(r.get<std::int64_t>());
  const auto n_tensors = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const auto name_len = r.get<std::uint16_t>();
    std::string name = r.get_bytes(name_len);
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    auto& m = c.tensors.add(std::move(name), rows, cols);
    for (auto& v : m.data()) v = std::bit_cast<float>(r.get<std::uint32_t>());
  }
  return c;
}

}  // namespace pktdt
