#include "cffuse/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace cffuse {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
void put_le(std::ostream& os, T value) {
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <class T>
T get_le(std::istream& is, const char* what) {
  std::array<unsigned char, sizeof(T)> bytes{};
  const auto offset = static_cast<long long>(is.tellg());
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw FormatError(std::string("truncated ") + what + " at byte " + std::to_string(offset));
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  if (t.rank() > 255) throw FormatError("rank " + std::to_string(t.rank()) + " exceeds format limit");
  os.write("CFT1", 4);
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.dims()) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  for (double v : t.data()) put_le<double>(os, v);
}

Tensor read_tensor(std::istream& is) {
  char magic[4];
  const auto offset = static_cast<long long>(is.tellg());
  if (!is.read(magic, 4) || std::memcmp(magic, "CFT1", 4) != 0) {
    throw FormatError("bad tensor magic at byte " + std::to_string(offset));
  }
  const auto rank = get_le<std::uint8_t>(is, "rank");
  Shape dims(rank);
  for (auto& d : dims) {
    d = get_le<std::uint32_t>(is, "dim");
    if (d == 0) throw FormatError("zero dim in tensor record at byte " + std::to_string(offset));
  }
  std::vector<double> values(numel_of(dims));
  for (auto& v : values) v = get_le<double>(is, "payload");
  return Tensor(std::move(dims), std::move(values));
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  write_tensor(os, t);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  try {
    return read_tensor(is);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void save_bundle(const std::string& path, const std::map<std::string, Tensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os.write("CFCK", 4);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(os, t);
  }
  if (!os) throw FormatError("write failed for " + path);
}

std::map<std::string, Tensor> load_bundle(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  try {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "CFCK", 4) != 0) throw FormatError("bad checkpoint magic at byte 0");
    const auto count = get_le<std::uint32_t>(is, "entry count");
    std::map<std::string, Tensor> out;
    for (std::uint32_t i = 0; i < count; ++i) {
      const auto len = get_le<std::uint32_t>(is, "name length");
      std::string name(len, '\0');
      const auto offset = static_cast<long long>(is.tellg());
      if (!is.read(name.data(), len)) throw FormatError("truncated name at byte " + std::to_string(offset));
      out.emplace(std::move(name), read_tensor(is));
    }
    return out;
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace cffuse
