#include "cffuse/pnm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

namespace cffuse {

namespace {

class HeaderReader {
 public:
  HeaderReader(const std::string& path, const std::vector<char>& bytes) : path_(path), bytes_(bytes) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(path_ + ": " + what + " at byte " + std::to_string(pos_));
  }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  std::size_t number() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) fail("expected integer");
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (v > (1u << 24)) fail("header value too large");
      ++pos_;
    }
    return v;
  }

  std::size_t& pos() { return pos_; }

 private:
  const std::string& path_;
  const std::vector<char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Image8 read_pnm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(path + ": cannot open at byte 0");
  const std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  HeaderReader r(path, bytes);
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) r.fail("expected P5 or P6 magic");
  Image8 img;
  img.channels = bytes[1] == '6' ? 3 : 1;
  r.pos() = 2;
  img.width = r.number();
  img.height = r.number();
  const std::size_t maxval = r.number();
  if (img.width == 0 || img.height == 0) r.fail("zero image dimension");
  if (maxval != 255) r.fail("unsupported maxval " + std::to_string(maxval));
  if (r.pos() >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[r.pos()]))) {
    r.fail("expected single whitespace after header");
  }
  ++r.pos();
  const std::size_t need = img.width * img.height * img.channels;
  if (bytes.size() - r.pos() < need) {
    throw FormatError(path + ": truncated pixel data at byte " + std::to_string(bytes.size()) + " (expected " +
                      std::to_string(r.pos() + need) + " bytes)");
  }
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos()),
                    bytes.begin() + static_cast<std::ptrdiff_t>(r.pos() + need));
  return img;
}

void write_pnm(const std::string& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) throw FormatError(path + ": PNM needs 1 or 3 channels");
  if (image.pixels.size() != image.width * image.height * image.channels) {
    throw FormatError(path + ": pixel buffer size does not match header");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(path + ": cannot open for writing");
  os << (image.channels == 3 ? "P6" : "P5") << '\n' << image.width << ' ' << image.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!os) throw FormatError(path + ": write failed");
}

Image8 to_image8(const Tensor& planar) {
  if (planar.rank() != 3 || (planar.dim(0) != 1 && planar.dim(0) != 3)) {
    throw DimensionError("to_image8: expected [1|3,H,W], got " + shape_str(planar.dims()));
  }
  Image8 img;
  img.channels = planar.dim(0);
  img.height = planar.dim(1);
  img.width = planar.dim(2);
  img.pixels.resize(planar.numel());
  const auto v = planar.data();
  const std::size_t plane = img.width * img.height;
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      const double x = std::clamp(v[c * plane + i], 0.0, 1.0);
      img.pixels[i * img.channels + c] = static_cast<std::uint8_t>(std::lround(x * 255.0));
    }
  }
  return img;
}

Tensor from_image8(const Image8& image) {
  const std::size_t plane = image.width * image.height;
  std::vector<double> v(image.pixels.size());
  for (std::size_t c = 0; c < image.channels; ++c)
    for (std::size_t i = 0; i < plane; ++i) v[c * plane + i] = image.pixels[i * image.channels + c] / 255.0;
  return Tensor({image.channels, image.height, image.width}, std::move(v));
}

Tensor normalize_for_display(const Tensor& plane) {
  const auto v = plane.data();
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double span = *hi - *lo;
  std::vector<double> out(v.size(), 0.0);
  if (span > 0.0) {
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / span;
  }
  Shape dims = plane.dims();
  if (dims.size() == 2) dims.insert(dims.begin(), 1);
  return Tensor(dims, std::move(out));
}

}  // namespace cffuse
