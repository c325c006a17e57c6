#include "sketchmatch/image.hpp"

#include <cmath>
#include <fstream>

namespace sketchmatch {

Modality modality_from_name(const std::string& name) {
  if (name == "sketch") return Modality::sketch;
  if (name == "photo") return Modality::photo;
  fail("modality: expected 'sketch' or 'photo', got '" + name + "'");
}

Image Image::filled(std::size_t h, std::size_t w, std::size_t c, real v) {
  Image img;
  img.height = h;
  img.width = w;
  img.channels = c;
  img.pixels.assign(h * w * c, v);
  return img;
}

namespace {

int read_pnm_int(std::istream& is) {
  // Skips whitespace and '#' comments, per the netpbm header grammar.
  int c = is.get();
  while (c != EOF && (std::isspace(c) || c == '#')) {
    if (c == '#')
      while (c != EOF && c != '\n') c = is.get();
    c = is.get();
  }
  int value = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = is.get();
  }
  require(any, "pnm: malformed header");
  return value;
}

}  // namespace

Image read_pnm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "pnm: cannot open '" + path + "'");
  char p = 0, kind = 0;
  is.get(p);
  is.get(kind);
  require(p == 'P' && (kind == '5' || kind == '6'),
          "pnm: '" + path + "' is not a binary P5/P6 pixmap");
  const std::size_t channels = kind == '5' ? 1 : 3;
  const std::size_t w = static_cast<std::size_t>(read_pnm_int(is));
  const std::size_t h = static_cast<std::size_t>(read_pnm_int(is));
  const int maxval = read_pnm_int(is);
  require(maxval == 255, "pnm: only maxval 255 is supported in '" + path + "'");
  // The single whitespace byte after maxval was consumed by read_pnm_int.
  std::vector<unsigned char> raw(w * h * channels);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  require(is.gcount() == static_cast<std::streamsize>(raw.size()),
          "pnm: truncated pixel data in '" + path + "'");
  Image img = Image::filled(h, w, channels, 0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < channels; ++c)
        img.at(c, y, x) = static_cast<real>(raw[(y * w + x) * channels + c]) / real(255);
  return img;
}

void write_pnm(const Image& img, const std::string& path) {
  require(img.channels == 1 || img.channels == 3,
          "pnm: images must have 1 or 3 channels, got " + std::to_string(img.channels));
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "pnm: cannot open '" + path + "' for writing");
  os << (img.channels == 1 ? "P5" : "P6") << "\n"
     << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> raw(img.width * img.height * img.channels);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) {
        real v = img.at(c, y, x);
        v = std::min(real(1), std::max(real(0), v));
        raw[(y * img.width + x) * img.channels + c] =
            static_cast<unsigned char>(std::lround(static_cast<double>(v) * 255.0));
      }
  os.write(reinterpret_cast<const char*>(raw.data()),
           static_cast<std::streamsize>(raw.size()));
  require(os.good(), "pnm: write failed for '" + path + "'");
}

Image with_channels(const Image& img, std::size_t channels) {
  if (img.channels == channels) return img;
  require(img.channels == 1,
          "image: cannot expand " + std::to_string(img.channels) + " channels to " +
              std::to_string(channels));
  Image out = Image::filled(img.height, img.width, channels, 0);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(0, y, x);
  return out;
}

}  // namespace sketchmatch
