#pragma once

#include <string>
#include <vector>

#include "sketchmatch/common.hpp"

namespace sketchmatch {

enum class Modality { sketch, photo };

inline const char* modality_name(Modality m) {
  return m == Modality::sketch ? "sketch" : "photo";
}

Modality modality_from_name(const std::string& name);

// Pixel values in [0, 1], stored channel-major ([c][y][x]) to match the
// convolution input layout. Sketches are dark strokes on a light background;
// grayscale files are replicated to three channels at load so one tokenizer
// signature serves both modalities.
struct Image {
  std::size_t height = 0, width = 0, channels = 0;
  std::vector<real> pixels;

  real at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * height + y) * width + x];
  }
  real& at(std::size_t c, std::size_t y, std::size_t x) {
    return pixels[(c * height + y) * width + x];
  }

  static Image filled(std::size_t h, std::size_t w, std::size_t c, real v);
};

// Binary portable pixmaps: P5 (grayscale) and P6 (RGB), maxval 255.
// Grayscale loads as channels == 1; write_pnm picks P5 or P6 from the
// channel count.
Image read_pnm(const std::string& path);
void write_pnm(const Image& img, const std::string& path);

// Replicates a single-channel image to `channels`; identity if it already
// has that many.
Image with_channels(const Image& img, std::size_t channels);

}  // namespace sketchmatch
