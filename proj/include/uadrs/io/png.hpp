#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace uadrs::io {

/// Interleaved 8-bit image, row-major HxWxC with C in {1, 3}.
struct Image8 {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<uint8_t> pixels;  // height * width * channels
};

/// Reads an 8-bit PNG. Grayscale stays 1-channel, everything else (palette,
/// RGBA, 16-bit) is normalized to 8-bit RGB or gray. Throws IngestionError
/// naming the file on malformed input.
Image8 read_png(const std::filesystem::path& path);

/// Writes an 8-bit PNG (gray or RGB). Throws IoError on failure.
void write_png(const std::filesystem::path& path, const Image8& img);

}  // namespace uadrs::io
