#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hardbatch/common.hpp"

namespace hardbatch {

/// Row-major H x W x 3 RGB bytes.
struct ImageBuffer {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  ImageBuffer() = default;
  ImageBuffer(std::size_t h, std::size_t w, std::uint8_t fill = 0);
  ImageBuffer(std::size_t h, std::size_t w, std::vector<std::uint8_t> data);

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) {
    return pixels[(y * width + x) * 3 + c];
  }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }

  bool operator==(const ImageBuffer&) const = default;
};

struct Rect {
  std::size_t y = 0, x = 0, h = 0, w = 0;
  bool operator==(const Rect&) const = default;
};

/// Probability and shape ranges shared by random erasing and grayscale patch
/// replacement.
struct PatchParams {
  double p = 0.5;
  double area_lo = 0.02;
  double area_hi = 0.4;
  double aspect_lo = 0.3;
  double aspect_hi = 3.33;

  void validate() const;
};

ImageBuffer horizontal_flip(const ImageBuffer& img);

/// Zero-pad every side by `pad`, then crop an H x W window at offset (oy, ox)
/// of the padded image.
ImageBuffer pad_crop_at(const ImageBuffer& img, std::size_t pad, std::size_t oy, std::size_t ox);

/// pad_crop_at with offsets uniform in [0, 2*pad].
ImageBuffer pad_random_crop(const ImageBuffer& img, std::size_t pad, Rng& rng);

/// With probability p, try up to 10 times to place a rectangle with area
/// ratio ~ U(area) and aspect ~ U(aspect) strictly inside the image.
/// Returns nullopt when the coin says no or every attempt fails.
std::optional<Rect> select_patch(std::size_t height, std::size_t width, const PatchParams& params,
                                 Rng& rng);

/// Fills the selected rectangle with the per-image channel mean.
ImageBuffer random_erasing(const ImageBuffer& img, const PatchParams& params, Rng& rng);

/// Replaces each pixel in the selected rectangle by its BT.601 luma
/// Y = round(0.299 R + 0.587 G + 0.114 B), written to all three channels.
ImageBuffer grayscale_patch_replacement(const ImageBuffer& img, const PatchParams& params,
                                        Rng& rng);

std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b);

// Binary PPM (P6, maxval 255).
ImageBuffer decode_ppm(const std::string& bytes);
std::string encode_ppm(const ImageBuffer& img);
ImageBuffer read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const ImageBuffer& img);

/// Training-time pipeline for image-backed datasets: flip, pad-crop, random
/// erasing and grayscale patch replacement, each applied independently.
struct AugmentConfig {
  bool enabled = true;
  double flip_p = 0.5;
  std::size_t pad = 2;
  PatchParams erasing{0.5, 0.02, 0.4, 0.3, 3.33};
  PatchParams grayscale{0.5, 0.02, 0.4, 0.3, 3.33};
};

ImageBuffer augment_image(const ImageBuffer& img, const AugmentConfig& config, Rng& rng);

/// Pixels mapped to [0,1] as a flat row-major H*W*3 vector.
std::vector<double> image_to_features(const ImageBuffer& img);

}  // namespace hardbatch
