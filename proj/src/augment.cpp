#include "hardbatch/augment.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hardbatch {

namespace {

constexpr int kPlacementAttempts = 10;

void require_valid(const ImageBuffer& img) {
  if (img.height == 0 || img.width == 0 || img.pixels.size() != img.height * img.width * 3) {
    throw std::invalid_argument("image buffer: inconsistent dimensions");
  }
}

}  // namespace

ImageBuffer::ImageBuffer(std::size_t h, std::size_t w, std::uint8_t fill)
    : height(h), width(w), pixels(h * w * 3, fill) {}

ImageBuffer::ImageBuffer(std::size_t h, std::size_t w, std::vector<std::uint8_t> data)
    : height(h), width(w), pixels(std::move(data)) {
  require_valid(*this);
}

void PatchParams::validate() const {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("patch: p must be in [0,1]");
  if (!(area_lo > 0.0 && area_lo <= area_hi && area_hi < 1.0)) {
    throw std::invalid_argument("patch: need 0 < area_lo <= area_hi < 1");
  }
  if (!(aspect_lo > 0.0 && aspect_lo <= aspect_hi)) {
    throw std::invalid_argument("patch: need 0 < aspect_lo <= aspect_hi");
  }
}

ImageBuffer horizontal_flip(const ImageBuffer& img) {
  require_valid(img);
  ImageBuffer out = img;
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(y, img.width - 1 - x, c) = img.at(y, x, c);
  return out;
}

ImageBuffer pad_crop_at(const ImageBuffer& img, std::size_t pad, std::size_t oy, std::size_t ox) {
  require_valid(img);
  if (oy > 2 * pad || ox > 2 * pad) throw std::invalid_argument("pad_crop_at: offset outside padding");
  ImageBuffer out(img.height, img.width, 0);
  for (std::size_t y = 0; y < img.height; ++y) {
    const std::size_t sy = y + oy;  // row in padded coordinates
    if (sy < pad || sy - pad >= img.height) continue;
    for (std::size_t x = 0; x < img.width; ++x) {
      const std::size_t sx = x + ox;
      if (sx < pad || sx - pad >= img.width) continue;
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = img.at(sy - pad, sx - pad, c);
    }
  }
  return out;
}

ImageBuffer pad_random_crop(const ImageBuffer& img, std::size_t pad, Rng& rng) {
  const std::size_t oy = rng.next_int(2 * pad + 1);
  const std::size_t ox = rng.next_int(2 * pad + 1);
  return pad_crop_at(img, pad, oy, ox);
}

std::optional<Rect> select_patch(std::size_t height, std::size_t width, const PatchParams& params,
                                 Rng& rng) {
  params.validate();
  if (rng.next_uniform() >= params.p) return std::nullopt;
  const double area = static_cast<double>(height * width);
  for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
    const double target =
        area * (params.area_lo + (params.area_hi - params.area_lo) * rng.next_uniform());
    const double aspect =
        params.aspect_lo + (params.aspect_hi - params.aspect_lo) * rng.next_uniform();
    const auto h = static_cast<std::size_t>(std::lround(std::sqrt(target * aspect)));
    const auto w = static_cast<std::size_t>(std::lround(std::sqrt(target / aspect)));
    if (h >= 1 && w >= 1 && h < height && w < width) {
      const std::size_t y = rng.next_int(height - h + 1);
      const std::size_t x = rng.next_int(width - w + 1);
      return Rect{y, x, h, w};
    }
  }
  return std::nullopt;
}

ImageBuffer random_erasing(const ImageBuffer& img, const PatchParams& params, Rng& rng) {
  require_valid(img);
  const auto rect = select_patch(img.height, img.width, params, rng);
  if (!rect) return img;
  std::array<std::uint64_t, 3> sums{};
  for (std::size_t i = 0; i < img.pixels.size(); ++i) sums[i % 3] += img.pixels[i];
  const std::uint64_t n = img.height * img.width;
  std::array<std::uint8_t, 3> mean{};
  for (std::size_t c = 0; c < 3; ++c) {
    mean[c] = static_cast<std::uint8_t>((2 * sums[c] + n) / (2 * n));  // round half up
  }
  ImageBuffer out = img;
  for (std::size_t y = rect->y; y < rect->y + rect->h; ++y)
    for (std::size_t x = rect->x; x < rect->x + rect->w; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = mean[c];
  return out;
}

std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const double y = 0.299 * r + 0.587 * g + 0.114 * b;
  return static_cast<std::uint8_t>(std::clamp(std::floor(y + 0.5), 0.0, 255.0));
}

ImageBuffer grayscale_patch_replacement(const ImageBuffer& img, const PatchParams& params,
                                        Rng& rng) {
  require_valid(img);
  const auto rect = select_patch(img.height, img.width, params, rng);
  if (!rect) return img;
  ImageBuffer out = img;
  for (std::size_t y = rect->y; y < rect->y + rect->h; ++y) {
    for (std::size_t x = rect->x; x < rect->x + rect->w; ++x) {
      const std::uint8_t v = luma(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = v;
    }
  }
  return out;
}

ImageBuffer decode_ppm(const std::string& bytes) {
  std::size_t pos = 0;
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* field) {
    skip_space_and_comments();
    std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw std::runtime_error(std::string("ppm: missing ") + field);
    return static_cast<std::size_t>(std::stoull(bytes.substr(start, pos - start)));
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw std::runtime_error("ppm: not a binary P6 file");
  }
  pos = 2;
  const std::size_t w = read_uint("width");
  const std::size_t h = read_uint("height");
  const std::size_t maxval = read_uint("maxval");
  if (maxval != 255) throw std::runtime_error("ppm: only maxval 255 is supported");
  if (w == 0 || h == 0) throw std::runtime_error("ppm: zero dimension");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw std::runtime_error("ppm: malformed header");
  }
  ++pos;
  const std::size_t n = w * h * 3;
  if (bytes.size() - pos < n) throw std::runtime_error("ppm: truncated pixel data");
  std::vector<std::uint8_t> px(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                               bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return ImageBuffer(h, w, std::move(px));
}

std::string encode_ppm(const ImageBuffer& img) {
  require_valid(img);
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(img.pixels.begin(), img.pixels.end());
  return out;
}

ImageBuffer read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("ppm: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return decode_ppm(ss.str());
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_ppm(const std::filesystem::path& path, const ImageBuffer& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("ppm: cannot write " + path.string());
  const std::string bytes = encode_ppm(img);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ImageBuffer augment_image(const ImageBuffer& img, const AugmentConfig& config, Rng& rng) {
  if (!config.enabled) return img;
  ImageBuffer out = rng.next_uniform() < config.flip_p ? horizontal_flip(img) : img;
  out = pad_random_crop(out, config.pad, rng);
  out = random_erasing(out, config.erasing, rng);
  return grayscale_patch_replacement(out, config.grayscale, rng);
}

std::vector<double> image_to_features(const ImageBuffer& img) {
  std::vector<double> f(img.pixels.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = img.pixels[i] / 255.0;
  return f;
}

}  // namespace hardbatch
