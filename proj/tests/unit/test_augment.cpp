#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "doctest.h"
#include "golden.hpp"
#include "hardbatch/augment.hpp"
#include "oracles.hpp"

using namespace hardbatch;

namespace {

ImageBuffer random_image(std::size_t h, std::size_t w, Rng& rng) {
  ImageBuffer img(h, w);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.next_int(256));
  return img;
}

const std::filesystem::path kGolden = std::filesystem::path(HARDBATCH_TEST_DATA_DIR) / "golden";

}  // namespace

TEST_CASE("luma uses BT.601 weights with rounding") {
  CHECK(luma(255, 0, 0) == 76);
  CHECK(luma(0, 255, 0) == 150);
  CHECK(luma(0, 0, 255) == 29);
  CHECK(luma(255, 255, 255) == 255);
  CHECK(luma(0, 0, 0) == 0);
  CHECK(luma(100, 150, 200) == 141);  // 29.9 + 88.05 + 22.8 = 140.75
}

TEST_CASE("flip is an involution and mirrors columns") {
  Rng rng(1);
  const ImageBuffer img = random_image(5, 7, rng);
  const ImageBuffer f = horizontal_flip(img);
  CHECK(f.at(2, 0, 1) == img.at(2, 6, 1));
  CHECK(horizontal_flip(f) == img);
}

TEST_CASE("pad crop shifts content and zero fills") {
  Rng rng(2);
  const ImageBuffer img = random_image(4, 4, rng);
  CHECK(pad_crop_at(img, 2, 2, 2) == img);
  const ImageBuffer shifted = pad_crop_at(img, 2, 0, 0);
  CHECK(shifted.at(0, 0, 0) == 0);
  CHECK(shifted.at(1, 1, 2) == 0);
  CHECK(shifted.at(2, 2, 1) == img.at(0, 0, 1));
  CHECK(shifted.at(3, 3, 0) == img.at(1, 1, 0));
  CHECK_THROWS_AS(pad_crop_at(img, 1, 3, 0), std::invalid_argument);
}

TEST_CASE("patch selection respects probability and bounds") {
  Rng rng(3);
  PatchParams never{0.0, 0.02, 0.4, 0.3, 3.33};
  for (int i = 0; i < 50; ++i) CHECK_FALSE(select_patch(20, 10, never, rng).has_value());
  PatchParams always{1.0, 0.02, 0.4, 0.3, 3.33};
  int placed = 0;
  for (int i = 0; i < 200; ++i) {
    const auto r = select_patch(20, 10, always, rng);
    if (!r) continue;
    ++placed;
    CHECK(r->h >= 1);
    CHECK(r->w >= 1);
    CHECK(r->y + r->h <= 20);
    CHECK(r->x + r->w <= 10);
    CHECK(r->h < 20);
    CHECK(r->w < 10);
  }
  CHECK(placed > 150);
  PatchParams bad{1.5, 0.02, 0.4, 0.3, 3.33};
  CHECK_THROWS_AS(select_patch(20, 10, bad, rng), std::invalid_argument);
}

TEST_CASE("erasing fills the rectangle with the rounded channel mean") {
  const ImageBuffer src = golden::source_image();
  Rng pick(golden::kErasingSeed), run(golden::kErasingSeed);
  const auto rect = select_patch(src.height, src.width, golden::patch_params(), pick);
  REQUIRE(rect.has_value());
  const ImageBuffer out = random_erasing(src, golden::patch_params(), run);
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0.0;
    for (std::size_t y = 0; y < src.height; ++y)
      for (std::size_t x = 0; x < src.width; ++x) sum += src.at(y, x, c);
    const auto mean = static_cast<int>(std::floor(sum / (src.height * src.width) + 0.5));
    for (std::size_t y = 0; y < src.height; ++y) {
      for (std::size_t x = 0; x < src.width; ++x) {
        const bool inside = y >= rect->y && y < rect->y + rect->h && x >= rect->x && x < rect->x + rect->w;
        CHECK(out.at(y, x, c) == (inside ? mean : src.at(y, x, c)));
      }
    }
  }
}

TEST_CASE("grayscale patch writes luma to every channel inside the rectangle only") {
  const ImageBuffer src = golden::source_image();
  Rng pick(golden::kGrayscaleSeed), run(golden::kGrayscaleSeed);
  const auto rect = select_patch(src.height, src.width, golden::patch_params(), pick);
  REQUIRE(rect.has_value());
  const ImageBuffer out = grayscale_patch_replacement(src, golden::patch_params(), run);
  for (std::size_t y = 0; y < src.height; ++y) {
    for (std::size_t x = 0; x < src.width; ++x) {
      const bool inside = y >= rect->y && y < rect->y + rect->h && x >= rect->x && x < rect->x + rect->w;
      const double r = src.at(y, x, 0), g = src.at(y, x, 1), b = src.at(y, x, 2);
      const auto gray = static_cast<int>(std::floor(0.299 * r + 0.587 * g + 0.114 * b + 0.5));
      for (std::size_t c = 0; c < 3; ++c) CHECK(out.at(y, x, c) == (inside ? gray : src.at(y, x, c)));
    }
  }
}

TEST_CASE("seeded augmentations reproduce the frozen goldens") {
  const ImageBuffer src = golden::source_image();
  CHECK(read_ppm(kGolden / "source.ppm") == src);
  Rng g(golden::kGrayscaleSeed), e(golden::kErasingSeed);
  CHECK(grayscale_patch_replacement(src, golden::patch_params(), g) == read_ppm(kGolden / "grayscale.ppm"));
  CHECK(random_erasing(src, golden::patch_params(), e) == read_ppm(kGolden / "erasing.ppm"));
}

TEST_CASE("ppm encode and decode round trip") {
  Rng rng(4);
  const ImageBuffer img = random_image(3, 5, rng);
  const std::string bytes = encode_ppm(img);
  CHECK(bytes.rfind("P6\n5 3\n255\n", 0) == 0);
  CHECK(decode_ppm(bytes) == img);
  std::string commented = "P6\n# comment\n5 3\n255\n" + bytes.substr(11);
  CHECK(decode_ppm(commented) == img);
}

TEST_CASE("ppm decoding rejects malformed files") {
  CHECK_THROWS_AS(decode_ppm("P3\n1 1\n255\n0 0 0"), std::runtime_error);
  CHECK_THROWS_AS(decode_ppm("P6\n2 2\n255\nabc"), std::runtime_error);
  CHECK_THROWS_AS(decode_ppm("P6\n1 1\n65535\n......"), std::runtime_error);
  CHECK_THROWS_AS(decode_ppm("P6\n0 1\n255\n"), std::runtime_error);
  CHECK_THROWS_AS(decode_ppm("P6\n1\n"), std::runtime_error);
  CHECK_THROWS_AS(read_ppm("/nonexistent/x.ppm"), std::runtime_error);
}

TEST_CASE("disabled augmentation is the identity and features are scaled") {
  Rng rng(5);
  const ImageBuffer img = random_image(4, 4, rng);
  AugmentConfig off;
  off.enabled = false;
  CHECK(augment_image(img, off, rng) == img);
  AugmentConfig on;
  Rng a(6), b(6);
  CHECK(augment_image(img, on, a) == augment_image(img, on, b));
  const auto f = image_to_features(img);
  CHECK(f.size() == 48);
  CHECK(f[5] == doctest::Approx(img.pixels[5] / 255.0));
}
