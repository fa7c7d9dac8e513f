#include <cstring>
#include <filesystem>
#include <stdexcept>

#include "doctest.h"
#include "hardbatch/checkpoint.hpp"

using namespace hardbatch;

namespace {

Checkpoint sample_checkpoint(bool with_velocity) {
  Rng rng(3);
  Checkpoint c;
  c.params = init_params(rng, {5, {4, 3}, 2, 6, 3});
  for (double& b : c.params.scene_bias) b = rng.next_normal();
  if (with_velocity) {
    c.velocity = c.params.zeros_like();
    for (auto& t : c.velocity->tensors())
      for (double& v : t.values) v = rng.next_normal();
  }
  c.config_hash = 0x0123456789abcdefULL;
  c.epoch = 7;
  c.step = 91;
  c.normalize_embeddings = true;
  return c;
}

template <typename T>
T read_at(const std::string& bytes, std::size_t offset) {
  T v;
  std::memcpy(&v, bytes.data() + offset, sizeof(T));
  return v;
}

}  // namespace

TEST_CASE("checkpoint round trip is exact") {
  for (bool vel : {false, true}) {
    const Checkpoint c = sample_checkpoint(vel);
    const std::string bytes = encode_checkpoint(c);
    CHECK(decode_checkpoint(bytes) == c);
    CHECK(encode_checkpoint(decode_checkpoint(bytes)) == bytes);
  }
}

TEST_CASE("checkpoint header layout") {
  const Checkpoint c = sample_checkpoint(true);
  const std::string bytes = encode_checkpoint(c);
  CHECK(bytes.substr(0, 8) == "HBCKPT01");
  CHECK(read_at<std::uint32_t>(bytes, 8) == 1);
  CHECK(read_at<std::uint32_t>(bytes, 12) == 3);
  CHECK(read_at<std::uint64_t>(bytes, 16) == c.config_hash);
  CHECK(read_at<std::uint64_t>(bytes, 24) == 7);
  CHECK(read_at<std::uint64_t>(bytes, 32) == 91);
  CHECK(read_at<std::uint64_t>(bytes, 40) == 3);
  CHECK(read_at<std::uint64_t>(bytes, 48) == 4);
  CHECK(read_at<std::uint64_t>(bytes, 56) == 5);
  const std::size_t heads = 48 + 16 * 3;
  CHECK(read_at<std::uint64_t>(bytes, heads) == 6);
  CHECK(read_at<std::uint64_t>(bytes, heads + 8) == 3);
  CHECK(read_at<double>(bytes, heads + 16) == c.params.layers[0].weight(0, 0));
  CHECK(bytes.size() == heads + 16 + 2 * 8 * c.params.parameter_count());
}

TEST_CASE("corrupt checkpoints are rejected") {
  const std::string bytes = encode_checkpoint(sample_checkpoint(false));
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad_magic), std::runtime_error);
  std::string bad_version = bytes;
  bad_version[8] = 2;
  CHECK_THROWS_AS(decode_checkpoint(bad_version), std::runtime_error);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), std::runtime_error);
  CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), std::runtime_error);
  std::string broken_chain = bytes;
  broken_chain[72] = 9;  // second layer's input no longer matches the first layer's output
  CHECK_THROWS_AS(decode_checkpoint(broken_chain), std::runtime_error);
  CHECK_THROWS_AS(decode_checkpoint(""), std::runtime_error);
}

TEST_CASE("checkpoint files") {
  const auto path = std::filesystem::temp_directory_path() / "hardbatch_unit_ckpt.bin";
  const Checkpoint c = sample_checkpoint(true);
  save_checkpoint(path, c);
  CHECK(load_checkpoint(path) == c);
  CHECK_THROWS_AS(load_checkpoint(path.string() + ".missing"), std::runtime_error);
}
